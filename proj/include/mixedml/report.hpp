#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "mixedml/error.hpp"
#include "mixedml/mlmc.hpp"
#include "mixedml/splitting.hpp"

namespace mixedml {

constexpr const char* kToolVersion = "0.1.0";

inline nlohmann::json to_json(const CostModel& c) {
  return {{"c_mnrm", c.c_mnrm}, {"c_tl", c.c_tl}, {"c_s", c.c_s}, {"c_ssa", c.c_ssa}, {"k1", c.k1()}, {"b", c.b}};
}

inline CostModel cost_model_from_json(const nlohmann::json& j) {
  CostModel c;
  try {
    c.c_mnrm = j.at("c_mnrm").get<double>();
    c.c_tl = j.at("c_tl").get<double>();
    c.c_s = j.at("c_s").get<double>();
    c.c_ssa = j.at("c_ssa").get<double>();
    c.b = j.at("b").get<std::array<double, 4>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("cost model: ") + e.what());
  }
  if (!(c.c_mnrm > 0 && c.c_tl > 0 && c.c_s > 0 && c.c_ssa > 0))
    throw std::invalid_argument("cost model: every cost must be positive");
  return c;
}

inline nlohmann::json to_json(const MlmcPlan& p) {
  return {{"tol", p.tol},
          {"confidence", p.confidence},
          {"c_a", p.c_a},
          {"theta_split", p.theta_split},
          {"dt0", p.dt0},
          {"refinement", p.refinement},
          {"L", p.L},
          {"delta", p.delta},
          {"samples", p.samples},
          {"g_scale", p.g_scale},
          {"eps_exit", p.eps_exit},
          {"eps_disc", p.eps_disc},
          {"eps_stat", p.eps_stat},
          {"cv", p.cv},
          {"predicted_work", p.predicted_work}};
}

inline nlohmann::json to_json(const LevelStats& s) {
  return {{"level", s.level},
          {"dt", s.dt},
          {"delta", s.delta},
          {"samples", s.samples},
          {"mean", s.mean},
          {"variance", s.variance},
          {"variance_rel_se", s.variance_rel_se},
          {"psi", s.psi},
          {"e_disc", s.e_disc},
          {"e_disc_se", s.e_disc_se},
          {"n_tl_mean", s.n_tl_mean},
          {"n_tl_second", s.n_tl_second},
          {"n_exact_mean", s.n_exact_mean},
          {"exits", s.exits},
          {"modeled_work", s.modeled_work}};
}

inline nlohmann::json to_json(const std::vector<LevelStats>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& s : v) a.push_back(to_json(s));
  return a;
}

inline nlohmann::json to_json(const ErrorReport& e) {
  return {{"e_exit", e.e_exit},
          {"e_disc", std::abs(e.e_disc)},
          {"e_disc_signed", e.e_disc},
          {"e_disc_se", e.e_disc_se},
          {"e_stat", e.e_stat},
          {"total", e.total()}};
}

// Wall-clock times live under "timing" so that everything else is a pure
// function of the inputs and the seed.
inline nlohmann::json estimate_report(const std::vector<std::string>& argv, const std::string& model,
                                      std::uint64_t seed, std::size_t workers, const CostModel& cost,
                                      const PlanResult& planned, const EstimateResult& res) {
  nlohmann::json timing = {{"estimate_seconds", res.wall_seconds}};
  nlohmann::json per_level = nlohmann::json::array();
  for (const auto& s : res.levels) per_level.push_back(s.wall_seconds);
  timing["level_seconds"] = per_level;
  nlohmann::json j = {{"tool", "mixedml"},
                      {"version", kToolVersion},
                      {"command", argv},
                      {"model", model},
                      {"seed", seed},
                      {"workers", workers},
                      {"cost_model", to_json(cost)},
                      {"plan", to_json(planned.plan)},
                      {"pilot", to_json(planned.pilot)},
                      {"levels", to_json(res.levels)},
                      {"value", res.value},
                      {"error", to_json(res.error)},
                      {"work",
                       {{"modeled", res.modeled_work},
                        {"predicted", res.predicted_work},
                        {"optimal", res.optimal_work}}},
                      {"timing", timing}};
  if (planned.plan.cv)
    j["control_variate"] = {{"expectation", res.cv_expectation}, {"variance_reduction", res.cv_reduction}};
  return j;
}

}  // namespace mixedml
