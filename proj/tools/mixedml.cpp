#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mixedml/mixedml.hpp"

using namespace mixedml;

namespace {

struct Common {
  std::string model = "decay";
  std::uint64_t seed = 1;
  std::string out;
  std::size_t workers = 1;
  std::string costs;
};

ReactionNetwork load_model(const std::string& spec) {
  for (const auto& name : builtin_model_names())
    if (name == spec) return builtin_model(name);
  std::ifstream in(spec);
  if (!in) throw std::runtime_error("cannot read model '" + spec + "' (not a builtin name or readable file)");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

CostModel load_costs(const std::string& path) {
  if (path.empty()) return CostModel{};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read cost file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("cost file '" + path + "': " + e.what());
  }
  return cost_model_from_json(j);
}

// Writes to --out or stdout.
void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write '" + out + "'");
  f << text;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--model", c.model, "builtin model name or path to a model JSON file");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output file (stdout if omitted)");
  cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--costs", c.costs, "cost model JSON from the calibrate subcommand");
}

struct PlannerFlags {
  double tol = 0.05;
  double confidence = 0.95;
  double dt0 = 0.0;
  int levels_max = 8;
  int levels = -1;
  std::string split = "cost";
  double pareto_threshold = 0.95;
  std::string cv = "off";
  double theta = 2.0 / 3.0;
  bool calibrate = false;
};

void add_planner(CLI::App* cmd, PlannerFlags& p) {
  cmd->add_option("--confidence", p.confidence, "confidence level")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--dt0", p.dt0, "coarsest mesh size (default T/4)");
  cmd->add_option("--levels-max", p.levels_max, "deepest level the planner may use");
  cmd->add_option("--levels", p.levels, "fix L instead of growing it from the bias estimate");
  cmd->add_option("--split", p.split, "split rule")->check(CLI::IsMember({"cost", "pareto"}));
  cmd->add_option("--pareto-threshold", p.pareto_threshold, "share of penalized activity to tau-leap")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--cv", p.cv, "level-0 control variate")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--theta", p.theta, "share of the tolerance given to the statistical error")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--calibrate", p.calibrate, "measure the cost model on this machine first");
}

MlmcConfig make_config(const PlannerFlags& p, const Common& c) {
  MlmcConfig cfg;
  cfg.tol = p.tol;
  cfg.confidence = p.confidence;
  cfg.dt0 = p.dt0;
  cfg.levels_max = p.levels_max;
  cfg.fixed_levels = p.levels;
  cfg.split.rule = p.split == "pareto" ? SplitRule::pareto : SplitRule::cost;
  cfg.split.pareto_threshold = p.pareto_threshold;
  cfg.cv = p.cv == "on";
  cfg.theta_split = p.theta;
  cfg.workers = c.workers;
  return cfg;
}

CostModel resolve_costs(const ReactionNetwork& net, const PlannerFlags& p, const Common& c) {
  if (p.calibrate) return calibrate_costs(net);
  return load_costs(c.costs);
}

int run_models(const Common& c) {
  if (c.model.empty() || c.model == "list") {
    std::ostringstream s;
    s << "name,species,reactions,final_time\n";
    for (const auto& name : builtin_model_names()) {
      const auto net = builtin_model(name);
      s << name << ',' << net.num_species() << ',' << net.num_reactions() << ',' << net.final_time() << '\n';
    }
    emit(c.out, s.str());
    return 0;
  }
  emit(c.out, serialize_model(load_model(c.model)) + "\n");
  return 0;
}

int run_simulate(const Common& c, const std::string& method, double dt, double delta, std::size_t paths) {
  const auto net = load_model(c.model);
  const std::size_t d = net.num_species();
  const CostModel cost = load_costs(c.costs);
  std::vector<Path> out(paths);
  const Mesh mesh = Mesh::with_spacing(net.final_time(), dt > 0.0 ? dt : net.final_time() / 4.0);
  MixedConfig cfg;
  cfg.delta = delta;
  cfg.cost = cost;
  if (method == "exact") cfg.force = ForcedMethod::exact;
  if (method == "tau-leap") cfg.force = ForcedMethod::tau_leap_fixed;
  parallel_for(paths, c.workers, [&](std::size_t i) {
    const StreamKey key{c.seed, 0, static_cast<std::uint32_t>(i), 0};
    if (method == "ssa") {
      Stream s(key);
      out[i] = ssa_path(net, net.initial_state(), net.final_time(), s);
    } else if (method == "mnrm") {
      ChannelStreams streams(key, net.num_reactions());
      out[i] = mnrm_path(net, net.initial_state(), net.final_time(), streams);
    } else {
      out[i] = simulate_mixed_path(net, net.initial_state(), mesh, cfg, key);
    }
  });
  std::ostringstream s;
  s << "path,exited,final_time,n_tl,n_exact,n_splits";
  for (const auto& name : net.species()) s << ',' << name;
  s << ",g\n";
  for (std::size_t i = 0; i < paths; ++i) {
    const Path& p = out[i];
    s << i << ',' << (p.exited ? 1 : 0) << ',' << fmt(p.final_time) << ',' << p.n_tl << ',' << p.n_exact << ','
      << p.n_splits;
    for (std::size_t k = 0; k < d; ++k) s << ',' << p.final_state[k];
    s << ',' << (p.exited ? 0.0 : net.observable()(p.final_state)) << '\n';
  }
  emit(c.out, s.str());
  return 0;
}

int run_couple(const Common& c, const PlannerFlags& p, int level, double delta, std::size_t paths) {
  const auto net = load_model(c.model);
  if (level < 1) throw std::invalid_argument("couple: --level must be at least 1");
  MlmcConfig cfg = make_config(p, c);
  const CostModel cost = load_costs(c.costs);
  LevelSampler sampler(net, cfg, cost);
  const auto samples = sampler.run(level, delta, delta, c.seed, 0, paths, false);
  std::ostringstream s;
  s << "pair,g_coarse,g_fine,diff,fine_exited\n";
  for (std::size_t i = 0; i < samples.size(); ++i)
    s << i << ',' << fmt(samples[i].g_coarse) << ',' << fmt(samples[i].g_fine) << ',' << fmt(samples[i].diff) << ','
      << (samples[i].exited ? 1 : 0) << '\n';
  emit(c.out, s.str());
  const auto st = summarize_level(samples, level, sampler.mesh(level).max_spacing(), delta);
  std::cerr << "level " << level << " dt " << st.dt << " mean diff " << st.mean << " variance " << st.variance
            << '\n';
  return 0;
}

int run_calibrate(const Common& c) {
  const auto net = load_model(c.model);
  const CostModel cost = calibrate_costs(net);
  emit(c.out, to_json(cost).dump(2) + "\n");
  return 0;
}

int run_estimate(const Common& c, const PlannerFlags& p, const std::vector<std::string>& argv,
                 const std::string& levels_csv) {
  const auto net = load_model(c.model);
  const MlmcConfig cfg = make_config(p, c);
  const CostModel cost = resolve_costs(net, p, c);
  CvContext cv;
  if (cfg.cv) cv = make_cv_context(net, cfg, c.seed);
  const auto planned = optimize_plan(net, cfg, cost, c.seed, cfg.cv ? &cv : nullptr);
  const auto res = estimate(net, cfg, planned.plan, cost, c.seed, cfg.cv ? &cv : nullptr);
  emit(c.out, estimate_report(argv, c.model, c.seed, c.workers, cost, planned, res).dump(2) + "\n");
  if (!levels_csv.empty()) {
    std::ostringstream s;
    s << "level,dt,samples,mean,variance,psi,e_disc,e_disc_se,n_tl_mean,n_exact_mean\n";
    for (const auto& st : res.levels)
      s << st.level << ',' << fmt(st.dt) << ',' << st.samples << ',' << fmt(st.mean) << ',' << fmt(st.variance) << ','
        << fmt(st.psi) << ',' << fmt(st.e_disc) << ',' << fmt(st.e_disc_se) << ',' << fmt(st.n_tl_mean) << ','
        << fmt(st.n_exact_mean) << '\n';
    emit(levels_csv, s.str());
  }
  return 0;
}

int run_study(const Common& c, const PlannerFlags& p, const std::vector<double>& tols, std::size_t ssa_paths) {
  const auto net = load_model(c.model);
  const MlmcConfig cfg = make_config(p, c);
  const CostModel cost = resolve_costs(net, p, c);
  const auto rows = complexity_study(net, tols, cfg, cost, c.seed, ssa_paths);
  std::ostringstream s;
  s << "tol,L,predicted_work,realized_work,ssa_work,ratio,value,e_stat,e_total\n";
  for (const auto& r : rows)
    s << fmt(r.tol) << ',' << r.L << ',' << fmt(r.predicted_work) << ',' << fmt(r.realized_work) << ','
      << fmt(r.ssa_work) << ',' << fmt(r.ratio) << ',' << fmt(r.value) << ',' << fmt(r.e_stat) << ','
      << fmt(r.e_total) << '\n';
  emit(c.out, s.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixed exact/tau-leap multilevel Monte Carlo for stochastic reaction networks"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);

  Common common;
  PlannerFlags planner;

  Common listing;
  listing.model.clear();
  auto* models = app.add_subcommand("models", "list builtin models or print one as JSON");
  models->add_option("--model", listing.model, "model to print");
  models->add_option("--out", listing.out, "output file");

  std::string method = "mixed";
  double dt = 0.0;
  double delta = 1e-3;
  std::size_t paths = 1000;
  auto* simulate = app.add_subcommand("simulate", "simulate independent paths, CSV of terminal states");
  add_common(simulate, common);
  simulate->add_option("--method", method, "path method")
      ->check(CLI::IsMember({"ssa", "mnrm", "mixed", "exact", "tau-leap"}));
  simulate->add_option("--dt", dt, "mesh size for mixed paths (default T/4)");
  simulate->add_option("--delta", delta, "one-step exit probability bound")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--paths", paths, "number of paths");

  int level = 1;
  auto* couple = app.add_subcommand("couple", "coupled pairs of levels (level-1, level), CSV of differences");
  add_common(couple, common);
  couple->add_option("--level", level, "fine level of the pair");
  couple->add_option("--dt0", planner.dt0, "coarsest mesh size (default T/4)");
  couple->add_option("--delta", delta, "one-step exit probability bound")->check(CLI::Range(0.0, 1.0));
  couple->add_option("--paths", paths, "number of pairs");

  auto* calibrate = app.add_subcommand("calibrate", "measure the machine-dependent cost model");
  add_common(calibrate, common);

  std::string levels_csv;
  auto* est = app.add_subcommand("estimate", "estimate E[g(X(T))] to a relative tolerance");
  add_common(est, common);
  add_planner(est, planner);
  est->add_option("--tol", planner.tol, "relative tolerance")->check(CLI::Range(0.0, 1.0));
  est->add_option("--levels-csv", levels_csv, "per-level statistics CSV");

  std::vector<double> tols{0.1, 0.05, 0.025};
  std::size_t ssa_paths = 200;
  auto* study = app.add_subcommand("convergence-study", "work versus tolerance, CSV");
  add_common(study, common);
  add_planner(study, planner);
  study->add_option("--tols", tols, "decreasing relative tolerances")->delimiter(',');
  study->add_option("--ssa-paths", ssa_paths, "SSA paths for the baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (models->parsed()) return run_models(listing);
    if (simulate->parsed()) return run_simulate(common, method, dt, delta, paths);
    if (couple->parsed()) return run_couple(common, planner, level, delta, paths);
    if (calibrate->parsed()) return run_calibrate(common);
    if (est->parsed()) return run_estimate(common, planner, args, levels_csv);
    if (study->parsed()) return run_study(common, planner, tols, ssa_paths);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
