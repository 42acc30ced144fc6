#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mixedml/model.hpp"

namespace mixedml {

// Model files are JSON:
//   {"name": ..., "species": [{"name": "X", "initial": 100}],
//    "reactions": [{"reactants": {"X": 1}, "products": {}, "rate": 1.0}],
//    "final_time": 1.0,
//    "observable": {"kind": "coordinate", "spec": "X"}}
// Observable kinds: coordinate (spec = species name), linear (spec = {name: weight}),
// polynomial (spec = [{"coef": c, "powers": {name: p}}]).

namespace detail {

inline std::pair<std::size_t, std::size_t> line_and_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline int integral_count(const nlohmann::json& v, const std::string& where) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double f = v.get<double>();
    if (std::floor(f) == f) return static_cast<int>(f);
  }
  throw ModelError(where + ": stoichiometric multiplicity must be an integer");
}

}  // namespace detail

inline ReactionNetwork parse_model(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_and_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ModelError("syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                     e.what());
  }

  try {
    if (!doc.is_object()) throw ModelError("model must be a JSON object");
    const std::string name = doc.value("name", std::string("model"));

    std::vector<std::string> labels;
    State x0;
    if (!doc.contains("species") || !doc["species"].is_array()) throw ModelError("missing 'species' array");
    for (const auto& s : doc["species"]) {
      labels.push_back(s.at("name").get<std::string>());
      const auto& init = s.at("initial");
      x0.push_back(detail::integral_count(init, "species '" + labels.back() + "'"));
    }
    auto lookup = [&](const std::string& label, const std::string& where) {
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
      throw ModelError(where + ": unknown species '" + label + "'");
    };

    if (!doc.contains("reactions") || !doc["reactions"].is_array()) throw ModelError("missing 'reactions' array");
    if (doc["reactions"].empty()) throw ModelError("reaction list is empty");
    std::vector<Reaction> reactions;
    for (std::size_t j = 0; j < doc["reactions"].size(); ++j) {
      const auto& rj = doc["reactions"][j];
      const std::string where = "reaction " + std::to_string(j);
      Reaction r;
      auto side = [&](const char* key, std::vector<std::pair<int, int>>& out) {
        if (!rj.contains(key)) return;
        for (const auto& [label, mult] : rj[key].items()) {
          const int m = detail::integral_count(mult, where);
          if (m < 0) throw ModelError(where + ": negative multiplicity for '" + label + "'");
          if (m > 0) out.emplace_back(lookup(label, where), m);
        }
        std::sort(out.begin(), out.end());
      };
      side("reactants", r.reactants);
      side("products", r.products);
      if (!rj.contains("rate") || !rj["rate"].is_number()) throw ModelError(where + ": missing numeric 'rate'");
      r.rate = rj["rate"].get<double>();
      if (!(r.rate >= 0.0)) throw ModelError(where + ": rate constant must be non-negative");
      reactions.push_back(std::move(r));
    }

    const double final_time = doc.at("final_time").get<double>();

    Observable g = Observable::coordinate(0);
    if (doc.contains("observable")) {
      const auto& ob = doc["observable"];
      const std::string kind = ob.at("kind").get<std::string>();
      const auto& spec = ob.at("spec");
      if (kind == "coordinate") {
        g = Observable::coordinate(lookup(spec.get<std::string>(), "observable"));
      } else if (kind == "linear") {
        std::vector<double> w(labels.size(), 0.0);
        for (const auto& [label, weight] : spec.items())
          w[static_cast<std::size_t>(lookup(label, "observable"))] = weight.get<double>();
        g = Observable::linear(std::move(w));
      } else if (kind == "polynomial") {
        std::vector<Observable::Monomial> terms;
        for (const auto& t : spec) {
          Observable::Monomial m;
          m.coef = t.at("coef").get<double>();
          for (const auto& [label, p] : t.at("powers").items())
            m.powers.emplace_back(lookup(label, "observable"), detail::integral_count(p, "observable"));
          std::sort(m.powers.begin(), m.powers.end());
          terms.push_back(std::move(m));
        }
        g = Observable::polynomial(std::move(terms));
      } else {
        throw ModelError("observable: unknown kind '" + kind + "'");
      }
    }
    return ReactionNetwork(name, std::move(labels), std::move(x0), std::move(reactions), final_time, std::move(g));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model: ") + e.what());
  }
}

inline nlohmann::json model_to_json(const ReactionNetwork& net) {
  using nlohmann::json;
  json doc;
  doc["name"] = net.name();
  json species = json::array();
  for (std::size_t i = 0; i < net.num_species(); ++i)
    species.push_back({{"name", net.species()[i]}, {"initial", net.initial_state()[i]}});
  doc["species"] = species;
  json reactions = json::array();
  for (const auto& r : net.reactions()) {
    json lhs = json::object();
    json rhs = json::object();
    for (auto [i, m] : r.reactants) lhs[net.species()[static_cast<std::size_t>(i)]] = m;
    for (auto [i, m] : r.products) rhs[net.species()[static_cast<std::size_t>(i)]] = m;
    reactions.push_back({{"reactants", lhs}, {"products", rhs}, {"rate", r.rate}});
  }
  doc["reactions"] = reactions;
  doc["final_time"] = net.final_time();
  const Observable& g = net.observable();
  switch (g.kind()) {
    case Observable::Kind::coordinate:
      doc["observable"] = {{"kind", "coordinate"}, {"spec", net.species()[static_cast<std::size_t>(g.index())]}};
      break;
    case Observable::Kind::linear: {
      json w = json::object();
      for (std::size_t i = 0; i < g.weights().size(); ++i)
        if (g.weights()[i] != 0.0) w[net.species()[i]] = g.weights()[i];
      doc["observable"] = {{"kind", "linear"}, {"spec", w}};
      break;
    }
    case Observable::Kind::polynomial: {
      json terms = json::array();
      for (const auto& m : g.terms()) {
        json powers = json::object();
        for (auto [i, p] : m.powers) powers[net.species()[static_cast<std::size_t>(i)]] = p;
        terms.push_back({{"coef", m.coef}, {"powers", powers}});
      }
      doc["observable"] = {{"kind", "polynomial"}, {"spec", terms}};
      break;
    }
  }
  return doc;
}

inline std::string serialize_model(const ReactionNetwork& net) { return model_to_json(net).dump(2); }

}  // namespace mixedml
