#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mixedml {

// Molecule counts, one entry per species.
using State = std::vector<std::int64_t>;

struct Reaction {
  // (species index, multiplicity) pairs, sorted by species index.
  std::vector<std::pair<int, int>> reactants;
  std::vector<std::pair<int, int>> products;
  double rate = 0.0;
  std::vector<std::int64_t> nu;  // products - reactants, length d
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Observable g(x). Coordinate and linear kinds are linear functionals; the
// polynomial kind is a sparse sum of monomials.
class Observable {
 public:
  enum class Kind { coordinate, linear, polynomial };

  struct Monomial {
    double coef = 0.0;
    std::vector<std::pair<int, int>> powers;  // (species, exponent)
  };

  static Observable coordinate(int species) {
    Observable g;
    g.kind_ = Kind::coordinate;
    g.index_ = species;
    return g;
  }
  static Observable linear(std::vector<double> weights) {
    Observable g;
    g.kind_ = Kind::linear;
    g.weights_ = std::move(weights);
    return g;
  }
  static Observable polynomial(std::vector<Monomial> terms) {
    Observable g;
    g.kind_ = Kind::polynomial;
    g.terms_ = std::move(terms);
    return g;
  }

  Kind kind() const { return kind_; }
  bool is_linear() const { return kind_ != Kind::polynomial; }
  int index() const { return index_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Monomial>& terms() const { return terms_; }

  template <typename T>
  double operator()(std::span<const T> x) const {
    switch (kind_) {
      case Kind::coordinate:
        return static_cast<double>(x[static_cast<std::size_t>(index_)]);
      case Kind::linear: {
        double s = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * static_cast<double>(x[i]);
        return s;
      }
      case Kind::polynomial: {
        double s = 0.0;
        for (const auto& m : terms_) {
          double v = m.coef;
          for (auto [i, p] : m.powers) v *= std::pow(static_cast<double>(x[static_cast<std::size_t>(i)]), p);
          s += v;
        }
        return s;
      }
    }
    return 0.0;
  }
  double operator()(const State& x) const { return (*this)(std::span<const std::int64_t>(x)); }
  double operator()(const std::vector<double>& x) const { return (*this)(std::span<const double>(x)); }

  template <typename T>
  std::vector<double> gradient(std::span<const T> x) const {
    std::vector<double> grad(x.size(), 0.0);
    switch (kind_) {
      case Kind::coordinate:
        grad[static_cast<std::size_t>(index_)] = 1.0;
        break;
      case Kind::linear:
        for (std::size_t i = 0; i < weights_.size(); ++i) grad[i] = weights_[i];
        break;
      case Kind::polynomial:
        for (const auto& m : terms_) {
          for (std::size_t k = 0; k < m.powers.size(); ++k) {
            const auto [ik, pk] = m.powers[k];
            if (pk == 0) continue;
            double v = m.coef * pk * std::pow(static_cast<double>(x[static_cast<std::size_t>(ik)]), pk - 1);
            for (std::size_t l = 0; l < m.powers.size(); ++l) {
              if (l == k) continue;
              const auto [il, pl] = m.powers[l];
              v *= std::pow(static_cast<double>(x[static_cast<std::size_t>(il)]), pl);
            }
            grad[static_cast<std::size_t>(ik)] += v;
          }
        }
        break;
    }
    return grad;
  }
  std::vector<double> gradient(const State& x) const { return gradient(std::span<const std::int64_t>(x)); }

 private:
  Kind kind_ = Kind::coordinate;
  int index_ = 0;
  std::vector<double> weights_;
  std::vector<Monomial> terms_;
};

namespace detail {

// x (x-1) ... (x-m+1)
inline double falling_factorial(double x, int m) {
  double v = 1.0;
  for (int k = 0; k < m; ++k) v *= (x - k);
  return v;
}

// d/dx of falling_factorial(x, m)
inline double falling_factorial_derivative(double x, int m) {
  double sum = 0.0;
  for (int k = 0; k < m; ++k) {
    double term = 1.0;
    for (int l = 0; l < m; ++l)
      if (l != k) term *= (x - l);
    sum += term;
  }
  return sum;
}

}  // namespace detail

// Mass-action reaction network. Immutable once built; share freely across
// threads.
class ReactionNetwork {
 public:
  ReactionNetwork() = default;

  ReactionNetwork(std::string name, std::vector<std::string> species, State x0,
                  std::vector<Reaction> reactions, double final_time, Observable observable)
      : name_(std::move(name)),
        species_(std::move(species)),
        x0_(std::move(x0)),
        reactions_(std::move(reactions)),
        final_time_(final_time),
        observable_(std::move(observable)) {
    validate();
  }

  const std::string& name() const { return name_; }
  std::size_t num_species() const { return species_.size(); }
  std::size_t num_reactions() const { return reactions_.size(); }
  const std::vector<std::string>& species() const { return species_; }
  const std::vector<Reaction>& reactions() const { return reactions_; }
  const Reaction& reaction(std::size_t j) const { return reactions_[j]; }
  const std::vector<std::int64_t>& nu(std::size_t j) const { return reactions_[j].nu; }
  const State& initial_state() const { return x0_; }
  double final_time() const { return final_time_; }
  const Observable& observable() const { return observable_; }

  int species_index(const std::string& label) const {
    for (std::size_t i = 0; i < species_.size(); ++i)
      if (species_[i] == label) return static_cast<int>(i);
    return -1;
  }

  // a_j(x) for a lattice state. Zero whenever x + nu_j would leave Z_+^d.
  double propensity(std::size_t j, std::span<const std::int64_t> x) const {
    const Reaction& r = reactions_[j];
    double a = r.rate;
    for (auto [i, m] : r.reactants) {
      const std::int64_t xi = x[static_cast<std::size_t>(i)];
      if (xi < m) return 0.0;
      a *= detail::falling_factorial(static_cast<double>(xi), m);
    }
    return a;
  }

  void propensities(std::span<const std::int64_t> x, std::span<double> out) const {
    for (std::size_t j = 0; j < reactions_.size(); ++j) out[j] = propensity(j, x);
  }
  std::vector<double> propensities(const State& x) const {
    std::vector<double> a(reactions_.size());
    propensities(x, a);
    return a;
  }

  // Polynomial propensity at a real-valued state, clamped at zero.
  double propensity_relaxed(std::size_t j, std::span<const double> z) const {
    const Reaction& r = reactions_[j];
    double a = r.rate;
    for (auto [i, m] : r.reactants) a *= detail::falling_factorial(z[static_cast<std::size_t>(i)], m);
    return a > 0.0 ? a : 0.0;
  }

  // Row-major J x d matrix of d a_j / d x_i for the polynomial form.
  template <typename T>
  std::vector<double> propensity_jacobian(std::span<const T> x) const {
    const std::size_t d = num_species();
    std::vector<double> jac(reactions_.size() * d, 0.0);
    for (std::size_t j = 0; j < reactions_.size(); ++j) {
      const Reaction& r = reactions_[j];
      for (std::size_t k = 0; k < r.reactants.size(); ++k) {
        const auto [ik, mk] = r.reactants[k];
        double v = r.rate * detail::falling_factorial_derivative(static_cast<double>(x[static_cast<std::size_t>(ik)]), mk);
        for (std::size_t l = 0; l < r.reactants.size(); ++l) {
          if (l == k) continue;
          const auto [il, ml] = r.reactants[l];
          v *= detail::falling_factorial(static_cast<double>(x[static_cast<std::size_t>(il)]), ml);
        }
        jac[j * d + static_cast<std::size_t>(ik)] = v;
      }
    }
    return jac;
  }
  std::vector<double> propensity_jacobian(const State& x) const {
    return propensity_jacobian(std::span<const std::int64_t>(x));
  }

 private:
  void validate() {
    if (species_.empty()) throw ModelError("model needs at least one species");
    if (reactions_.empty()) throw ModelError("model needs at least one reaction");
    if (x0_.size() != species_.size()) throw ModelError("initial state has wrong dimension");
    for (std::size_t i = 0; i < x0_.size(); ++i)
      if (x0_[i] < 0) throw ModelError("initial count of species '" + species_[i] + "' is negative");
    if (!(final_time_ > 0.0) || !std::isfinite(final_time_)) throw ModelError("final_time must be positive");
    const int d = static_cast<int>(species_.size());
    for (std::size_t j = 0; j < reactions_.size(); ++j) {
      Reaction& r = reactions_[j];
      const std::string where = "reaction " + std::to_string(j);
      if (!(r.rate >= 0.0) || !std::isfinite(r.rate)) throw ModelError(where + ": rate must be a finite non-negative number");
      r.nu.assign(species_.size(), 0);
      for (auto [i, m] : r.reactants) {
        if (i < 0 || i >= d) throw ModelError(where + ": unknown species");
        if (m < 0) throw ModelError(where + ": negative multiplicity");
        r.nu[static_cast<std::size_t>(i)] -= m;
      }
      for (auto [i, m] : r.products) {
        if (i < 0 || i >= d) throw ModelError(where + ": unknown species");
        if (m < 0) throw ModelError(where + ": negative multiplicity");
        r.nu[static_cast<std::size_t>(i)] += m;
      }
      bool nonzero = false;
      for (auto v : r.nu) nonzero = nonzero || v != 0;
      if (!nonzero) throw ModelError(where + ": stoichiometric vector is zero");
    }
    switch (observable_.kind()) {
      case Observable::Kind::coordinate:
        if (observable_.index() < 0 || observable_.index() >= d) throw ModelError("observable: unknown species");
        break;
      case Observable::Kind::linear:
        if (observable_.weights().size() != species_.size()) throw ModelError("observable: weight vector has wrong dimension");
        break;
      case Observable::Kind::polynomial:
        for (const auto& m : observable_.terms())
          for (auto [i, p] : m.powers)
            if (i < 0 || i >= d || p < 0) throw ModelError("observable: bad monomial");
        break;
    }
  }

  std::string name_;
  std::vector<std::string> species_;
  State x0_;
  std::vector<Reaction> reactions_;
  double final_time_ = 1.0;
  Observable observable_;
};

// Convenience builder: reactants/products given by species name.
struct ReactionSpec {
  std::map<std::string, int> reactants;
  std::map<std::string, int> products;
  double rate = 0.0;
};

inline ReactionNetwork make_network(std::string name, const std::vector<std::pair<std::string, std::int64_t>>& species,
                                    const std::vector<ReactionSpec>& reactions, double final_time,
                                    const std::string& observed_species) {
  std::vector<std::string> labels;
  State x0;
  for (const auto& [label, count] : species) {
    labels.push_back(label);
    x0.push_back(count);
  }
  auto lookup = [&](const std::string& label) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return static_cast<int>(i);
    throw ModelError("unknown species '" + label + "'");
  };
  std::vector<Reaction> rs;
  for (const auto& spec : reactions) {
    Reaction r;
    for (const auto& [label, m] : spec.reactants) r.reactants.emplace_back(lookup(label), m);
    for (const auto& [label, m] : spec.products) r.products.emplace_back(lookup(label), m);
    std::sort(r.reactants.begin(), r.reactants.end());
    std::sort(r.products.begin(), r.products.end());
    r.rate = spec.rate;
    rs.push_back(std::move(r));
  }
  return ReactionNetwork(std::move(name), std::move(labels), std::move(x0), std::move(rs), final_time,
                         Observable::coordinate(lookup(observed_species)));
}

// Intracellular virus kinetics, X = (G, S, E, V), g = V.
inline ReactionNetwork virus_model() {
  return make_network("virus", {{"G", 0}, {"S", 0}, {"E", 10}, {"V", 0}},
                      {
                          {{{"E", 1}}, {{"E", 1}, {"G", 1}}, 1.0},
                          {{{"G", 1}}, {{"E", 1}}, 0.025},
                          {{{"E", 1}}, {{"E", 1}, {"S", 1}}, 1000.0},
                          {{{"G", 1}, {"S", 1}}, {{"V", 1}}, 7.5e-6},
                          {{{"E", 1}}, {}, 0.25},
                          {{{"S", 1}}, {}, 2.0},
                      },
                      20.0, "V");
}

// X1 <-> X2 -> X3 -> 0 with a fast reversible pair, g = X3.
inline ReactionNetwork stiff_model(double c1 = 100.0, double c2 = 1e4, double c3 = 10.0, double c4 = 0.1) {
  return make_network("stiff", {{"X1", 1000}, {"X2", 0}, {"X3", 0}},
                      {
                          {{{"X1", 1}}, {{"X2", 1}}, c1},
                          {{{"X2", 1}}, {{"X1", 1}}, c2},
                          {{{"X2", 1}}, {{"X3", 1}}, c3},
                          {{{"X3", 1}}, {}, c4},
                      },
                      1.0, "X3");
}

// X -> 0 at rate c x.
inline ReactionNetwork decay_model(double c = 1.0, std::int64_t x0 = 100, double final_time = 1.0) {
  return make_network("decay", {{"X", x0}}, {{{{"X", 1}}, {}, c}}, final_time, "X");
}

// 0 -> X at constant rate.
inline ReactionNetwork birth_model(double rate = 5.0, std::int64_t x0 = 0, double final_time = 2.0) {
  return make_network("birth", {{"X", x0}}, {{{}, {{"X", 1}}, rate}}, final_time, "X");
}

inline std::vector<std::string> builtin_model_names() { return {"virus", "stiff", "decay", "birth"}; }

inline ReactionNetwork builtin_model(const std::string& name) {
  if (name == "virus") return virus_model();
  if (name == "stiff") return stiff_model();
  if (name == "decay") return decay_model();
  if (name == "birth") return birth_model();
  throw ModelError("unknown builtin model '" + name + "'");
}

}  // namespace mixedml
