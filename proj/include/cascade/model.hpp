#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascade/piecewise.hpp"
#include "cascade/regimes.hpp"

namespace cascade {

/// Resolved coefficients of one surviving node within one regime.
struct NodeCoeffs {
    PiecewiseConstant mu;     ///< drift slope
    PiecewiseConstant b;      ///< drift intercept
    PiecewiseConstant sigma;  ///< volatility slope
    PiecewiseConstant nu;     ///< volatility intercept
    PiecewiseConstant v;      ///< stopping barrier
    double gamma = 0.0;       ///< cost weight
};

/// Flat snapshot of the coefficients active at one instant.
struct CoeffSnapshot {
    double mu = 0, b = 0, sigma = 0, nu = 0, v = 0, gamma = 0;
};

/// Declared (possibly partial) coefficients for one node in a config block.
struct PartialNodeCoeffs {
    std::optional<PiecewiseConstant> mu, b, sigma, nu, v;
    std::optional<double> gamma;
};

struct RegimeBlock {
    std::map<int, PartialNodeCoeffs> nodes;  // 0-based node index
};

struct ControlBounds {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool bounded() const { return std::isfinite(lo) || std::isfinite(hi); }
    double clamp(double a) const { return a < lo ? lo : (a > hi ? hi : a); }
};

struct MonteCarloConfig {
    long num_paths = 1;
    double dt = 0.01;
    uint64_t seed = 0;
    int basis_degree = 2;
    double ridge = 1e-8;
    bool bridge_correction = false;
    int max_picard = 5;
};

// Complete problem instance. Immutable after load_spec: coefficient
// inheritance is resolved eagerly so concurrent readers never mutate state.
class ProblemSpec {
  public:
    int n = 1;
    double horizon = 1.0;
    std::vector<double> x0;
    std::vector<ControlBounds> bounds;                  // size n
    std::map<std::vector<int>, RegimeBlock> declared;   // key: sorted 0-based defaulted list
    MonteCarloConfig mc;

    /// Resolved coefficients of `node` (0-based, surviving) in `regime`.
    const NodeCoeffs& coeff(const Regime& regime, int node) const;

    /// Number of uniform grid steps and the effective step size.
    int num_steps() const;
    double dt_eff() const { return horizon / num_steps(); }

    /// Checks every invariant; throws ValidationError naming the violation.
    void validate() const;

    /// Called by load_spec after validate(); fills the resolution cache.
    void resolve();

  private:
    // cache key: (defaulted mask, node)
    std::map<std::pair<uint32_t, int>, NodeCoeffs> resolved_;
};

/// Values of all surviving nodes of `regime` active at time t.
std::vector<CoeffSnapshot> coefficients_at(const ProblemSpec& spec,
                                           const Regime& regime, double t);

// Flat pointer table over (regime id, node) for the hot loops; avoids the
// map lookup of ProblemSpec::coeff per step.
class CoeffTable {
  public:
    CoeffTable() = default;
    CoeffTable(const ProblemSpec& spec, const RegimeTree& tree) : n_(spec.n) {
        ptrs_.assign(static_cast<size_t>(tree.num_active()) * static_cast<size_t>(spec.n), nullptr);
        for (int id = 0; id < tree.num_active(); ++id)
            for (int i : tree.regime(id).survivors())
                ptrs_[static_cast<size_t>(id) * n_ + static_cast<size_t>(i)] =
                    &spec.coeff(tree.regime(id), i);
    }
    const NodeCoeffs& at(int regime_id, int node) const {
        return *ptrs_[static_cast<size_t>(regime_id) * n_ + static_cast<size_t>(node)];
    }

  private:
    size_t n_ = 0;
    std::vector<const NodeCoeffs*> ptrs_;
};

ProblemSpec load_spec(const std::string& text);
ProblemSpec load_spec_file(const std::string& path);

/// Canonical writer: sorted keys, shortest round-trip decimals.
std::string emit_spec(const ProblemSpec& spec);

}  // namespace cascade
