#pragma once

#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "cascade/hamiltonian.hpp"
#include "cascade/model.hpp"
#include "cascade/policy.hpp"
#include "cascade/regression.hpp"
#include "cascade/segments.hpp"
#include "cascade/simulate.hpp"

namespace cascade {

struct AdjStep {
    bool present = false;
    Standardizer std;
    std::vector<double> lo, hi;
    std::vector<std::vector<double>> y_coef;  // [survivor index][basis]
    std::vector<std::vector<double>> z_coef;
    double resid_rms = 0;
    double cond_log10 = 0;
    long n_samples = 0;
    bool synthetic = false;
    double stitch_sum = 0;  // sum over default exits of |fit - terminal target|
    long stitch_count = 0;
};

struct AdjRegime {
    PolyBasis basis;
    int first = 0, last = 0;  // tables cover grid steps [first, last)
    std::vector<AdjStep> steps;
    bool low_confidence = false;
    bool synthetic = false;
    const AdjStep* step_at(int m) const;  // nearest present step, nullptr if none
};

// Regression representation of the adjoint pair (Y, diagonal Z), one table
// per (regime, grid step). The Y value carries the one-step driver term so
// evaluate() returns the value at the left grid point of t's interval.
class AdjointSolution {
  public:
    AdjointSolution() = default;

    const RegimeTree& tree() const { return tree_; }
    TimeGrid grid() const { return grid_; }
    const std::vector<AdjRegime>& regimes() const { return regimes_; }
    std::vector<AdjRegime>& regimes_mut() { return regimes_; }
    bool glued() const { return glued_; }

    /// y and z_diag are length-n outputs; defaulted components are 0.
    void evaluate(const Regime& regime, double t, const double* x, double* y,
                  double* z_diag, bool* extrapolated = nullptr) const;

    /// Sample-weighted mean regression residual over all tables.
    double mean_residual() const;

    friend AdjointSolution solve_adjoint(const ProblemSpec&, const RegimeTree&,
                                         const ModelFunctions&, const Policy&,
                                         std::span<const PathBatch* const>, bool);
    friend AdjointSolution read_adjoint_csv(const ProblemSpec&, const std::string&,
                                            const std::string&);

  private:
    const ProblemSpec* spec_ = nullptr;
    RegimeTree tree_;
    TimeGrid grid_;
    ModelFunctions model_;
    Policy under_policy_;  // policy the BSDE was solved under (generic drivers)
    std::vector<AdjRegime> regimes_;
    bool glued_ = false;
};

/// Backward-recursive regression solve of the adjoint system over the regime
/// tree, deepest regimes first. `glued` drops the child continuation in the
/// terminal stitching (each regime solved against its own exit cost alone).
AdjointSolution solve_adjoint(const ProblemSpec& spec, const RegimeTree& tree,
                              const ModelFunctions& model, const Policy& policy,
                              std::span<const PathBatch* const> batches,
                              bool glued = false);

Policy make_adjoint_policy(const ProblemSpec& spec,
                           std::shared_ptr<const AdjointSolution> sol,
                           bool glued_kind = false);

/// Mean pathwise one-step residual |Y_m - (Y_{m+1} + dt dH/dx - Z dW)| on
/// held-out paths; shrinks with the training path count.
double discrete_bsde_residual(const ProblemSpec& spec, const RegimeTree& tree,
                              const AdjointSolution& sol, const Policy& policy,
                              std::span<const PathBatch* const> heldout);

void write_adjoint_csv(std::ostream& os, const AdjointSolution& sol);
void write_adjoint_diag_csv(std::ostream& os, const AdjointSolution& sol);
AdjointSolution read_adjoint_csv(const ProblemSpec& spec, const std::string& table_path,
                                 const std::string& diag_path);

}  // namespace cascade
