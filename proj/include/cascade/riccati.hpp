#pragma once

#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "cascade/adjoint.hpp"
#include "cascade/model.hpp"
#include "cascade/policy.hpp"
#include "cascade/regression.hpp"
#include "cascade/segments.hpp"
#include "cascade/simulate.hpp"

namespace cascade {

struct RicStep {
    bool present = false;
    Standardizer std;
    std::vector<double> lo, hi;
    std::vector<std::vector<double>> p_coef, phi_coef, zp_coef, zphi_coef;  // [survivor][nb]
    std::vector<double> p_mean, phi_mean, zp_mean, zphi_mean;               // [survivor]
    double resid_rms = 0;
    double cond_log10 = 0;
    long n_samples = 0;
    bool synthetic = false;
    double stitch_sum_p = 0, stitch_sum_phi = 0;
    long stitch_count = 0;
};

struct RicRegime {
    PolyBasis basis;
    int first = 0, last = 0;
    std::vector<RicStep> steps;
    bool low_confidence = false;
    bool synthetic = false;
    const RicStep* step_at(int m) const;
};

// Regression representation of the per-node pair (P, phi) and their
// martingale terms. The optimal feedback is a_i = P_i(t,x) x_i - phi_i(t,x):
// P carries the sign of the slope of -Y, so P = -K relative to the classical
// positive Riccati gain K.
class RiccatiSolution {
  public:
    RiccatiSolution() = default;

    const RegimeTree& tree() const { return tree_; }
    TimeGrid grid() const { return grid_; }
    const std::vector<RicRegime>& regimes() const { return regimes_; }
    bool paper_generators() const { return paper_; }
    bool glued() const { return glued_; }

    double evaluate_p(const Regime& regime, int node, double t, const double* x) const;
    double evaluate_phi(const Regime& regime, int node, double t, const double* x) const;
    double evaluate_zp(const Regime& regime, int node, double t, const double* x) const;
    double evaluate_zphi(const Regime& regime, int node, double t, const double* x) const;

    double mean_residual() const;

    friend RiccatiSolution solve_riccati(const ProblemSpec&, const RegimeTree&,
                                         const Policy&, std::span<const PathBatch* const>,
                                         bool, bool);
    friend RiccatiSolution read_riccati_tables_csv(const ProblemSpec&, const std::string&);

  private:
    const ProblemSpec* spec_ = nullptr;
    RegimeTree tree_;
    TimeGrid grid_;
    std::vector<RicRegime> regimes_;
    bool paper_ = false;
    bool glued_ = false;

    const RicStep* locate(const Regime& regime, int node, double t, int* survivor_idx,
                          int* step_index) const;
};

/// Backward solve of the recursive Riccati system over the regime tree. The
/// default generators are the ones consistent with the adjoint system and the
/// classical LQR limit; `paper_generators` switches to the printed forms for
/// comparison runs.
RiccatiSolution solve_riccati(const ProblemSpec& spec, const RegimeTree& tree,
                              const Policy& policy,
                              std::span<const PathBatch* const> batches,
                              bool glued = false, bool paper_generators = false);

Policy make_riccati_policy(const ProblemSpec& spec,
                           std::shared_ptr<const RiccatiSolution> sol,
                           bool glued_kind = false);

struct PhiEstimate {
    double mean = 0;
    double std_error = 0;
    long n = 0;
};

/// Monte Carlo evaluation of the closed-form conditional-expectation formula
/// for phi via the exponential auxiliary process; cross-validates the
/// regression tables.
PhiEstimate phi_closed_form(const ProblemSpec& spec, const RegimeTree& tree,
                            const RiccatiSolution& sol, const OccupancyMap& occ,
                            int regime_id, int node, int step);

struct CrosscheckRow {
    std::string regime;
    int node = 0;  // 1-based
    long samples = 0;
    double mean_abs = 0;
    double max_abs = 0;
};

/// Per regime/node agreement between the Riccati feedback P x - phi and the
/// adjoint feedback -Y over sampled path states.
std::vector<CrosscheckRow> crosscheck_vs_adjoint(const ProblemSpec& spec,
                                                 const RegimeTree& tree,
                                                 const RiccatiSolution& ric,
                                                 const AdjointSolution& adj,
                                                 std::span<const PathBatch* const> batches);

/// `riccati.csv`: path-averaged P, phi, Z values per (regime, node, t).
void write_riccati_csv(std::ostream& os, const RiccatiSolution& sol);
/// Full regression tables (restart file for later pipeline stages).
void write_riccati_tables_csv(std::ostream& os, const RiccatiSolution& sol);
RiccatiSolution read_riccati_tables_csv(const ProblemSpec& spec, const std::string& path);

}  // namespace cascade
