#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "cascade/adjoint.hpp"
#include "cascade/picard.hpp"
#include "cascade/riccati.hpp"

namespace cascade {

struct CheckRow {
    std::string check;
    std::string instance;
    double statistic = 0;
    double threshold = 0;
    bool pass = false;
    long n_samples = 0;
};

struct VerificationReport {
    std::vector<CheckRow> rows;
    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return true;
    }
};

void write_verify_csv(std::ostream& os, const VerificationReport& report);

/// Scale used for trial controls and perturbation directions: the initial
/// distance to the root barriers, floored at 1.
double state_scale(const ProblemSpec& spec);

/// Central finite differences of H against both gradients at random points.
std::vector<CheckRow> check_gradients_fd(const ProblemSpec& spec, const RegimeTree& tree,
                                         const ModelFunctions& model,
                                         const std::string& instance,
                                         int points_per_regime = 100, double tol = 1e-6);

/// First-order optimality of `policy` against the adjoint solved under it:
/// interior condition (unbounded) and trial-control inequality rows.
std::vector<CheckRow> check_necessary(const ProblemSpec& spec, const RegimeTree& tree,
                                      const ModelFunctions& model, const Policy& policy,
                                      const AdjointSolution& adjoint,
                                      const std::string& instance);

/// Convexity of G and H (midpoint sampling) plus the grid-argmin property of
/// the policy control; includes the built-in negative-weight probe row.
std::vector<CheckRow> check_sufficient_conditions(const ProblemSpec& spec,
                                                  const RegimeTree& tree,
                                                  const ModelFunctions& model,
                                                  const Policy& policy,
                                                  const AdjointSolution& adjoint,
                                                  const std::string& instance,
                                                  int sample_count = 200);

struct CompareResult {
    double mean_diff = 0;  // mean of J_a - J_b over paired paths
    double stderr_diff = 0;
    long n = 0;
};

/// Paired cost comparison under common random numbers.
CompareResult compare_policies(const ProblemSpec& spec, const RegimeTree& tree,
                               const ModelFunctions& model, const Policy& a,
                               const Policy& b, long num_paths, uint64_t seed);

/// J(policy) vs J(policy + h*direction), paired, for a battery of constant
/// and time-bump directions scaled by state_scale().
std::vector<CheckRow> perturbation_test(const ProblemSpec& spec, const RegimeTree& tree,
                                        const ModelFunctions& model, const Policy& policy,
                                        const std::vector<double>& magnitudes,
                                        const std::string& instance);

/// Partition / frozen-component / terminal-stitching invariants.
std::vector<CheckRow> check_structure(const ProblemSpec& spec, const RegimeTree& tree,
                                      const PathBatch& batch,
                                      const AdjointSolution* adj,
                                      const RiccatiSolution* ric,
                                      const std::string& instance);

struct VerifyInputs {
    Policy policy;
    std::shared_ptr<AdjointSolution> adjoint_under_policy;
    std::shared_ptr<RiccatiSolution> riccati;  // may be null
    std::shared_ptr<PathBatch> batch;          // paths under `policy`
    Policy glued_policy;
    bool has_glued = false;
};

VerificationReport run_all_checks(const ProblemSpec& spec, const RegimeTree& tree,
                                  const ModelFunctions& model,
                                  const std::string& instance, const VerifyInputs& in);

}  // namespace cascade
