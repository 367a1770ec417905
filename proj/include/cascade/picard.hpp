#pragma once

#include <memory>
#include <vector>

#include "cascade/adjoint.hpp"
#include "cascade/riccati.hpp"

namespace cascade {

enum class Method { adjoint, riccati };

struct SolveOptions {
    Method method = Method::riccati;
    bool glued = false;
    bool paper_generators = false;
    int max_picard = 5;
    double policy_tol = 1e-5;  // sup-norm stop on successive feedbacks
    // Relaxation of the adjoint update a <- (1-d) a + d (-Y). The plain
    // update need not contract when paths carry no cross-sectional spread
    // (deterministic instances make the regressed feedback open-loop), while
    // the half step does.
    double damping = 0.5;
    // When > 0, picard rounds run on this many paths and a full-size solve
    // under the converged policy follows.
    long warmup_paths = 0;
};

struct SolveOutput {
    Policy policy;
    std::shared_ptr<AdjointSolution> adjoint;
    std::shared_ptr<RiccatiSolution> riccati;
    std::vector<CostEstimate> j_history;  // cost of the round-start policy
    std::shared_ptr<PathBatch> batch;     // paths of the final solved round
    int rounds = 0;
};

// Picard iteration policy -> BSDE solve -> improved feedback, stopped when
// the estimated cost stops decreasing by more than one paired standard error
// or the feedback stops moving. The noise substreams are shared across
// rounds, so successive cost estimates are common-random-number paired.
SolveOutput solve_problem(const ProblemSpec& spec, const RegimeTree& tree,
                          const ModelFunctions& model, const SolveOptions& opts);

}  // namespace cascade
