#pragma once

#include <ostream>
#include <vector>

#include "cascade/hamiltonian.hpp"
#include "cascade/model.hpp"
#include "cascade/numeric.hpp"
#include "cascade/policy.hpp"
#include "cascade/regimes.hpp"
#include "cascade/rng.hpp"

namespace cascade {

/// Uniform grid on [0, T]. t(M) returns T exactly.
struct TimeGrid {
    int M = 1;
    double dt = 1.0;
    double T = 1.0;
    static TimeGrid of(const ProblemSpec& spec) {
        return TimeGrid{spec.num_steps(), spec.dt_eff(), spec.horizon};
    }
    double t(int m) const { return m == M ? T : dt * static_cast<double>(m); }
};

struct DefaultEvent {
    int node = 0;       // 0-based
    int step = 0;       // grid index of the event (state frozen from here on)
    double time = 0;    // grid.t(step)
    double prefreeze = 0;  // crossing value of the node before freezing to 0
};

constexpr uint16_t kNotStartedRegime = 0xFFFF;

// Simulated trajectories in structure-of-arrays form. Per-path noise comes
// from counter substreams keyed by (seed, path_id_base + p, step, node), so
// the batch content is a pure function of (spec, policy, seed) and is
// identical for any worker count.
struct PathBatch {
    int n = 0;
    TimeGrid grid;
    long num_paths = 0;
    uint64_t seed = 0;
    uint64_t path_id_base = 0;
    Stream purpose = Stream::path;

    std::vector<double> states;      // [p * (M+1) + m] * n + i
    std::vector<uint16_t> regime;    // [p * (M+1) + m], RegimeTree id or terminal id
    std::vector<int> start_step;     // per path (0 for organic paths)
    std::vector<std::vector<DefaultEvent>> events;
    std::vector<double> run_cost;    // per path
    std::vector<double> term_cost;   // per path
    std::vector<uint8_t> valid;      // per path
    long invalid_count = 0;

    double* state(long p, int m) {
        return states.data() + (static_cast<size_t>(p) * (grid.M + 1) + static_cast<size_t>(m)) * n;
    }
    const double* state(long p, int m) const {
        return states.data() + (static_cast<size_t>(p) * (grid.M + 1) + static_cast<size_t>(m)) * n;
    }
    uint16_t regime_at(long p, int m) const {
        return regime[static_cast<size_t>(p) * (grid.M + 1) + static_cast<size_t>(m)];
    }
    double cost(long p) const {
        return run_cost[static_cast<size_t>(p)] + term_cost[static_cast<size_t>(p)];
    }
    uint64_t noise_path_id(long p) const { return path_id_base + static_cast<uint64_t>(p); }
};

struct CostEstimate {
    double mean = 0;
    double std_error = 0;
    long num_paths = 0;
};

/// One path from an arbitrary start (used for the synthetic fan-out too).
/// Writes grid slots start_step..M of path slot `p` in `batch`.
void simulate_one(const ProblemSpec& spec, const RegimeTree& tree, const CoeffTable& coeffs,
                  const ModelFunctions& model, const Policy& policy, const NoiseStream& noise,
                  PathBatch& batch, long p, int start_step, int start_regime_id,
                  const double* start_state);

/// OpenMP kernel: parallel map over paths.
PathBatch simulate_paths(const ProblemSpec& spec, const RegimeTree& tree,
                         const ModelFunctions& model, const Policy& policy,
                         long num_paths, uint64_t seed, uint64_t path_id_base = 0,
                         Stream purpose = Stream::path);

/// Serial reference implementation kept for testing; same output bit for bit.
PathBatch simulate_paths_serial(const ProblemSpec& spec, const RegimeTree& tree,
                                const ModelFunctions& model, const Policy& policy,
                                long num_paths, uint64_t seed, uint64_t path_id_base = 0,
                                Stream purpose = Stream::path);

/// Total costs per path, in path order (NaN for invalid paths).
std::vector<double> per_path_costs(const PathBatch& batch);

/// Cost of `policy` over mc.num_paths fresh paths.
CostEstimate estimate_cost(const ProblemSpec& spec, const RegimeTree& tree,
                           const ModelFunctions& model, const Policy& policy,
                           long num_paths, uint64_t seed);

/// `paths.csv`: path_id, t, regime, x_1..x_n, a_1..a_n, running_cost.
void write_paths_csv(std::ostream& os, const ProblemSpec& spec, const RegimeTree& tree,
                     const Policy& policy, const PathBatch& batch);

}  // namespace cascade
