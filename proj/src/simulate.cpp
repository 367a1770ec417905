#include "cascade/simulate.hpp"

#include <cmath>
#include <cstring>

#include "cascade/csvio.hpp"
#include "cascade/errors.hpp"

namespace cascade {

void simulate_one(const ProblemSpec& spec, const RegimeTree& tree, const CoeffTable& coeffs,
                  const ModelFunctions& model, const Policy& policy, const NoiseStream& noise,
                  PathBatch& batch, long p, int start_step, int start_regime_id,
                  const double* start_state) {
    const int n = spec.n;
    const TimeGrid grid = batch.grid;
    const int M = grid.M;
    const uint64_t pid = batch.noise_path_id(p);
    const size_t row = static_cast<size_t>(p) * (M + 1);

    batch.start_step[static_cast<size_t>(p)] = start_step;
    for (int m = 0; m < start_step; ++m) batch.regime[row + static_cast<size_t>(m)] = kNotStartedRegime;

    std::vector<double> x(start_state, start_state + n);
    std::vector<double> a(static_cast<size_t>(n)), drift(static_cast<size_t>(n)),
        sig(static_cast<size_t>(n)), xnew(static_cast<size_t>(n));

    int regime_id = start_regime_id;
    double run_cost = 0.0, term_cost = 0.0;
    bool valid = true;

    std::memcpy(batch.state(p, start_step), x.data(), sizeof(double) * static_cast<size_t>(n));
    batch.regime[row + static_cast<size_t>(start_step)] = static_cast<uint16_t>(regime_id);

    int m = start_step;
    for (; m < M; ++m) {
        if (regime_id == tree.terminal_id()) break;
        const Regime& r = tree.regime(regime_id);
        const double t = grid.t(m);

        policy.eval(r, t, x.data(), a.data());
        model.drift(r, t, x.data(), a.data(), drift.data());
        model.sigma_diag(r, t, x.data(), sig.data());
        run_cost += model.running_cost(r, t, x.data(), a.data()) * grid.dt;

        for (int i = 0; i < n; ++i) xnew[static_cast<size_t>(i)] = 0.0;
        for (int i : r.survivors()) {
            const double dw = std::sqrt(grid.dt) *
                              noise.gaussian(pid, static_cast<uint32_t>(m),
                                             static_cast<uint32_t>(i), batch.purpose);
            xnew[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] +
                                           drift[static_cast<size_t>(i)] * grid.dt +
                                           sig[static_cast<size_t>(i)] * dw;
            if (!std::isfinite(xnew[static_cast<size_t>(i)])) valid = false;
        }
        if (!valid) break;

        // hit detection: sign change or exact touch; optional bridge test
        int crossed[32];
        int num_crossed = 0;
        for (int i : r.survivors()) {
            const double vi = coeffs.at(regime_id, i).v(t);
            const double d0 = x[static_cast<size_t>(i)] - vi;
            const double d1 = xnew[static_cast<size_t>(i)] - vi;
            bool hit = d0 * d1 <= 0.0;
            if (!hit && spec.mc.bridge_correction) {
                const double s = sig[static_cast<size_t>(i)];
                if (s != 0.0) {
                    const double pb = std::exp(-2.0 * d0 * d1 / (s * s * grid.dt));
                    const double u = noise.uniform(pid, static_cast<uint32_t>(m),
                                                   static_cast<uint32_t>(i), Stream::bridge);
                    hit = u <= pb;
                }
            }
            if (hit) crossed[num_crossed++] = i;
        }

        // simultaneous hits become zero-gap consecutive defaults, ascending
        // node order; each exited regime is charged its terminal cost at the
        // pre-freeze state
        const double t_next = grid.t(m + 1);
        for (int c = 0; c < num_crossed; ++c) {
            const int k = crossed[c];
            const Regime& rc = tree.regime(regime_id);
            term_cost += model.terminal_cost(rc, t_next, xnew.data());
            batch.events[static_cast<size_t>(p)].push_back(
                DefaultEvent{k, m + 1, t_next, xnew[static_cast<size_t>(k)]});
            xnew[static_cast<size_t>(k)] = 0.0;
            regime_id = tree.id_of_mask(rc.defaulted | (1u << k));
        }

        std::memcpy(batch.state(p, m + 1), xnew.data(), sizeof(double) * static_cast<size_t>(n));
        batch.regime[row + static_cast<size_t>(m + 1)] = static_cast<uint16_t>(regime_id);
        x = xnew;
    }

    if (valid) {
        if (m == M && regime_id != tree.terminal_id()) {
            // horizon end in an active regime: its terminal cost at (T, X_T)
            term_cost += model.terminal_cost(tree.regime(regime_id), grid.T, x.data());
        }
        // freeze remaining slots after an early terminal stop
        for (int mm = m + 1; mm <= M; ++mm) {
            std::memset(batch.state(p, mm), 0, sizeof(double) * static_cast<size_t>(n));
            batch.regime[row + static_cast<size_t>(mm)] = static_cast<uint16_t>(regime_id);
        }
    } else {
        for (int mm = m + 1; mm <= M; ++mm) {
            std::memset(batch.state(p, mm), 0, sizeof(double) * static_cast<size_t>(n));
            batch.regime[row + static_cast<size_t>(mm)] = static_cast<uint16_t>(regime_id);
        }
        run_cost = term_cost = std::numeric_limits<double>::quiet_NaN();
    }

    batch.run_cost[static_cast<size_t>(p)] = run_cost;
    batch.term_cost[static_cast<size_t>(p)] = term_cost;
    batch.valid[static_cast<size_t>(p)] = valid ? 1 : 0;
}

namespace {

PathBatch make_batch(const ProblemSpec& spec, long num_paths, uint64_t seed,
                     uint64_t path_id_base, Stream purpose) {
    PathBatch b;
    b.n = spec.n;
    b.grid = TimeGrid::of(spec);
    b.num_paths = num_paths;
    b.seed = seed;
    b.path_id_base = path_id_base;
    b.purpose = purpose;
    const size_t slots = static_cast<size_t>(num_paths) * (b.grid.M + 1);
    b.states.assign(slots * static_cast<size_t>(spec.n), 0.0);
    b.regime.assign(slots, 0);
    b.start_step.assign(static_cast<size_t>(num_paths), 0);
    b.events.assign(static_cast<size_t>(num_paths), {});
    b.run_cost.assign(static_cast<size_t>(num_paths), 0.0);
    b.term_cost.assign(static_cast<size_t>(num_paths), 0.0);
    b.valid.assign(static_cast<size_t>(num_paths), 0);
    return b;
}

PathBatch run_batch(const ProblemSpec& spec, const RegimeTree& tree,
                    const ModelFunctions& model, const Policy& policy, long num_paths,
                    uint64_t seed, uint64_t path_id_base, Stream purpose, bool parallel) {
    PathBatch b = make_batch(spec, num_paths, seed, path_id_base, purpose);
    const CoeffTable coeffs(spec, tree);
    const NoiseStream noise(seed);
    const int root = tree.id_of(Regime::root(spec.n));

    if (parallel) {
#pragma omp parallel for schedule(static)
        for (long p = 0; p < num_paths; ++p)
            simulate_one(spec, tree, coeffs, model, policy, noise, b, p, 0, root,
                         spec.x0.data());
    } else {
        for (long p = 0; p < num_paths; ++p)
            simulate_one(spec, tree, coeffs, model, policy, noise, b, p, 0, root,
                         spec.x0.data());
    }

    long invalid = 0;
    for (long p = 0; p < num_paths; ++p)
        if (!b.valid[static_cast<size_t>(p)]) ++invalid;
    b.invalid_count = invalid;
    return b;
}

}  // namespace

PathBatch simulate_paths(const ProblemSpec& spec, const RegimeTree& tree,
                         const ModelFunctions& model, const Policy& policy,
                         long num_paths, uint64_t seed, uint64_t path_id_base,
                         Stream purpose) {
    return run_batch(spec, tree, model, policy, num_paths, seed, path_id_base, purpose, true);
}

PathBatch simulate_paths_serial(const ProblemSpec& spec, const RegimeTree& tree,
                                const ModelFunctions& model, const Policy& policy,
                                long num_paths, uint64_t seed, uint64_t path_id_base,
                                Stream purpose) {
    return run_batch(spec, tree, model, policy, num_paths, seed, path_id_base, purpose, false);
}

std::vector<double> per_path_costs(const PathBatch& batch) {
    std::vector<double> costs(static_cast<size_t>(batch.num_paths));
    for (long p = 0; p < batch.num_paths; ++p)
        costs[static_cast<size_t>(p)] =
            batch.valid[static_cast<size_t>(p)] ? batch.cost(p)
                                                : std::numeric_limits<double>::quiet_NaN();
    return costs;
}

CostEstimate estimate_cost(const ProblemSpec& spec, const RegimeTree& tree,
                           const ModelFunctions& model, const Policy& policy,
                           long num_paths, uint64_t seed) {
    const PathBatch b = simulate_paths(spec, tree, model, policy, num_paths, seed);
    std::vector<double> costs;
    costs.reserve(static_cast<size_t>(num_paths));
    for (long p = 0; p < b.num_paths; ++p)
        if (b.valid[static_cast<size_t>(p)]) costs.push_back(b.cost(p));
    if (costs.empty()) throw SolverError("estimate_cost: all paths invalid (non-finite states)");
    const MeanStderr ms = mean_stderr(costs);
    return CostEstimate{ms.mean, ms.stderr_, static_cast<long>(costs.size())};
}

void write_paths_csv(std::ostream& os, const ProblemSpec& spec, const RegimeTree& tree,
                     const Policy& policy, const PathBatch& batch) {
    const int n = spec.n;
    const int M = batch.grid.M;
    os << "path_id,t,regime";
    for (int i = 1; i <= n; ++i) os << ",x_" << i;
    for (int i = 1; i <= n; ++i) os << ",a_" << i;
    os << ",running_cost\n";

    const ModelFunctions model = ModelFunctions::lq(spec);
    std::vector<double> a(static_cast<size_t>(n));
    const Regime all_defaulted{n, (1u << n) - 1};
    for (long p = 0; p < batch.num_paths; ++p) {
        double cum = 0.0;
        for (int m = 0; m <= M; ++m) {
            const double t = batch.grid.t(m);
            const uint16_t rid = batch.regime_at(p, m);
            const bool terminal = rid == tree.terminal_id();
            const Regime& r = terminal ? all_defaulted : tree.regime(rid);
            const double* x = batch.state(p, m);
            if (terminal) {
                for (auto& ai : a) ai = 0.0;
            } else {
                policy.eval(r, t, x, a.data());
            }
            os << p << ',' << fmt_double(t) << ',' << r.key();
            for (int i = 0; i < n; ++i) os << ',' << fmt_double(x[i]);
            for (int i = 0; i < n; ++i) os << ',' << fmt_double(a[static_cast<size_t>(i)]);
            os << ',' << fmt_double(cum) << '\n';
            if (m < M && !terminal)
                cum += model.running_cost(r, t, x, a.data()) * batch.grid.dt;
        }
    }
}

}  // namespace cascade
