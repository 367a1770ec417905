#include "cascade/picard.hpp"

#include <algorithm>
#include <cmath>

#include "cascade/errors.hpp"
#include "cascade/numeric.hpp"

namespace cascade {

namespace {

CostEstimate paired_cost(const PathBatch& batch) {
    std::vector<double> costs;
    costs.reserve(static_cast<size_t>(batch.num_paths));
    for (long p = 0; p < batch.num_paths; ++p)
        if (batch.valid[static_cast<size_t>(p)]) costs.push_back(batch.cost(p));
    if (costs.empty()) throw SolverError("solve: all paths invalid");
    const MeanStderr ms = mean_stderr(costs);
    return CostEstimate{ms.mean, ms.stderr_, static_cast<long>(costs.size())};
}

// sup |a_new - a_old| over a deterministic sample of path states
double policy_gap(const ProblemSpec& spec, const RegimeTree& tree, const PathBatch& batch,
                  const Policy& a, const Policy& b) {
    const int n = spec.n;
    std::vector<double> va(static_cast<size_t>(n)), vb(static_cast<size_t>(n));
    double gap = 0;
    const long stride = std::max<long>(1, batch.num_paths / 64);
    const int mstride = std::max(1, batch.grid.M / 16);
    for (long p = 0; p < batch.num_paths; p += stride) {
        if (!batch.valid[static_cast<size_t>(p)]) continue;
        for (int m = 0; m < batch.grid.M; m += mstride) {
            const uint16_t rid = batch.regime_at(p, m);
            if (rid == kNotStartedRegime || rid == tree.terminal_id()) continue;
            const Regime& r = tree.regime(rid);
            const double t = batch.grid.t(m);
            const double* x = batch.state(p, m);
            a.eval(r, t, x, va.data());
            b.eval(r, t, x, vb.data());
            for (int i = 0; i < n; ++i)
                gap = std::max(gap, std::abs(va[static_cast<size_t>(i)] - vb[static_cast<size_t>(i)]));
        }
    }
    return gap;
}

}  // namespace

SolveOutput solve_problem(const ProblemSpec& spec, const RegimeTree& tree,
                          const ModelFunctions& model, const SolveOptions& opts) {
    SolveOutput out;
    Policy policy = Policy::zero(spec);
    const Regime root = Regime::root(spec.n);
    double scale = 1.0;
    for (int i = 0; i < spec.n; ++i)
        scale = std::max(scale, std::abs(spec.x0[static_cast<size_t>(i)] -
                                         spec.coeff(root, i).v(0.0)));
    double prev_mean = 0;
    bool have_prev = false;
    std::vector<double> prev_costs;

    // warm-up rounds may run on fewer paths; a full-size solve follows below
    const long round_paths = opts.warmup_paths > 0
                                 ? std::min(opts.warmup_paths, spec.mc.num_paths)
                                 : spec.mc.num_paths;

    for (int round = 0; round < opts.max_picard; ++round) {
        auto batch = std::make_shared<PathBatch>(simulate_paths(
            spec, tree, model, policy, round_paths, spec.mc.seed));
        const CostEstimate j = paired_cost(*batch);
        out.j_history.push_back(j);

        if (have_prev) {
            // paired (common random numbers) improvement over the last round;
            // a materially worse cost means the update overshot, so keep the
            // previous solve. Flat cost alone is not a stop: near the optimum
            // J is quadratically flat while the first-order gap still shrinks,
            // so termination is driven by the policy movement below.
            std::vector<double> diffs;
            const std::vector<double> cur = per_path_costs(*batch);
            for (size_t p = 0; p < cur.size(); ++p)
                if (std::isfinite(cur[p]) && std::isfinite(prev_costs[p]))
                    diffs.push_back(prev_costs[p] - cur[p]);
            const MeanStderr d = mean_stderr(diffs);
            const double worse_by =
                std::max(3.0 * d.stderr_, 1e-4 * std::abs(prev_mean) + 1e-12);
            if (round >= 2 && d.mean < -worse_by) break;
        }
        prev_costs = per_path_costs(*batch);
        prev_mean = j.mean;
        have_prev = true;

        const std::vector<const PathBatch*> batches{batch.get()};
        Policy next;
        if (opts.method == Method::riccati) {
            out.riccati = std::make_shared<RiccatiSolution>(solve_riccati(
                spec, tree, policy, batches, opts.glued, opts.paper_generators));
            next = make_riccati_policy(spec, out.riccati,
                                       opts.glued ? true : false);
        } else {
            out.adjoint = std::make_shared<AdjointSolution>(
                solve_adjoint(spec, tree, model, policy, batches, opts.glued));
            const Policy raw = make_adjoint_policy(spec, out.adjoint, opts.glued);
            if (opts.damping >= 1.0) {
                next = raw;
            } else {
                const double lam = opts.damping;
                const int n = spec.n;
                next = Policy::from_fn(
                    spec, raw.kind(),
                    [prev = policy, raw, lam, n](const Regime& r, double t,
                                                 const double* x, double* a) {
                        std::vector<double> ap(static_cast<size_t>(n)),
                            ar(static_cast<size_t>(n));
                        prev.eval(r, t, x, ap.data());
                        raw.eval(r, t, x, ar.data());
                        for (int i : r.survivors())
                            a[i] = (1.0 - lam) * ap[static_cast<size_t>(i)] +
                                   lam * ar[static_cast<size_t>(i)];
                    });
            }
        }
        out.batch = batch;
        out.rounds = round + 1;

        const double gap = policy_gap(spec, tree, *batch, next, policy);
        policy = next;
        out.policy = policy;
        if (gap <= opts.policy_tol * scale) break;
    }
    (void)prev_mean;
    if (out.rounds == 0) throw SolverError("solve: picard loop made no rounds");

    if (round_paths < spec.mc.num_paths) {
        // full-size final solve under the converged policy
        auto batch = std::make_shared<PathBatch>(simulate_paths(
            spec, tree, model, out.policy, spec.mc.num_paths, spec.mc.seed));
        out.j_history.push_back(paired_cost(*batch));
        const std::vector<const PathBatch*> batches{batch.get()};
        if (opts.method == Method::riccati) {
            out.riccati = std::make_shared<RiccatiSolution>(solve_riccati(
                spec, tree, out.policy, batches, opts.glued, opts.paper_generators));
        } else {
            out.adjoint = std::make_shared<AdjointSolution>(
                solve_adjoint(spec, tree, model, out.policy, batches, opts.glued));
        }
        out.batch = batch;
    }
    return out;
}

}  // namespace cascade
