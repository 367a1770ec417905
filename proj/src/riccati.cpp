#include "cascade/riccati.hpp"

#include <algorithm>
#include <cmath>

#include "cascade/csvio.hpp"
#include "cascade/errors.hpp"
#include "cascade/numeric.hpp"

namespace cascade {

namespace {

struct NodeCoeffAt {
    double mu, b, sigma, nu, v, gamma;
    static NodeCoeffAt of(const NodeCoeffs& c, double t) {
        return NodeCoeffAt{c.mu(t), c.b(t), c.sigma(t), c.nu(t), c.v(t), c.gamma};
    }
};

// Re-derived generator: consistent with the adjoint BSDE under the ansatz
// -Y = P X - phi; reduces to the classical Riccati ODE -K' = 2 mu K - K^2 +
// gamma with K = -P when the noise terms vanish. The printed forms stay
// available behind the paper flag for comparison runs.
double f_p(bool paper, bool deepest, const NodeCoeffAt& c, double p, double zp) {
    if (!paper) return 2.0 * c.mu * p + p * p + c.sigma * c.sigma * p + 2.0 * c.sigma * zp - c.gamma;
    if (deepest) return p * p + c.sigma * c.sigma * p + 2.0 * c.sigma * zp - 1.0;
    return -p * p + c.sigma * c.sigma * p + 2.0 * c.sigma * zp - c.gamma;
}

double f_phi(bool paper, bool deepest, const NodeCoeffAt& c, double p, double phi,
             double zp, double zphi) {
    if (!paper)
        return (p + c.mu) * phi + c.sigma * zphi -
               (c.gamma * c.v + c.sigma * c.nu * p + c.nu * zp + c.b * p);
    if (deepest)
        return (p - c.mu) * phi + c.sigma * zphi -
               (c.v + c.sigma * c.nu * p + c.nu * zp + p * c.b);
    return (c.mu - p) * phi + c.sigma * zphi -
           (zp * c.nu + p * c.nu + c.gamma * c.v + c.sigma * c.nu * p);
}

double p_terminal_base(bool paper, bool deepest, double gamma) {
    if (!paper) return -gamma;
    return deepest ? 1.0 : gamma;
}

double p_terminal_stitch(bool paper, double gamma, double child_p) {
    if (!paper) return child_p - gamma;
    return gamma - child_p;
}

double phi_terminal_base(bool paper, bool deepest, double gamma, double v) {
    if (!paper) return -gamma * v;
    return deepest ? -v : -gamma * v;
}

double phi_terminal_stitch(bool paper, double gamma, double v, double child_phi) {
    if (!paper) return child_phi - gamma * v;
    return -gamma * v + child_phi;
}

struct RicContext {
    const ProblemSpec& spec;
    const RegimeTree& tree;
    const CoeffTable& coeffs;
    const RiccatiSolution* sol;
    TimeGrid grid;
    bool glued;
    bool paper;
    const EntryRegistry* p_registry = nullptr;    // pathwise P at segment entries
    const EntryRegistry* phi_registry = nullptr;  // pathwise phi at segment entries
};

bool regime_deepest(const RegimeTree& tree, int rid) {
    return tree.regime(rid).num_defaulted() == tree.n() - 1;
}

double child_p_value(const RicContext& ctx, const PathBatch& batch, long p, int e,
                     int j, int rid, int node);
double child_phi_value(const RicContext& ctx, const PathBatch& batch, long p, int e,
                       int j, int rid, int node);

// Terminal value of P for `node` when its regime exits through segment `seg`.
double terminal_p_value(const RicContext& ctx, const PathBatch& batch, long pth,
                        const Segment& seg, int rid, int node) {
    const bool deepest = regime_deepest(ctx.tree, rid);
    const double gamma = ctx.coeffs.at(rid, node).gamma;
    if (seg.horizon_exit) return p_terminal_base(ctx.paper, deepest, gamma);
    const auto& ev = batch.events[static_cast<size_t>(pth)][static_cast<size_t>(seg.event_index)];
    if (ev.node == node || ctx.glued) return p_terminal_base(ctx.paper, deepest, gamma);
    const int child_id =
        ctx.tree.id_of_mask(ctx.tree.regime(rid).defaulted | (1u << ev.node));
    const double cp =
        child_p_value(ctx, batch, pth, seg.exit, seg.event_index + 1, child_id, node);
    return p_terminal_stitch(ctx.paper, gamma, cp);
}

double terminal_phi_value(const RicContext& ctx, const PathBatch& batch, long pth,
                          const Segment& seg, int rid, int node) {
    const bool deepest = regime_deepest(ctx.tree, rid);
    const NodeCoeffs& c = ctx.coeffs.at(rid, node);
    const double te = seg.horizon_exit ? ctx.grid.T : ctx.grid.t(seg.exit);
    if (seg.horizon_exit) return phi_terminal_base(ctx.paper, deepest, c.gamma, c.v(te));
    const auto& ev = batch.events[static_cast<size_t>(pth)][static_cast<size_t>(seg.event_index)];
    if (ev.node == node || ctx.glued)
        return phi_terminal_base(ctx.paper, deepest, c.gamma, c.v(te));
    const int child_id =
        ctx.tree.id_of_mask(ctx.tree.regime(rid).defaulted | (1u << ev.node));
    const double cphi =
        child_phi_value(ctx, batch, pth, seg.exit, seg.event_index + 1, child_id, node);
    return phi_terminal_stitch(ctx.paper, c.gamma, c.v(te), cphi);
}

double child_p_value(const RicContext& ctx, const PathBatch& batch, long p, int e,
                     int j, int rid, int node) {
    if (rid == ctx.tree.terminal_id()) return 0.0;
    const Regime& r = ctx.tree.regime(rid);
    const bool deepest = regime_deepest(ctx.tree, rid);
    const double gamma = ctx.coeffs.at(rid, node).gamma;
    const auto& evs = batch.events[static_cast<size_t>(p)];
    const bool zero_gap = static_cast<size_t>(j) < evs.size() &&
                          evs[static_cast<size_t>(j)].step == e;
    if (zero_gap) {
        const int trig = evs[static_cast<size_t>(j)].node;
        if (trig == node) return p_terminal_base(ctx.paper, deepest, gamma);
        const int next = ctx.tree.id_of_mask(r.defaulted | (1u << trig));
        const double cp = child_p_value(ctx, batch, p, e, j + 1, next, node);
        return p_terminal_stitch(ctx.paper, gamma, cp);
    }
    if (e == ctx.grid.M) return p_terminal_base(ctx.paper, deepest, gamma);
    if (ctx.p_registry) {
        if (const auto* vals = ctx.p_registry->find(&batch, p, e, rid))
            return (*vals)[static_cast<size_t>(node)];
    }
    const std::vector<double> x_post = state_with_unapplied(batch, p, e, j);
    return ctx.sol->evaluate_p(r, node, ctx.grid.t(e), x_post.data());
}

double child_phi_value(const RicContext& ctx, const PathBatch& batch, long p, int e,
                       int j, int rid, int node) {
    if (rid == ctx.tree.terminal_id()) return 0.0;
    const Regime& r = ctx.tree.regime(rid);
    const bool deepest = regime_deepest(ctx.tree, rid);
    const NodeCoeffs& c = ctx.coeffs.at(rid, node);
    const double te = ctx.grid.t(e);
    const auto& evs = batch.events[static_cast<size_t>(p)];
    const bool zero_gap = static_cast<size_t>(j) < evs.size() &&
                          evs[static_cast<size_t>(j)].step == e;
    if (zero_gap) {
        const int trig = evs[static_cast<size_t>(j)].node;
        if (trig == node) return phi_terminal_base(ctx.paper, deepest, c.gamma, c.v(te));
        const int next = ctx.tree.id_of_mask(r.defaulted | (1u << trig));
        const double cphi = child_phi_value(ctx, batch, p, e, j + 1, next, node);
        return phi_terminal_stitch(ctx.paper, c.gamma, c.v(te), cphi);
    }
    if (e == ctx.grid.M) return phi_terminal_base(ctx.paper, deepest, c.gamma, c.v(ctx.grid.T));
    if (ctx.phi_registry) {
        if (const auto* vals = ctx.phi_registry->find(&batch, p, e, rid))
            return (*vals)[static_cast<size_t>(node)];
    }
    const std::vector<double> x_post = state_with_unapplied(batch, p, e, j);
    return ctx.sol->evaluate_phi(r, node, te, x_post.data());
}

}  // namespace

const RicStep* RicRegime::step_at(int m) const {
    if (steps.empty()) return nullptr;
    int i = std::clamp(m, first, last - 1) - first;
    if (steps[static_cast<size_t>(i)].present) return &steps[static_cast<size_t>(i)];
    for (int d = 1; d < last - first; ++d) {
        if (i - d >= 0 && steps[static_cast<size_t>(i - d)].present)
            return &steps[static_cast<size_t>(i - d)];
        if (i + d < last - first && steps[static_cast<size_t>(i + d)].present)
            return &steps[static_cast<size_t>(i + d)];
    }
    return nullptr;
}

const RicStep* RiccatiSolution::locate(const Regime& regime, int node, double t,
                                       int* survivor_idx, int* step_index) const {
    const int rid = tree_.id_of(regime);
    const RicRegime& reg = regimes_[static_cast<size_t>(rid)];
    if (reg.steps.empty())
        throw SolverError("riccati solution has no tables for regime \"" + regime.key() + "\"");
    const auto survivors = regime.survivors();
    int d = -1;
    for (size_t k = 0; k < survivors.size(); ++k)
        if (survivors[k] == node) d = static_cast<int>(k);
    if (d < 0)
        throw SolverError("riccati evaluation for defaulted node " + std::to_string(node + 1));
    const int m = std::clamp(static_cast<int>(std::floor(t / grid_.dt + 1e-9)), reg.first,
                             std::max(reg.first, reg.last - 1));
    const RicStep* st = reg.step_at(m);
    *survivor_idx = d;
    if (step_index) {
        // recover the actual step of the returned table
        *step_index = static_cast<int>(st - reg.steps.data()) + reg.first;
    }
    return st;
}

double RiccatiSolution::evaluate_p(const Regime& regime, int node, double t,
                                   const double* x) const {
    if (regime.node_defaulted(node)) return 0.0;
    int d = 0, m = 0;
    const RicStep* st = locate(regime, node, t, &d, &m);
    const int rid = tree_.id_of(regime);
    const RicRegime& reg = regimes_[static_cast<size_t>(rid)];
    const auto survivors = regime.survivors();
    std::vector<double> xs(survivors.size());
    for (size_t k = 0; k < survivors.size(); ++k) xs[k] = x[survivors[k]];
    const double fit = eval_poly_linear_ext(reg.basis, st->std, st->p_coef[static_cast<size_t>(d)], st->lo, st->hi, xs.data());
    const double zp = eval_poly_linear_ext(reg.basis, st->std, st->zp_coef[static_cast<size_t>(d)], st->lo, st->hi, xs.data());
    const double tm = grid_.t(m);
    const NodeCoeffAt c = NodeCoeffAt::of(spec_->coeff(regime, node), tm);
    const bool deepest = regime.num_defaulted() == tree_.n() - 1;
    return fit + grid_.dt * f_p(paper_, deepest, c, fit, zp);
}

double RiccatiSolution::evaluate_phi(const Regime& regime, int node, double t,
                                     const double* x) const {
    if (regime.node_defaulted(node)) return 0.0;
    int d = 0, m = 0;
    const RicStep* st = locate(regime, node, t, &d, &m);
    const int rid = tree_.id_of(regime);
    const RicRegime& reg = regimes_[static_cast<size_t>(rid)];
    const auto survivors = regime.survivors();
    std::vector<double> xs(survivors.size());
    for (size_t k = 0; k < survivors.size(); ++k) xs[k] = x[survivors[k]];
    const double fphi = eval_poly_linear_ext(reg.basis, st->std, st->phi_coef[static_cast<size_t>(d)], st->lo, st->hi, xs.data());
    const double zphi = eval_poly_linear_ext(reg.basis, st->std, st->zphi_coef[static_cast<size_t>(d)], st->lo, st->hi, xs.data());
    const double fitp = eval_poly_linear_ext(reg.basis, st->std, st->p_coef[static_cast<size_t>(d)], st->lo, st->hi, xs.data());
    const double zp = eval_poly_linear_ext(reg.basis, st->std, st->zp_coef[static_cast<size_t>(d)], st->lo, st->hi, xs.data());
    const double tm = grid_.t(m);
    const NodeCoeffAt c = NodeCoeffAt::of(spec_->coeff(regime, node), tm);
    const bool deepest = regime.num_defaulted() == tree_.n() - 1;
    const double p_at = fitp + grid_.dt * f_p(paper_, deepest, c, fitp, zp);
    return fphi + grid_.dt * f_phi(paper_, deepest, c, p_at, fphi, zp, zphi);
}

double RiccatiSolution::evaluate_zp(const Regime& regime, int node, double t,
                                    const double* x) const {
    if (regime.node_defaulted(node)) return 0.0;
    int d = 0;
    const RicStep* st = locate(regime, node, t, &d, nullptr);
    const RicRegime& reg = regimes_[static_cast<size_t>(tree_.id_of(regime))];
    const auto survivors = regime.survivors();
    std::vector<double> xs(survivors.size());
    for (size_t k = 0; k < survivors.size(); ++k) xs[k] = x[survivors[k]];
    return eval_poly_linear_ext(reg.basis, st->std, st->zp_coef[static_cast<size_t>(d)], st->lo, st->hi, xs.data());
}

double RiccatiSolution::evaluate_zphi(const Regime& regime, int node, double t,
                                      const double* x) const {
    if (regime.node_defaulted(node)) return 0.0;
    int d = 0;
    const RicStep* st = locate(regime, node, t, &d, nullptr);
    const RicRegime& reg = regimes_[static_cast<size_t>(tree_.id_of(regime))];
    const auto survivors = regime.survivors();
    std::vector<double> xs(survivors.size());
    for (size_t k = 0; k < survivors.size(); ++k) xs[k] = x[survivors[k]];
    return eval_poly_linear_ext(reg.basis, st->std, st->zphi_coef[static_cast<size_t>(d)], st->lo, st->hi, xs.data());
}

double RiccatiSolution::mean_residual() const {
    double num = 0, den = 0;
    for (const auto& reg : regimes_)
        for (const auto& st : reg.steps)
            if (st.present) {
                num += st.resid_rms * static_cast<double>(st.n_samples);
                den += static_cast<double>(st.n_samples);
            }
    return den > 0 ? num / den : 0.0;
}

RiccatiSolution solve_riccati(const ProblemSpec& spec, const RegimeTree& tree,
                              const Policy& policy,
                              std::span<const PathBatch* const> batches, bool glued,
                              bool paper_generators) {
    const TimeGrid grid = TimeGrid::of(spec);
    const CoeffTable coeffs(spec, tree);
    const NoiseStream noise(spec.mc.seed);
    const ModelFunctions model = ModelFunctions::lq(spec);

    RiccatiSolution sol;
    sol.spec_ = &spec;
    sol.tree_ = tree;
    sol.grid_ = grid;
    sol.paper_ = paper_generators;
    sol.glued_ = glued;
    sol.regimes_.assign(static_cast<size_t>(tree.num_active()), RicRegime{});

    OccupancyMap occ = OccupancyMap::build(tree, grid.M, batches);
    std::vector<bool> synthetic_regimes;
    const auto synth = ensure_occupancy(spec, tree, model, policy, occ, synthetic_regimes);

    std::vector<int> order(static_cast<size_t>(tree.num_active()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return tree.regime(a).num_defaulted() > tree.regime(b).num_defaulted();
    });

    EntryRegistry p_registry, phi_registry;
    RicContext ctx{spec, tree, coeffs, &sol, grid, glued, paper_generators,
                   &p_registry, &phi_registry};
    RicContext table_ctx{spec, tree, coeffs, &sol, grid, glued, paper_generators,
                         nullptr, nullptr};

    for (int rid : order) {
        const Regime& r = tree.regime(rid);
        const bool deepest = regime_deepest(tree, rid);
        const RegimeOccupancy& ro = occ.per_regime[static_cast<size_t>(rid)];
        RicRegime& reg = sol.regimes_[static_cast<size_t>(rid)];
        const auto survivors = r.survivors();
        const int dim = static_cast<int>(survivors.size());
        reg.basis = PolyBasis::make(dim, spec.mc.basis_degree);
        reg.synthetic = synthetic_regimes[static_cast<size_t>(rid)];
        reg.low_confidence = ro.organic_segments < std::max<long>(1, spec.mc.num_paths / 10);
        if (ro.empty())
            throw SolverError("riccati solve: no occupancy for regime \"" + r.key() + "\"");
        reg.first = ro.min_entry;
        reg.last = ro.max_exit;
        reg.steps.assign(static_cast<size_t>(reg.last - reg.first), RicStep{});

        const long nsegs = static_cast<long>(ro.segs.size());
        std::vector<std::vector<double>> valp(survivors.size(),
                                              std::vector<double>(static_cast<size_t>(nsegs), 0.0));
        std::vector<double> stitch_p(static_cast<size_t>(reg.last - reg.first), 0.0);
        std::vector<double> stitch_phi(static_cast<size_t>(reg.last - reg.first), 0.0);
        std::vector<long> stitch_n(static_cast<size_t>(reg.last - reg.first), 0);

        // ---- P sweep ----
        for (int m = ro.max_exit - 1; m >= ro.min_entry; --m) {
            const auto& contributors = ro.at_step[static_cast<size_t>(m)];
            if (contributors.empty()) continue;
            const long cnt = static_cast<long>(contributors.size());
            const double tm = grid.t(m);

            for (int sidx : contributors) {
                const Segment& sg = ro.segs[static_cast<size_t>(sidx)];
                if (sg.exit != m + 1) continue;
                for (size_t d = 0; d < survivors.size(); ++d) {
                    const double tv =
                        terminal_p_value(ctx, *sg.batch, sg.p, sg, rid, survivors[d]);
                    valp[d][static_cast<size_t>(sidx)] = tv;
                    if (!sg.horizon_exit) {
                        const double tt = terminal_p_value(table_ctx, *sg.batch, sg.p, sg,
                                                           rid, survivors[d]);
                        stitch_p[static_cast<size_t>(m - reg.first)] += std::abs(tv - tt);
                    }
                }
                if (!sg.horizon_exit)
                    stitch_n[static_cast<size_t>(m - reg.first)] +=
                        static_cast<long>(survivors.size());
            }

            std::vector<double> xs(static_cast<size_t>(cnt) * dim);
            bool any_synth = false;
            for (long c = 0; c < cnt; ++c) {
                const Segment& sg = ro.segs[static_cast<size_t>(contributors[static_cast<size_t>(c)])];
                const double* x = sg.batch->state(sg.p, m);
                for (int d = 0; d < dim; ++d)
                    xs[static_cast<size_t>(c) * dim + d] = x[survivors[static_cast<size_t>(d)]];
                any_synth = any_synth || sg.batch->purpose == Stream::synthetic;
            }
            StepFitter fitter(reg.basis, spec.mc.ridge);
            try {
                fitter.prepare(xs, cnt);
            } catch (const SolverError& e) {
                throw SolverError(std::string(e.what()) + " (riccati P, regime \"" + r.key() +
                                  "\", step " + std::to_string(m) + ")");
            }

            RicStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
            st.present = true;
            st.std = fitter.standardizer();
            st.lo = fitter.hull_lo();
            st.hi = fitter.hull_hi();
            st.cond_log10 = fitter.cond_log10();
            st.n_samples = cnt;
            st.synthetic = any_synth;
            st.p_coef.resize(survivors.size());
            st.phi_coef.resize(survivors.size());
            st.zp_coef.resize(survivors.size());
            st.zphi_coef.resize(survivors.size());
            st.p_mean.assign(survivors.size(), 0.0);
            st.phi_mean.assign(survivors.size(), 0.0);
            st.zp_mean.assign(survivors.size(), 0.0);
            st.zphi_mean.assign(survivors.size(), 0.0);

            std::vector<double> targets(static_cast<size_t>(cnt)), ztarget(static_cast<size_t>(cnt));
            double resid_sq = 0;
            for (size_t d = 0; d < survivors.size(); ++d) {
                const int node = survivors[d];
                const NodeCoeffAt c_at = NodeCoeffAt::of(coeffs.at(rid, node), tm);
                for (long c = 0; c < cnt; ++c)
                    targets[static_cast<size_t>(c)] =
                        valp[d][static_cast<size_t>(contributors[static_cast<size_t>(c)])];
                auto fp = fitter.fit(targets);
                st.p_coef[d] = fp.coef;
                resid_sq += fp.resid_rms * fp.resid_rms;

                for (long c = 0; c < cnt; ++c) {
                    const Segment& sg =
                        ro.segs[static_cast<size_t>(contributors[static_cast<size_t>(c)])];
                    const double fv = fitter.evaluate(fp.coef, xs.data() + static_cast<size_t>(c) * dim);
                    const double dw = std::sqrt(grid.dt) *
                                      noise.gaussian(sg.batch->noise_path_id(sg.p),
                                                     static_cast<uint32_t>(m),
                                                     static_cast<uint32_t>(node),
                                                     sg.batch->purpose);
                    ztarget[static_cast<size_t>(c)] =
                        (targets[static_cast<size_t>(c)] - fv) * dw / grid.dt;
                }
                auto fz = fitter.fit(ztarget);
                st.zp_coef[d] = fz.coef;

                // value update
                std::vector<double> vals(static_cast<size_t>(cnt)), zvals(static_cast<size_t>(cnt));
                for (long c = 0; c < cnt; ++c) {
                    const int sidx = contributors[static_cast<size_t>(c)];
                    const double fv = fitter.evaluate(fp.coef, xs.data() + static_cast<size_t>(c) * dim);
                    const double zv = fitter.evaluate(fz.coef, xs.data() + static_cast<size_t>(c) * dim);
                    const double newv = fv + grid.dt * f_p(ctx.paper, deepest, c_at, fv, zv);
                    valp[d][static_cast<size_t>(sidx)] = newv;
                    vals[static_cast<size_t>(c)] = newv;
                    zvals[static_cast<size_t>(c)] = zv;
                }
                st.p_mean[d] = pairwise_sum(vals) / static_cast<double>(cnt);
                st.zp_mean[d] = pairwise_sum(zvals) / static_cast<double>(cnt);
            }
            st.resid_rms = resid_sq;  // finalized after the phi sweep
            st.stitch_sum_p = stitch_p[static_cast<size_t>(m - reg.first)];
            st.stitch_count = stitch_n[static_cast<size_t>(m - reg.first)];
        }

        // pathwise P at segment entries for the parent stitches
        for (int sidx = 0; sidx < static_cast<int>(ro.segs.size()); ++sidx) {
            const Segment& sg = ro.segs[static_cast<size_t>(sidx)];
            std::vector<double> vals(static_cast<size_t>(spec.n), 0.0);
            for (size_t d = 0; d < survivors.size(); ++d)
                vals[static_cast<size_t>(survivors[d])] = valp[d][static_cast<size_t>(sidx)];
            p_registry.record(sg.batch, sg.p, sg.entry, rid, std::move(vals));
        }

        // ---- phi sweep (needs this regime's P tables) ----
        std::vector<std::vector<double>> valphi(survivors.size(),
                                                std::vector<double>(static_cast<size_t>(nsegs), 0.0));
        for (int m = ro.max_exit - 1; m >= ro.min_entry; --m) {
            const auto& contributors = ro.at_step[static_cast<size_t>(m)];
            if (contributors.empty()) continue;
            const long cnt = static_cast<long>(contributors.size());
            const double tm = grid.t(m);

            for (int sidx : contributors) {
                const Segment& sg = ro.segs[static_cast<size_t>(sidx)];
                if (sg.exit != m + 1) continue;
                for (size_t d = 0; d < survivors.size(); ++d) {
                    const double tv =
                        terminal_phi_value(ctx, *sg.batch, sg.p, sg, rid, survivors[d]);
                    valphi[d][static_cast<size_t>(sidx)] = tv;
                    if (!sg.horizon_exit) {
                        const double tt = terminal_phi_value(table_ctx, *sg.batch, sg.p, sg,
                                                             rid, survivors[d]);
                        stitch_phi[static_cast<size_t>(m - reg.first)] += std::abs(tv - tt);
                    }
                }
            }

            std::vector<double> xs(static_cast<size_t>(cnt) * dim);
            for (long c = 0; c < cnt; ++c) {
                const Segment& sg = ro.segs[static_cast<size_t>(contributors[static_cast<size_t>(c)])];
                const double* x = sg.batch->state(sg.p, m);
                for (int d = 0; d < dim; ++d)
                    xs[static_cast<size_t>(c) * dim + d] = x[survivors[static_cast<size_t>(d)]];
            }
            StepFitter fitter(reg.basis, spec.mc.ridge);
            try {
                fitter.prepare(xs, cnt);
            } catch (const SolverError& e) {
                throw SolverError(std::string(e.what()) + " (riccati phi, regime \"" + r.key() +
                                  "\", step " + std::to_string(m) + ")");
            }
            RicStep& st = reg.steps[static_cast<size_t>(m - reg.first)];

            std::vector<double> targets(static_cast<size_t>(cnt)), ztarget(static_cast<size_t>(cnt));
            double resid_sq = st.resid_rms;  // carries the P sum of squares
            for (size_t d = 0; d < survivors.size(); ++d) {
                const int node = survivors[d];
                const NodeCoeffAt c_at = NodeCoeffAt::of(coeffs.at(rid, node), tm);
                for (long c = 0; c < cnt; ++c)
                    targets[static_cast<size_t>(c)] =
                        valphi[d][static_cast<size_t>(contributors[static_cast<size_t>(c)])];
                auto fphi = fitter.fit(targets);
                st.phi_coef[d] = fphi.coef;
                resid_sq += fphi.resid_rms * fphi.resid_rms;

                for (long c = 0; c < cnt; ++c) {
                    const Segment& sg =
                        ro.segs[static_cast<size_t>(contributors[static_cast<size_t>(c)])];
                    const double fv = fitter.evaluate(fphi.coef, xs.data() + static_cast<size_t>(c) * dim);
                    const double dw = std::sqrt(grid.dt) *
                                      noise.gaussian(sg.batch->noise_path_id(sg.p),
                                                     static_cast<uint32_t>(m),
                                                     static_cast<uint32_t>(node),
                                                     sg.batch->purpose);
                    ztarget[static_cast<size_t>(c)] =
                        (targets[static_cast<size_t>(c)] - fv) * dw / grid.dt;
                }
                auto fzphi = fitter.fit(ztarget);
                st.zphi_coef[d] = fzphi.coef;

                std::vector<double> vals(static_cast<size_t>(cnt)), zvals(static_cast<size_t>(cnt));
                for (long c = 0; c < cnt; ++c) {
                    const int sidx = contributors[static_cast<size_t>(c)];
                    const double* xrow = xs.data() + static_cast<size_t>(c) * dim;
                    const double fv = fitter.evaluate(st.phi_coef[d], xrow);
                    const double zv = fitter.evaluate(st.zphi_coef[d], xrow);
                    const double fitp = fitter.evaluate(st.p_coef[d], xrow);
                    const double zp = fitter.evaluate(st.zp_coef[d], xrow);
                    const double p_at = fitp + grid.dt * f_p(ctx.paper, deepest, c_at, fitp, zp);
                    const double newv =
                        fv + grid.dt * f_phi(ctx.paper, deepest, c_at, p_at, fv, zp, zv);
                    valphi[d][static_cast<size_t>(sidx)] = newv;
                    vals[static_cast<size_t>(c)] = newv;
                    zvals[static_cast<size_t>(c)] = zv;
                }
                st.phi_mean[d] = pairwise_sum(vals) / static_cast<double>(cnt);
                st.zphi_mean[d] = pairwise_sum(zvals) / static_cast<double>(cnt);
            }
            st.resid_rms = std::sqrt(resid_sq / (2.0 * static_cast<double>(survivors.size())));
            st.stitch_sum_phi = stitch_phi[static_cast<size_t>(m - reg.first)];

            if (std::abs(st.p_mean[0]) > 1e6)
                throw SolverError("riccati P blow-up in regime \"" + r.key() + "\" node " +
                                  std::to_string(survivors[0] + 1) + " at step " +
                                  std::to_string(m));
        }

        // pathwise phi at segment entries for the parent stitches
        for (int sidx = 0; sidx < static_cast<int>(ro.segs.size()); ++sidx) {
            const Segment& sg = ro.segs[static_cast<size_t>(sidx)];
            std::vector<double> vals(static_cast<size_t>(spec.n), 0.0);
            for (size_t d = 0; d < survivors.size(); ++d)
                vals[static_cast<size_t>(survivors[d])] = valphi[d][static_cast<size_t>(sidx)];
            phi_registry.record(sg.batch, sg.p, sg.entry, rid, std::move(vals));
        }
    }
    return sol;
}

Policy make_riccati_policy(const ProblemSpec& spec,
                           std::shared_ptr<const RiccatiSolution> sol, bool glued_kind) {
    return Policy::from_fn(
        spec, glued_kind ? Policy::Kind::glued : Policy::Kind::riccati_feedback,
        [sol](const Regime& r, double t, const double* x, double* a) {
            for (int i : r.survivors())
                a[i] = sol->evaluate_p(r, i, t, x) * x[i] - sol->evaluate_phi(r, i, t, x);
        });
}

PhiEstimate phi_closed_form(const ProblemSpec& spec, const RegimeTree& tree,
                            const RiccatiSolution& sol, const OccupancyMap& occ,
                            int regime_id, int node, int step) {
    const TimeGrid grid = sol.grid();
    const CoeffTable coeffs(spec, tree);
    const NoiseStream noise(spec.mc.seed);
    const Regime& r = tree.regime(regime_id);
    const RegimeOccupancy& ro = occ.per_regime[static_cast<size_t>(regime_id)];
    if (step < 0 || step >= grid.M || ro.at_step[static_cast<size_t>(step)].empty())
        throw SolverError("phi_closed_form: no paths through regime \"" + r.key() +
                          "\" at step " + std::to_string(step));
    const bool paper = sol.paper_generators();

    RicContext ctx{spec, tree, coeffs, &sol, grid, sol.glued(), paper, nullptr, nullptr};

    std::vector<double> samples;
    for (int sidx : ro.at_step[static_cast<size_t>(step)]) {
        const Segment& sg = ro.segs[static_cast<size_t>(sidx)];
        double gam = 1.0;  // auxiliary exponential, = 1 at the conditioning time
        double integral = 0.0;
        for (int m = step; m < sg.exit; ++m) {
            const double tm = grid.t(m);
            const double* x = sg.batch->state(sg.p, m);
            const NodeCoeffAt c = NodeCoeffAt::of(coeffs.at(regime_id, node), tm);
            const double p_at = sol.evaluate_p(r, node, tm, x);
            const double zp = sol.evaluate_zp(r, node, tm, x);
            const double drift = paper ? (p_at - c.mu) : (p_at + c.mu);
            const double h = paper
                                 ? (regime_deepest(tree, regime_id)
                                        ? c.v + c.sigma * c.nu * p_at + zp * c.nu + p_at * c.b
                                        : zp * c.nu + p_at * c.nu + c.gamma * c.v + c.sigma * c.nu * p_at)
                                 : c.gamma * c.v + c.sigma * c.nu * p_at + c.nu * zp + c.b * p_at;
            // exact per-step quadrature of the deterministic part
            const double w = std::abs(drift) > 1e-12
                                 ? (std::exp(drift * grid.dt) - 1.0) / drift
                                 : grid.dt;
            integral += gam * h * w;
            const double dw = std::sqrt(grid.dt) *
                              noise.gaussian(sg.batch->noise_path_id(sg.p),
                                             static_cast<uint32_t>(m), static_cast<uint32_t>(node),
                                             sg.batch->purpose);
            gam *= std::exp((drift - 0.5 * c.sigma * c.sigma) * grid.dt + c.sigma * dw);
        }
        const double xi = terminal_phi_value(ctx, *sg.batch, sg.p, sg, regime_id, node);
        samples.push_back(gam * xi - integral);
    }
    const MeanStderr ms = mean_stderr(samples);
    return PhiEstimate{ms.mean, ms.stderr_, static_cast<long>(samples.size())};
}

std::vector<CrosscheckRow> crosscheck_vs_adjoint(const ProblemSpec& spec,
                                                 const RegimeTree& tree,
                                                 const RiccatiSolution& ric,
                                                 const AdjointSolution& adj,
                                                 std::span<const PathBatch* const> batches) {
    const TimeGrid grid = ric.grid();
    OccupancyMap occ = OccupancyMap::build(tree, grid.M, batches);
    std::vector<CrosscheckRow> rows;
    std::vector<double> y(static_cast<size_t>(spec.n)), z(static_cast<size_t>(spec.n));
    for (int rid = 0; rid < tree.num_active(); ++rid) {
        const Regime& r = tree.regime(rid);
        const RegimeOccupancy& ro = occ.per_regime[static_cast<size_t>(rid)];
        if (ro.segs.empty()) continue;
        std::vector<CrosscheckRow> per_node(static_cast<size_t>(spec.n));
        const long seg_stride = std::max<long>(1, static_cast<long>(ro.segs.size()) / 64);
        for (long s = 0; s < static_cast<long>(ro.segs.size()); s += seg_stride) {
            const Segment& sg = ro.segs[static_cast<size_t>(s)];
            const int step_stride = std::max(1, (sg.exit - sg.entry) / 8);
            for (int m = sg.entry; m < sg.exit; m += step_stride) {
                const double tm = grid.t(m);
                const double* x = sg.batch->state(sg.p, m);
                adj.evaluate(r, tm, x, y.data(), z.data());
                for (int i : r.survivors()) {
                    const double fb_ric = ric.evaluate_p(r, i, tm, x) * x[i] -
                                          ric.evaluate_phi(r, i, tm, x);
                    const double fb_adj = -y[static_cast<size_t>(i)];
                    const double diff = std::abs(fb_ric - fb_adj);
                    auto& row = per_node[static_cast<size_t>(i)];
                    row.mean_abs += diff;
                    row.max_abs = std::max(row.max_abs, diff);
                    ++row.samples;
                }
            }
        }
        for (int i : r.survivors()) {
            auto& row = per_node[static_cast<size_t>(i)];
            if (!row.samples) continue;
            row.regime = r.key();
            row.node = i + 1;
            row.mean_abs /= static_cast<double>(row.samples);
            rows.push_back(row);
        }
    }
    return rows;
}

void write_riccati_csv(std::ostream& os, const RiccatiSolution& sol) {
    os << "regime,node,t,P_mean,phi_mean,ZP_mean,Zphi_mean\n";
    const auto& tree = sol.tree();
    for (int rid = 0; rid < tree.num_active(); ++rid) {
        const Regime& r = tree.regime(rid);
        const RicRegime& reg = sol.regimes()[static_cast<size_t>(rid)];
        const auto survivors = r.survivors();
        for (int m = reg.first; m < reg.last; ++m) {
            const RicStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
            if (!st.present) continue;
            for (size_t d = 0; d < survivors.size(); ++d)
                os << r.key() << ',' << survivors[d] + 1 << ',' << fmt_double(sol.grid().t(m))
                   << ',' << fmt_double(st.p_mean[d]) << ',' << fmt_double(st.phi_mean[d])
                   << ',' << fmt_double(st.zp_mean[d]) << ',' << fmt_double(st.zphi_mean[d])
                   << '\n';
        }
    }
}

void write_riccati_tables_csv(std::ostream& os, const RiccatiSolution& sol) {
    os << "regime,node,t,basis_index,P_coeff,phi_coeff,ZP_coeff,Zphi_coeff\n";
    const auto& tree = sol.tree();
    for (int rid = 0; rid < tree.num_active(); ++rid) {
        const Regime& r = tree.regime(rid);
        const RicRegime& reg = sol.regimes()[static_cast<size_t>(rid)];
        const auto survivors = r.survivors();
        for (int m = reg.first; m < reg.last; ++m) {
            const RicStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
            if (!st.present) continue;
            const std::string t = fmt_double(sol.grid().t(m));
            for (size_t d = 0; d < survivors.size(); ++d) {
                const int node1 = survivors[d] + 1;
                os << r.key() << ',' << node1 << ',' << t << ",-1,"
                   << fmt_double(st.std.center[d]) << ',' << fmt_double(st.std.scale[d])
                   << ",0,0\n";
                os << r.key() << ',' << node1 << ',' << t << ",-2," << fmt_double(st.lo[d])
                   << ',' << fmt_double(st.hi[d]) << ",0,0\n";
                for (int j = 0; j < reg.basis.size(); ++j)
                    os << r.key() << ',' << node1 << ',' << t << ',' << j << ','
                       << fmt_double(st.p_coef[d][static_cast<size_t>(j)]) << ','
                       << fmt_double(st.phi_coef[d][static_cast<size_t>(j)]) << ','
                       << fmt_double(st.zp_coef[d][static_cast<size_t>(j)]) << ','
                       << fmt_double(st.zphi_coef[d][static_cast<size_t>(j)]) << '\n';
            }
        }
    }
}

RiccatiSolution read_riccati_tables_csv(const ProblemSpec& spec, const std::string& path) {
    RiccatiSolution sol;
    sol.spec_ = &spec;
    sol.tree_ = RegimeTree::build(spec.n);
    sol.grid_ = TimeGrid::of(spec);
    sol.regimes_.assign(static_cast<size_t>(sol.tree_.num_active()), RicRegime{});

    const CsvTable t = read_csv(path);
    const int c_regime = t.col("regime"), c_node = t.col("node"), c_t = t.col("t"),
              c_idx = t.col("basis_index"), c_p = t.col("P_coeff"), c_phi = t.col("phi_coeff"),
              c_zp = t.col("ZP_coeff"), c_zphi = t.col("Zphi_coeff");
    if (c_regime < 0 || c_node < 0 || c_t < 0 || c_idx < 0 || c_p < 0 || c_phi < 0 ||
        c_zp < 0 || c_zphi < 0)
        throw ConfigError("riccati tables csv: missing columns in " + path);

    for (const auto& row : t.rows) {
        const Regime r = Regime::from_key(row[static_cast<size_t>(c_regime)], spec.n);
        const int rid = sol.tree_.id_of(r);
        RicRegime& reg = sol.regimes_[static_cast<size_t>(rid)];
        const int m = static_cast<int>(std::llround(
            std::strtod(row[static_cast<size_t>(c_t)].c_str(), nullptr) / sol.grid_.dt));
        if (reg.steps.empty()) {
            reg.basis = PolyBasis::make(r.num_survivors(), spec.mc.basis_degree);
            reg.first = m;
            reg.last = m + 1;
            reg.steps.assign(1, RicStep{});
        }
        if (m < reg.first) {
            reg.steps.insert(reg.steps.begin(), static_cast<size_t>(reg.first - m), RicStep{});
            reg.first = m;
        }
        if (m >= reg.last) {
            reg.steps.insert(reg.steps.end(), static_cast<size_t>(m + 1 - reg.last), RicStep{});
            reg.last = m + 1;
        }
        RicStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
        const auto survivors = r.survivors();
        const int dim = static_cast<int>(survivors.size());
        if (!st.present) {
            st.present = true;
            st.std.center.assign(static_cast<size_t>(dim), 0.0);
            st.std.scale.assign(static_cast<size_t>(dim), 0.0);
            st.lo.assign(static_cast<size_t>(dim), 0.0);
            st.hi.assign(static_cast<size_t>(dim), 0.0);
            const auto zero = std::vector<double>(static_cast<size_t>(reg.basis.size()), 0.0);
            st.p_coef.assign(static_cast<size_t>(dim), zero);
            st.phi_coef.assign(static_cast<size_t>(dim), zero);
            st.zp_coef.assign(static_cast<size_t>(dim), zero);
            st.zphi_coef.assign(static_cast<size_t>(dim), zero);
            st.p_mean.assign(static_cast<size_t>(dim), 0.0);
            st.phi_mean.assign(static_cast<size_t>(dim), 0.0);
            st.zp_mean.assign(static_cast<size_t>(dim), 0.0);
            st.zphi_mean.assign(static_cast<size_t>(dim), 0.0);
        }
        const int node = static_cast<int>(std::strtol(row[static_cast<size_t>(c_node)].c_str(), nullptr, 10)) - 1;
        int d = -1;
        for (size_t k = 0; k < survivors.size(); ++k)
            if (survivors[k] == node) d = static_cast<int>(k);
        if (d < 0) throw ConfigError("riccati tables csv: node not surviving in regime");
        const int idx = static_cast<int>(std::strtol(row[static_cast<size_t>(c_idx)].c_str(), nullptr, 10));
        const double a = std::strtod(row[static_cast<size_t>(c_p)].c_str(), nullptr);
        const double b = std::strtod(row[static_cast<size_t>(c_phi)].c_str(), nullptr);
        const double c2 = std::strtod(row[static_cast<size_t>(c_zp)].c_str(), nullptr);
        const double e2 = std::strtod(row[static_cast<size_t>(c_zphi)].c_str(), nullptr);
        if (idx == -1) {
            st.std.center[static_cast<size_t>(d)] = a;
            st.std.scale[static_cast<size_t>(d)] = b;
        } else if (idx == -2) {
            st.lo[static_cast<size_t>(d)] = a;
            st.hi[static_cast<size_t>(d)] = b;
        } else {
            st.p_coef[static_cast<size_t>(d)][static_cast<size_t>(idx)] = a;
            st.phi_coef[static_cast<size_t>(d)][static_cast<size_t>(idx)] = b;
            st.zp_coef[static_cast<size_t>(d)][static_cast<size_t>(idx)] = c2;
            st.zphi_coef[static_cast<size_t>(d)][static_cast<size_t>(idx)] = e2;
        }
    }
    return sol;
}

}  // namespace cascade
