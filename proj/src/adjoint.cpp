#include "cascade/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cascade/csvio.hpp"
#include "cascade/errors.hpp"
#include "cascade/numeric.hpp"

namespace cascade {

const AdjStep* AdjRegime::step_at(int m) const {
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

namespace {

struct StitchContext {
    const ProblemSpec& spec;
    const RegimeTree& tree;
    const CoeffTable& coeffs;
    const AdjointSolution* sol;              // regimes solved so far (deeper ones)
    TimeGrid grid;
    bool glued;
    const EntryRegistry* registry = nullptr;  // pathwise child values; tables when null
};

// Y of the regime entered after event j-1, evaluated on the same path at the
// switch slot. Recurses through zero-gap default chains; falls back to the
// terminal-cost gradient when the child segment ends the horizon.
void child_y_value(const StitchContext& ctx, const PathBatch& batch, long p, int e,
                   int j, int regime_id, double* out /* length n, prefilled 0 */);

void terminal_y_value(const StitchContext& ctx, const PathBatch& batch, long p,
                      const Segment& seg, int regime_id, double* out) {
    const int n = ctx.spec.n;
    for (int i = 0; i < n; ++i) out[i] = 0.0;
    const Regime& r = ctx.tree.regime(regime_id);
    if (seg.horizon_exit) {
        const double* x = batch.state(p, ctx.grid.M);
        for (int i : r.survivors()) {
            const NodeCoeffs& c = ctx.coeffs.at(regime_id, i);
            out[i] = c.gamma * (x[i] - c.v(ctx.grid.T));
        }
        return;
    }
    const int e = seg.exit;
    const double te = ctx.grid.t(e);
    const int j = seg.event_index;
    const auto& ev = batch.events[static_cast<size_t>(p)][static_cast<size_t>(j)];
    const std::vector<double> x_pre = state_with_unapplied(batch, p, e, j);
    std::vector<double> cont(static_cast<size_t>(n), 0.0);
    if (!ctx.glued) {
        const int child_id = ctx.tree.id_of_mask(r.defaulted | (1u << ev.node));
        child_y_value(ctx, batch, p, e, j + 1, child_id, cont.data());
    }
    for (int i : r.survivors()) {
        const NodeCoeffs& c = ctx.coeffs.at(regime_id, i);
        out[i] = c.gamma * (x_pre[static_cast<size_t>(i)] - c.v(te));
        if (i != ev.node) out[i] += cont[static_cast<size_t>(i)];
    }
}

void child_y_value(const StitchContext& ctx, const PathBatch& batch, long p, int e,
                   int j, int regime_id, double* out) {
    const int n = ctx.spec.n;
    for (int i = 0; i < n; ++i) out[i] = 0.0;
    if (regime_id == ctx.tree.terminal_id()) return;
    const Regime& r = ctx.tree.regime(regime_id);
    const auto& evs = batch.events[static_cast<size_t>(p)];
    const double te = ctx.grid.t(e);
    const std::vector<double> x_post = state_with_unapplied(batch, p, e, j);

    const bool zero_gap = static_cast<size_t>(j) < evs.size() &&
                          evs[static_cast<size_t>(j)].step == e;
    if (zero_gap) {
        std::vector<double> cont(static_cast<size_t>(n), 0.0);
        const int next_id =
            ctx.tree.id_of_mask(r.defaulted | (1u << evs[static_cast<size_t>(j)].node));
        child_y_value(ctx, batch, p, e, j + 1, next_id, cont.data());
        for (int i : r.survivors()) {
            const NodeCoeffs& c = ctx.coeffs.at(regime_id, i);
            out[i] = c.gamma * (x_post[static_cast<size_t>(i)] - c.v(te));
            if (i != evs[static_cast<size_t>(j)].node) out[i] += cont[static_cast<size_t>(i)];
        }
        return;
    }
    if (e == ctx.grid.M) {
        for (int i : r.survivors()) {
            const NodeCoeffs& c = ctx.coeffs.at(regime_id, i);
            out[i] = c.gamma * (x_post[static_cast<size_t>(i)] - c.v(ctx.grid.T));
        }
        return;
    }
    // positive-length child stay: the pathwise value recorded at its entry,
    // or the child's table when no registry is in play (held-out diagnostics)
    if (ctx.registry) {
        if (const auto* vals = ctx.registry->find(&batch, p, e, regime_id)) {
            for (int i = 0; i < n; ++i) out[i] = (*vals)[static_cast<size_t>(i)];
            return;
        }
    }
    std::vector<double> z(static_cast<size_t>(n), 0.0);
    ctx.sol->evaluate(r, te, x_post.data(), out, z.data());
}

}  // namespace

void AdjointSolution::evaluate(const Regime& regime, double t, const double* x,
                               double* y, double* z_diag, bool* extrapolated) const {
    const int n = regime.n;
    for (int i = 0; i < n; ++i) y[i] = z_diag[i] = 0.0;
    if (extrapolated) *extrapolated = false;
    if (regime.terminal()) return;
    const int rid = tree_.id_of(regime);
    const AdjRegime& reg = regimes_[static_cast<size_t>(rid)];
    const int m_query = std::clamp(static_cast<int>(std::floor(t / grid_.dt + 1e-9)),
                                   reg.first, std::max(reg.first, reg.last - 1));
    const AdjStep* st = reg.step_at(m_query);
    if (!st) throw SolverError("adjoint solution has no tables for regime \"" +
                               regime.key() + "\"");

    const auto survivors = regime.survivors();
    std::vector<double> xs(survivors.size());
    for (size_t d = 0; d < survivors.size(); ++d)
        xs[d] = x[survivors[d]];
    if (extrapolated) {
        for (size_t d = 0; d < survivors.size(); ++d) {
            const double span = st->hi[d] - st->lo[d];
            const double margin = 0.05 * span + 1e-12;
            if (xs[d] < st->lo[d] - margin || xs[d] > st->hi[d] + margin)
                *extrapolated = true;
        }
    }
    std::vector<double> fit_y(static_cast<size_t>(n), 0.0), fit_z(static_cast<size_t>(n), 0.0);
    for (size_t d = 0; d < survivors.size(); ++d) {
        fit_y[static_cast<size_t>(survivors[d])] =
            eval_poly_linear_ext(reg.basis, st->std, st->y_coef[d], st->lo, st->hi, xs.data());
        fit_z[static_cast<size_t>(survivors[d])] =
            eval_poly_linear_ext(reg.basis, st->std, st->z_coef[d], st->lo, st->hi, xs.data());
    }
    // one-step driver add-on: value at the left grid point of t's interval
    const double tm = grid_.t(m_query);
    std::vector<double> a(static_cast<size_t>(n), 0.0), g(static_cast<size_t>(n), 0.0);
    if (!model_.closed_form_lq) under_policy_.eval(regime, tm, x, a.data());
    model_.grad_x_h(regime, tm, x, a.data(), fit_y.data(), fit_z.data(), g.data());
    for (int i : survivors) {
        y[i] = fit_y[static_cast<size_t>(i)] + grid_.dt * g[static_cast<size_t>(i)];
        z_diag[i] = fit_z[static_cast<size_t>(i)];
    }
}

double AdjointSolution::mean_residual() const {
    double num = 0, den = 0;
    for (const auto& reg : regimes_)
        for (const auto& st : reg.steps)
            if (st.present) {
                num += st.resid_rms * static_cast<double>(st.n_samples);
                den += static_cast<double>(st.n_samples);
            }
    return den > 0 ? num / den : 0.0;
}

AdjointSolution solve_adjoint(const ProblemSpec& spec, const RegimeTree& tree,
                              const ModelFunctions& model, const Policy& policy,
                              std::span<const PathBatch* const> batches, bool glued) {
    const TimeGrid grid = TimeGrid::of(spec);
    const CoeffTable coeffs(spec, tree);
    const NoiseStream noise(spec.mc.seed);
    const int n = spec.n;

    AdjointSolution sol;
    sol.spec_ = &spec;
    sol.tree_ = tree;
    sol.grid_ = grid;
    sol.model_ = model;
    sol.under_policy_ = policy;
    sol.glued_ = glued;
    sol.regimes_.assign(static_cast<size_t>(tree.num_active()), AdjRegime{});

    OccupancyMap occ = OccupancyMap::build(tree, grid.M, batches);
    std::vector<bool> synthetic_regimes;
    const auto synth =
        ensure_occupancy(spec, tree, model, policy, occ, synthetic_regimes);

    // deepest regimes first
    std::vector<int> order(static_cast<size_t>(tree.num_active()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return tree.regime(a).num_defaulted() > tree.regime(b).num_defaulted();
    });

    EntryRegistry registry;
    StitchContext ctx{spec, tree, coeffs, &sol, grid, glued, &registry};
    StitchContext table_ctx{spec, tree, coeffs, &sol, grid, glued, nullptr};

    for (int rid : order) {
        const Regime& r = tree.regime(rid);
        const RegimeOccupancy& ro = occ.per_regime[static_cast<size_t>(rid)];
        AdjRegime& reg = sol.regimes_[static_cast<size_t>(rid)];
        const auto survivors = r.survivors();
        const int dim = static_cast<int>(survivors.size());
        reg.basis = PolyBasis::make(dim, spec.mc.basis_degree);
        reg.synthetic = synthetic_regimes[static_cast<size_t>(rid)];
        reg.low_confidence =
            ro.organic_segments < std::max<long>(1, spec.mc.num_paths / 10);
        if (ro.empty())
            throw SolverError("adjoint solve: no occupancy for regime \"" + r.key() + "\"");
        reg.first = ro.min_entry;
        reg.last = ro.max_exit;
        reg.steps.assign(static_cast<size_t>(reg.last - reg.first), AdjStep{});

        const long nsegs = static_cast<long>(ro.segs.size());
        std::vector<std::vector<double>> val(survivors.size(),
                                             std::vector<double>(static_cast<size_t>(nsegs), 0.0));
        std::vector<double> term(static_cast<size_t>(n)), term_tbl(static_cast<size_t>(n));
        std::vector<double> stitch_acc(static_cast<size_t>(reg.last - reg.first), 0.0);
        std::vector<long> stitch_cnt(static_cast<size_t>(reg.last - reg.first), 0);

        for (int m = ro.max_exit - 1; m >= ro.min_entry; --m) {
            const auto& contributors = ro.at_step[static_cast<size_t>(m)];
            if (contributors.empty()) continue;
            const long cnt = static_cast<long>(contributors.size());
            const double tm = grid.t(m);

            // initialize terminal values of segments exiting at m+1; the
            // stitching diagnostic compares the pathwise child values the
            // stitch consumes against the child's regression tables
            for (int sidx : contributors) {
                const Segment& sg = ro.segs[static_cast<size_t>(sidx)];
                if (sg.exit != m + 1) continue;
                terminal_y_value(ctx, *sg.batch, sg.p, sg, rid, term.data());
                for (size_t d = 0; d < survivors.size(); ++d)
                    val[d][static_cast<size_t>(sidx)] = term[static_cast<size_t>(survivors[d])];
                if (!sg.horizon_exit) {
                    terminal_y_value(table_ctx, *sg.batch, sg.p, sg, rid, term_tbl.data());
                    for (size_t d = 0; d < survivors.size(); ++d)
                        stitch_acc[static_cast<size_t>(m - reg.first)] +=
                            std::abs(term[static_cast<size_t>(survivors[d])] -
                                     term_tbl[static_cast<size_t>(survivors[d])]);
                    stitch_cnt[static_cast<size_t>(m - reg.first)] +=
                        static_cast<long>(survivors.size());
                }
            }

            // design
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
                throw SolverError(std::string(e.what()) + " (adjoint, regime \"" + r.key() +
                                  "\", step " + std::to_string(m) + ")");
            }

            AdjStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
            st.present = true;
            st.std = fitter.standardizer();
            st.lo = fitter.hull_lo();
            st.hi = fitter.hull_hi();
            st.cond_log10 = fitter.cond_log10();
            st.n_samples = cnt;
            st.synthetic = any_synth;
            st.y_coef.resize(survivors.size());
            st.z_coef.resize(survivors.size());

            std::vector<double> targets(static_cast<size_t>(cnt));
            std::vector<double> fitted(static_cast<size_t>(cnt));
            std::vector<double> ztarget(static_cast<size_t>(cnt));
            double resid_sq = 0;
            std::vector<std::vector<double>> fit_y_at(survivors.size());
            std::vector<std::vector<double>> fit_z_at(survivors.size());

            for (size_t d = 0; d < survivors.size(); ++d) {
                for (long c = 0; c < cnt; ++c)
                    targets[static_cast<size_t>(c)] =
                        val[d][static_cast<size_t>(contributors[static_cast<size_t>(c)])];
                auto fy = fitter.fit(targets);
                st.y_coef[d] = fy.coef;
                resid_sq += fy.resid_rms * fy.resid_rms;

                // centered martingale-increment regression for Z
                const int node = survivors[d];
                for (long c = 0; c < cnt; ++c) {
                    const Segment& sg =
                        ro.segs[static_cast<size_t>(contributors[static_cast<size_t>(c)])];
                    const double fv = fitter.evaluate(fy.coef, xs.data() + static_cast<size_t>(c) * dim);
                    fitted[static_cast<size_t>(c)] = fv;
                    const double dw =
                        std::sqrt(grid.dt) *
                        noise.gaussian(sg.batch->noise_path_id(sg.p), static_cast<uint32_t>(m),
                                       static_cast<uint32_t>(node), sg.batch->purpose);
                    ztarget[static_cast<size_t>(c)] =
                        (targets[static_cast<size_t>(c)] - fv) * dw / grid.dt;
                }
                auto fz = fitter.fit(ztarget);
                st.z_coef[d] = fz.coef;

                // stash fitted values for the driver update
                fit_y_at[d] = fitted;
                fit_z_at[d].resize(static_cast<size_t>(cnt));
                for (long c = 0; c < cnt; ++c)
                    fit_z_at[d][static_cast<size_t>(c)] =
                        fitter.evaluate(fz.coef, xs.data() + static_cast<size_t>(c) * dim);
            }
            st.resid_rms = std::sqrt(resid_sq / static_cast<double>(survivors.size()));
            st.stitch_sum = stitch_acc[static_cast<size_t>(m - reg.first)];
            st.stitch_count = stitch_cnt[static_cast<size_t>(m - reg.first)];

            // pathwise value update with the explicit driver
            std::vector<double> xfull(static_cast<size_t>(n)), afull(static_cast<size_t>(n), 0.0);
            std::vector<double> yfull(static_cast<size_t>(n)), zfull(static_cast<size_t>(n));
            std::vector<double> g(static_cast<size_t>(n));
            for (long c = 0; c < cnt; ++c) {
                const int sidx = contributors[static_cast<size_t>(c)];
                const Segment& sg = ro.segs[static_cast<size_t>(sidx)];
                const double* x = sg.batch->state(sg.p, m);
                for (int i = 0; i < n; ++i) {
                    xfull[static_cast<size_t>(i)] = x[i];
                    yfull[static_cast<size_t>(i)] = 0;
                    zfull[static_cast<size_t>(i)] = 0;
                }
                for (size_t d = 0; d < survivors.size(); ++d) {
                    yfull[static_cast<size_t>(survivors[d])] = fit_y_at[d][static_cast<size_t>(c)];
                    zfull[static_cast<size_t>(survivors[d])] = fit_z_at[d][static_cast<size_t>(c)];
                }
                if (!model.closed_form_lq) policy.eval(r, tm, xfull.data(), afull.data());
                model.grad_x_h(r, tm, xfull.data(), afull.data(), yfull.data(), zfull.data(),
                               g.data());
                for (size_t d = 0; d < survivors.size(); ++d)
                    val[d][static_cast<size_t>(sidx)] =
                        yfull[static_cast<size_t>(survivors[d])] +
                        grid.dt * g[static_cast<size_t>(survivors[d])];
            }
        }

        // pathwise values at each segment entry, consumed by parent stitches
        for (int sidx = 0; sidx < static_cast<int>(ro.segs.size()); ++sidx) {
            const Segment& sg = ro.segs[static_cast<size_t>(sidx)];
            std::vector<double> vals(static_cast<size_t>(n), 0.0);
            for (size_t d = 0; d < survivors.size(); ++d)
                vals[static_cast<size_t>(survivors[d])] = val[d][static_cast<size_t>(sidx)];
            registry.record(sg.batch, sg.p, sg.entry, rid, std::move(vals));
        }
    }
    return sol;
}

Policy make_adjoint_policy(const ProblemSpec& spec,
                           std::shared_ptr<const AdjointSolution> sol, bool glued_kind) {
    const int n = spec.n;
    return Policy::from_fn(
        spec, glued_kind ? Policy::Kind::glued : Policy::Kind::adjoint_feedback,
        [sol, n](const Regime& r, double t, const double* x, double* a) {
            std::vector<double> y(static_cast<size_t>(n)), z(static_cast<size_t>(n));
            sol->evaluate(r, t, x, y.data(), z.data());
            for (int i : r.survivors()) a[i] = -y[static_cast<size_t>(i)];
        });
}

double discrete_bsde_residual(const ProblemSpec& spec, const RegimeTree& tree,
                              const AdjointSolution& sol, const Policy& policy,
                              std::span<const PathBatch* const> heldout) {
    const TimeGrid grid = sol.grid();
    const CoeffTable coeffs(spec, tree);
    const NoiseStream noise(spec.mc.seed);
    const int n = spec.n;
    OccupancyMap occ = OccupancyMap::build(tree, grid.M, heldout);

    StitchContext ctx{spec, tree, coeffs, &sol, grid, sol.glued(), nullptr};
    const ModelFunctions model = ModelFunctions::lq(spec);

    std::vector<double> rows;
    std::vector<double> y0(static_cast<size_t>(n)), z0(static_cast<size_t>(n)),
        y1(static_cast<size_t>(n)), z1(static_cast<size_t>(n)), a(static_cast<size_t>(n)),
        g(static_cast<size_t>(n)), term(static_cast<size_t>(n));
    for (int rid = 0; rid < tree.num_active(); ++rid) {
        const Regime& r = tree.regime(rid);
        const RegimeOccupancy& ro = occ.per_regime[static_cast<size_t>(rid)];
        for (const Segment& sg : ro.segs) {
            for (int m = sg.entry; m < sg.exit; ++m) {
                const double tm = grid.t(m);
                const double* xm = sg.batch->state(sg.p, m);
                sol.evaluate(r, tm, xm, y0.data(), z0.data());
                if (m + 1 == sg.exit) {
                    terminal_y_value(ctx, *sg.batch, sg.p, sg, rid, term.data());
                } else {
                    sol.evaluate(r, grid.t(m + 1), sg.batch->state(sg.p, m + 1),
                                 y1.data(), z1.data());
                    for (int i = 0; i < n; ++i) term[static_cast<size_t>(i)] = y1[static_cast<size_t>(i)];
                }
                policy.eval(r, tm, xm, a.data());
                model.grad_x_h(r, tm, xm, a.data(), y0.data(), z0.data(), g.data());
                for (int i : r.survivors()) {
                    const double dw = std::sqrt(grid.dt) *
                                      noise.gaussian(sg.batch->noise_path_id(sg.p),
                                                     static_cast<uint32_t>(m),
                                                     static_cast<uint32_t>(i),
                                                     sg.batch->purpose);
                    const double res = y0[static_cast<size_t>(i)] -
                                       (term[static_cast<size_t>(i)] +
                                        grid.dt * g[static_cast<size_t>(i)] -
                                        z0[static_cast<size_t>(i)] * dw);
                    rows.push_back(std::abs(res));
                }
            }
        }
    }
    if (rows.empty()) return 0.0;
    return pairwise_sum(rows) / static_cast<double>(rows.size());
}

void write_adjoint_csv(std::ostream& os, const AdjointSolution& sol) {
    os << "regime,t,node,basis_index,coeff,coeff_z\n";
    const auto& tree = sol.tree();
    for (int rid = 0; rid < tree.num_active(); ++rid) {
        const Regime& r = tree.regime(rid);
        const AdjRegime& reg = sol.regimes()[static_cast<size_t>(rid)];
        const auto survivors = r.survivors();
        for (int m = reg.first; m < reg.last; ++m) {
            const AdjStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
            if (!st.present) continue;
            const std::string t = fmt_double(sol.grid().t(m));
            for (size_t d = 0; d < survivors.size(); ++d) {
                const int node1 = survivors[d] + 1;
                // basis_index -1: standardizer (center, scale); -2: hull (lo, hi)
                os << r.key() << ',' << t << ',' << node1 << ",-1,"
                   << fmt_double(st.std.center[d]) << ',' << fmt_double(st.std.scale[d]) << '\n';
                os << r.key() << ',' << t << ',' << node1 << ",-2,"
                   << fmt_double(st.lo[d]) << ',' << fmt_double(st.hi[d]) << '\n';
                for (int j = 0; j < reg.basis.size(); ++j)
                    os << r.key() << ',' << t << ',' << node1 << ',' << j << ','
                       << fmt_double(st.y_coef[d][static_cast<size_t>(j)]) << ','
                       << fmt_double(st.z_coef[d][static_cast<size_t>(j)]) << '\n';
            }
        }
    }
}

void write_adjoint_diag_csv(std::ostream& os, const AdjointSolution& sol) {
    os << "regime,t,resid_rms,cond_log10,n_samples,synthetic,low_confidence,"
          "stitch_resid,stitch_count\n";
    const auto& tree = sol.tree();
    for (int rid = 0; rid < tree.num_active(); ++rid) {
        const Regime& r = tree.regime(rid);
        const AdjRegime& reg = sol.regimes()[static_cast<size_t>(rid)];
        for (int m = reg.first; m < reg.last; ++m) {
            const AdjStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
            if (!st.present) continue;
            os << r.key() << ',' << fmt_double(sol.grid().t(m)) << ','
               << fmt_double(st.resid_rms) << ',' << fmt_double(st.cond_log10) << ','
               << st.n_samples << ',' << (st.synthetic ? 1 : 0) << ','
               << (reg.low_confidence ? 1 : 0) << ','
               << fmt_double(st.stitch_count ? st.stitch_sum / static_cast<double>(st.stitch_count) : 0.0)
               << ',' << st.stitch_count << '\n';
        }
    }
}

AdjointSolution read_adjoint_csv(const ProblemSpec& spec, const std::string& table_path,
                                 const std::string& diag_path) {
    AdjointSolution sol;
    sol.spec_ = &spec;
    sol.tree_ = RegimeTree::build(spec.n);
    sol.grid_ = TimeGrid::of(spec);
    sol.model_ = ModelFunctions::lq(spec);
    sol.regimes_.assign(static_cast<size_t>(sol.tree_.num_active()), AdjRegime{});

    const CsvTable t = read_csv(table_path);
    const int c_regime = t.col("regime"), c_t = t.col("t"), c_node = t.col("node"),
              c_idx = t.col("basis_index"), c_y = t.col("coeff"), c_z = t.col("coeff_z");
    if (c_regime < 0 || c_t < 0 || c_node < 0 || c_idx < 0 || c_y < 0 || c_z < 0)
        throw ConfigError("adjoint table csv: missing columns in " + table_path);

    // collect steps per regime
    std::map<std::pair<int, int>, bool> seen;  // (rid, step)
    for (const auto& row : t.rows) {
        const Regime r = Regime::from_key(row[static_cast<size_t>(c_regime)], spec.n);
        const int rid = sol.tree_.id_of(r);
        const int m = static_cast<int>(std::llround(std::strtod(row[static_cast<size_t>(c_t)].c_str(), nullptr) / sol.grid_.dt));
        AdjRegime& reg = sol.regimes_[static_cast<size_t>(rid)];
        if (reg.steps.empty()) {
            reg.basis = PolyBasis::make(r.num_survivors(), spec.mc.basis_degree);
            reg.first = m;
            reg.last = m + 1;
            reg.steps.assign(1, AdjStep{});
        }
        if (m < reg.first) {
            reg.steps.insert(reg.steps.begin(), static_cast<size_t>(reg.first - m), AdjStep{});
            reg.first = m;
        }
        if (m >= reg.last) {
            reg.steps.insert(reg.steps.end(), static_cast<size_t>(m + 1 - reg.last), AdjStep{});
            reg.last = m + 1;
        }
        AdjStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
        const auto survivors = r.survivors();
        const int dim = static_cast<int>(survivors.size());
        if (!st.present) {
            st.present = true;
            st.std.center.assign(static_cast<size_t>(dim), 0.0);
            st.std.scale.assign(static_cast<size_t>(dim), 0.0);
            st.lo.assign(static_cast<size_t>(dim), 0.0);
            st.hi.assign(static_cast<size_t>(dim), 0.0);
            st.y_coef.assign(static_cast<size_t>(dim),
                             std::vector<double>(static_cast<size_t>(reg.basis.size()), 0.0));
            st.z_coef.assign(static_cast<size_t>(dim),
                             std::vector<double>(static_cast<size_t>(reg.basis.size()), 0.0));
        }
        const int node = static_cast<int>(std::strtol(row[static_cast<size_t>(c_node)].c_str(), nullptr, 10)) - 1;
        int d = -1;
        for (size_t k = 0; k < survivors.size(); ++k)
            if (survivors[k] == node) d = static_cast<int>(k);
        if (d < 0) throw ConfigError("adjoint table csv: node not surviving in regime");
        const int idx = static_cast<int>(std::strtol(row[static_cast<size_t>(c_idx)].c_str(), nullptr, 10));
        const double a = std::strtod(row[static_cast<size_t>(c_y)].c_str(), nullptr);
        const double b = std::strtod(row[static_cast<size_t>(c_z)].c_str(), nullptr);
        if (idx == -1) {
            st.std.center[static_cast<size_t>(d)] = a;
            st.std.scale[static_cast<size_t>(d)] = b;
        } else if (idx == -2) {
            st.lo[static_cast<size_t>(d)] = a;
            st.hi[static_cast<size_t>(d)] = b;
        } else {
            st.y_coef[static_cast<size_t>(d)][static_cast<size_t>(idx)] = a;
            st.z_coef[static_cast<size_t>(d)][static_cast<size_t>(idx)] = b;
        }
        seen[{rid, m}] = true;
    }

    if (!diag_path.empty()) {
        const CsvTable dg = read_csv(diag_path);
        const int d_regime = dg.col("regime"), d_t = dg.col("t"), d_res = dg.col("resid_rms"),
                  d_n = dg.col("n_samples"), d_syn = dg.col("synthetic"),
                  d_low = dg.col("low_confidence");
        if (d_regime >= 0 && d_t >= 0) {
            for (const auto& row : dg.rows) {
                const Regime r = Regime::from_key(row[static_cast<size_t>(d_regime)], spec.n);
                const int rid = sol.tree_.id_of(r);
                AdjRegime& reg = sol.regimes_[static_cast<size_t>(rid)];
                const int m = static_cast<int>(std::llround(
                    std::strtod(row[static_cast<size_t>(d_t)].c_str(), nullptr) / sol.grid_.dt));
                if (m < reg.first || m >= reg.last) continue;
                AdjStep& st = reg.steps[static_cast<size_t>(m - reg.first)];
                if (d_res >= 0) st.resid_rms = std::strtod(row[static_cast<size_t>(d_res)].c_str(), nullptr);
                if (d_n >= 0) st.n_samples = std::strtol(row[static_cast<size_t>(d_n)].c_str(), nullptr, 10);
                if (d_syn >= 0) st.synthetic = row[static_cast<size_t>(d_syn)] == "1";
                if (d_low >= 0) reg.low_confidence = row[static_cast<size_t>(d_low)] == "1";
            }
        }
    }
    return sol;
}

}  // namespace cascade
