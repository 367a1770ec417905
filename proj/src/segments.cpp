#include "cascade/segments.hpp"

#include <algorithm>

#include "cascade/errors.hpp"

namespace cascade {

namespace {

void append_path(OccupancyMap& occ, const RegimeTree& tree, const PathBatch& batch, long p) {
    if (!batch.valid[static_cast<size_t>(p)]) return;
    const int M = batch.grid.M;
    const auto& evs = batch.events[static_cast<size_t>(p)];
    int entry = batch.start_step[static_cast<size_t>(p)];
    int regime_id = batch.regime_at(p, entry);
    const bool synthetic = batch.purpose == Stream::synthetic;

    auto push = [&](int exit, bool horizon, int event_index) {
        if (exit <= entry) return;  // zero-length stay: stitch recursion handles it
        auto& ro = occ.per_regime[static_cast<size_t>(regime_id)];
        ro.segs.push_back(Segment{&batch, p, entry, exit, horizon, event_index});
        if (synthetic) ++ro.synthetic_segments; else ++ro.organic_segments;
    };

    for (size_t j = 0; j < evs.size(); ++j) {
        push(evs[j].step, false, static_cast<int>(j));
        regime_id = tree.id_of_mask(tree.regime(regime_id).defaulted |
                                    (1u << evs[j].node));
        entry = evs[j].step;
        if (regime_id == tree.terminal_id()) return;
    }
    push(M, true, -1);
}

}  // namespace

OccupancyMap OccupancyMap::build(const RegimeTree& tree, int M,
                                 std::span<const PathBatch* const> batches) {
    OccupancyMap occ;
    occ.M = M;
    occ.per_regime.assign(static_cast<size_t>(tree.num_active()), RegimeOccupancy{});
    for (const PathBatch* b : batches) occ.append(tree, *b);
    return occ;
}

void OccupancyMap::append(const RegimeTree& tree, const PathBatch& batch) {
    for (long p = 0; p < batch.num_paths; ++p) append_path(*this, tree, batch, p);
    for (auto& ro : per_regime) {
        ro.at_step.assign(static_cast<size_t>(M), {});
        ro.min_entry = M;
        ro.max_exit = 0;
        for (int s = 0; s < static_cast<int>(ro.segs.size()); ++s) {
            const Segment& sg = ro.segs[static_cast<size_t>(s)];
            ro.min_entry = std::min(ro.min_entry, sg.entry);
            ro.max_exit = std::max(ro.max_exit, sg.exit);
            for (int m = sg.entry; m < sg.exit; ++m)
                ro.at_step[static_cast<size_t>(m)].push_back(s);
        }
        if (ro.segs.empty()) ro.min_entry = 0;
    }
}

std::vector<double> state_with_unapplied(const PathBatch& batch, long p, int step,
                                         int first_unapplied_event) {
    const double* s = batch.state(p, step);
    std::vector<double> x(s, s + batch.n);
    const auto& evs = batch.events[static_cast<size_t>(p)];
    for (size_t j = static_cast<size_t>(first_unapplied_event); j < evs.size(); ++j)
        if (evs[j].step == step) x[static_cast<size_t>(evs[j].node)] = evs[j].prefreeze;
    return x;
}

std::vector<std::unique_ptr<PathBatch>> ensure_occupancy(
    const ProblemSpec& spec, const RegimeTree& tree, const ModelFunctions& model,
    const Policy& policy, OccupancyMap& occ, std::vector<bool>& synthetic_regimes) {
    std::vector<std::unique_ptr<PathBatch>> out;
    synthetic_regimes.assign(static_cast<size_t>(tree.num_active()), false);

    // regimes ordered by depth, shallow first
    std::vector<int> ids(static_cast<size_t>(tree.num_active()));
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return tree.regime(a).num_defaulted() < tree.regime(b).num_defaulted();
    });

    const CoeffTable coeffs(spec, tree);
    const NoiseStream noise(spec.mc.seed);
    const int M = occ.M;

    for (int id : ids) {
        const Regime& r = tree.regime(id);
        if (r.num_defaulted() == 0) continue;
        if (!occ.per_regime[static_cast<size_t>(id)].empty()) continue;

        // pick the parent with the largest occupancy; the missing node is the
        // one whose default leads from parent to r
        int best_parent = -1, best_node = -1;
        size_t best_count = 0;
        for (int node : r.defaulted_list()) {
            const uint32_t pmask = r.defaulted & ~(1u << node);
            const int pid = tree.id_of_mask(pmask);
            const size_t cnt = occ.per_regime[static_cast<size_t>(pid)].segs.size();
            if (cnt > best_count) {
                best_count = cnt;
                best_parent = pid;
                best_node = node;
            }
        }
        if (best_parent < 0)
            throw SolverError("cannot synthesize occupancy for regime \"" + r.key() +
                              "\": no parent regime has any paths");

        const RegimeOccupancy& po = occ.per_regime[static_cast<size_t>(best_parent)];
        // occupancy points (seg, step) with step < M, in fixed order
        std::vector<std::pair<int, int>> points;
        for (int s = 0; s < static_cast<int>(po.segs.size()); ++s) {
            const Segment& sg = po.segs[static_cast<size_t>(s)];
            for (int m = sg.entry; m < sg.exit && m < M; ++m) points.emplace_back(s, m);
        }
        if (points.empty())
            throw SolverError("cannot synthesize occupancy for regime \"" + r.key() +
                              "\": parent occupancy is empty");

        const long want = std::clamp<long>(spec.mc.num_paths / 10, 32, 1024);
        const long k = std::min<long>(want, static_cast<long>(points.size()));

        auto batch = std::make_unique<PathBatch>();
        batch->n = spec.n;
        batch->grid = TimeGrid::of(spec);
        batch->num_paths = k;
        batch->seed = spec.mc.seed;
        batch->path_id_base = (uint64_t{1} << 40) + static_cast<uint64_t>(id) * (uint64_t{1} << 20);
        batch->purpose = Stream::synthetic;
        const size_t slots = static_cast<size_t>(k) * (M + 1);
        batch->states.assign(slots * static_cast<size_t>(spec.n), 0.0);
        batch->regime.assign(slots, kNotStartedRegime);
        batch->start_step.assign(static_cast<size_t>(k), 0);
        batch->events.assign(static_cast<size_t>(k), {});
        batch->run_cost.assign(static_cast<size_t>(k), 0.0);
        batch->term_cost.assign(static_cast<size_t>(k), 0.0);
        batch->valid.assign(static_cast<size_t>(k), 0);

        for (long i = 0; i < k; ++i) {
            const auto [sidx, step] =
                points[static_cast<size_t>(i * static_cast<long>(points.size()) / k)];
            const Segment& sg = po.segs[static_cast<size_t>(sidx)];
            std::vector<double> x(sg.batch->state(sg.p, step),
                                  sg.batch->state(sg.p, step) + spec.n);
            x[static_cast<size_t>(best_node)] = 0.0;  // branch state: missing node frozen
            simulate_one(spec, tree, coeffs, model, policy, noise, *batch, i, step, id,
                         x.data());
        }

        occ.append(tree, *batch);
        synthetic_regimes[static_cast<size_t>(id)] = true;
        out.push_back(std::move(batch));
    }
    return out;
}

}  // namespace cascade
