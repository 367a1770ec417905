#pragma once

#include <map>
#include <memory>
#include <span>
#include <tuple>
#include <vector>

#include "cascade/model.hpp"
#include "cascade/policy.hpp"
#include "cascade/regimes.hpp"
#include "cascade/simulate.hpp"

namespace cascade {

// One contiguous stay of a path inside a regime: grid slots [entry, exit].
// Active steps are entry..exit-1; the slot `exit` is the switch (or horizon)
// slot. Zero-length stays (entry == exit, simultaneous defaults or entry at
// the horizon) contribute no regression samples and are not stored; the
// stitch evaluation recurses through them instead.
struct Segment {
    const PathBatch* batch = nullptr;
    long p = 0;
    int entry = 0;
    int exit = 0;
    bool horizon_exit = false;
    int event_index = -1;  // index into batch->events[p] when !horizon_exit
};

struct RegimeOccupancy {
    std::vector<Segment> segs;
    std::vector<std::vector<int>> at_step;  // per grid step: contributing seg ids
    long organic_segments = 0;
    long synthetic_segments = 0;
    int min_entry = 0;
    int max_exit = 0;  // 0 when empty
    bool empty() const { return segs.empty(); }
};

struct OccupancyMap {
    int M = 0;
    std::vector<RegimeOccupancy> per_regime;  // indexed by RegimeTree id

    static OccupancyMap build(const RegimeTree& tree, int M,
                              std::span<const PathBatch* const> batches);
    void append(const RegimeTree& tree, const PathBatch& batch);
};

/// State at slot `step` with events[j..] not yet applied (their nodes carry
/// the pre-freeze crossing values). Used to reconstruct the exit state of a
/// regime inside a same-step default chain.
std::vector<double> state_with_unapplied(const PathBatch& batch, long p, int step,
                                         int first_unapplied_event);

// Pathwise backward values at segment entries, recorded as each regime's
// sweep finishes. The parent regime's terminal stitching consumes the child
// value realized on the same path; the stitching diagnostic then measures how
// far the child's regression table sits from these pathwise values.
class EntryRegistry {
  public:
    using Key = std::tuple<const void*, long, int, int>;  // batch, path, step, regime id

    void record(const PathBatch* batch, long p, int step, int regime_id,
                std::vector<double> values) {
        vals_[Key{batch, p, step, regime_id}] = std::move(values);
    }
    const std::vector<double>* find(const PathBatch* batch, long p, int step,
                                    int regime_id) const {
        auto it = vals_.find(Key{batch, p, step, regime_id});
        return it == vals_.end() ? nullptr : &it->second;
    }

  private:
    std::map<Key, std::vector<double>> vals_;
};

// Synthetic fan-out: gives every active regime positive-length occupancy by
// branching paths off the parent occupancy (missing node zeroed) with fresh
// noise substreams. Processes regimes by increasing depth so chains of rare
// regimes stay grounded. Returns the owned synthetic batches; `occ` is
// updated in place and `synthetic_regimes` flags which regimes got them.
std::vector<std::unique_ptr<PathBatch>> ensure_occupancy(
    const ProblemSpec& spec, const RegimeTree& tree, const ModelFunctions& model,
    const Policy& policy, OccupancyMap& occ, std::vector<bool>& synthetic_regimes);

}  // namespace cascade
