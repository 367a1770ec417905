#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cascade {

// A regime is identified by its set of defaulted nodes; the survivor mask is
// derived, never stored separately. Nodes are 0-based internally and 1-based
// in all external text (config sections, CSV columns).
struct Regime {
    int n = 0;
    uint32_t defaulted = 0;  // bit i set <=> node i defaulted

    static Regime root(int n) { return Regime{n, 0}; }

    bool node_defaulted(int node) const { return (defaulted >> node) & 1u; }
    bool terminal() const { return num_survivors() == 0; }
    int num_defaulted() const { return __builtin_popcount(defaulted); }
    int num_survivors() const { return n - num_defaulted(); }

    std::vector<int> survivors() const;
    std::vector<int> defaulted_list() const;

    /// Survivor mask as a 0/1 vector (1 = surviving).
    std::vector<double> mask() const;

    /// Serialized form: sorted comma-joined 1-based indices, "" for the root.
    std::string key() const;
    static Regime from_key(const std::string& key, int n);

    bool operator==(const Regime& o) const {
        return n == o.n && defaulted == o.defaulted;
    }
};

/// Marks node `node` as defaulted. Contract violation if already defaulted.
Regime apply_default(const Regime& regime, int node);

/// All subsets of {1..n} of size 0..n-1, ordered by size then lexicographic
/// defaulted list. These are the regimes that carry dynamics.
std::vector<Regime> enumerate_active_regimes(int n);

/// One child per survivor, ascending node order. Regime must be active.
std::vector<std::pair<int, Regime>> children(const Regime& regime);

// Index of the enumerated active regimes plus a marker id for the terminal
// (all-defaulted) regime; the solvers and path storage use these ids.
class RegimeTree {
  public:
    static RegimeTree build(int n);

    int n() const { return n_; }
    int num_active() const { return static_cast<int>(actives_.size()); }
    const std::vector<Regime>& actives() const { return actives_; }
    const Regime& regime(int id) const { return actives_[static_cast<size_t>(id)]; }
    int terminal_id() const { return num_active(); }

    int id_of(const Regime& r) const;
    int id_of_mask(uint32_t defaulted) const;

  private:
    int n_ = 0;
    std::vector<Regime> actives_;
    std::unordered_map<uint32_t, int> index_;
};

}  // namespace cascade
