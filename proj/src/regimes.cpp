#include "cascade/regimes.hpp"

#include <algorithm>
#include <cstdlib>

#include "cascade/errors.hpp"

namespace cascade {

std::vector<int> Regime::survivors() const {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(num_survivors()));
    for (int i = 0; i < n; ++i)
        if (!node_defaulted(i)) out.push_back(i);
    return out;
}

std::vector<int> Regime::defaulted_list() const {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(num_defaulted()));
    for (int i = 0; i < n; ++i)
        if (node_defaulted(i)) out.push_back(i);
    return out;
}

std::vector<double> Regime::mask() const {
    std::vector<double> m(static_cast<size_t>(n), 1.0);
    for (int i = 0; i < n; ++i)
        if (node_defaulted(i)) m[static_cast<size_t>(i)] = 0.0;
    return m;
}

std::string Regime::key() const {
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (!node_defaulted(i)) continue;
        if (!out.empty()) out += ',';
        out += std::to_string(i + 1);
    }
    return out;
}

Regime Regime::from_key(const std::string& key, int n) {
    Regime r{n, 0};
    size_t pos = 0;
    while (pos < key.size()) {
        size_t comma = key.find(',', pos);
        if (comma == std::string::npos) comma = key.size();
        const std::string tok = key.substr(pos, comma - pos);
        char* end = nullptr;
        const long v = std::strtol(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0' || v < 1 || v > n)
            throw ConfigError("bad regime key \"" + key + "\": index \"" + tok +
                              "\" not in 1.." + std::to_string(n));
        const int node = static_cast<int>(v) - 1;
        if (r.node_defaulted(node))
            throw ConfigError("bad regime key \"" + key + "\": duplicate index " + tok);
        r.defaulted |= (1u << node);
        pos = comma + 1;
    }
    return r;
}

Regime apply_default(const Regime& regime, int node) {
    if (node < 0 || node >= regime.n)
        throw ValidationError("apply_default: node " + std::to_string(node + 1) +
                              " out of range for n=" + std::to_string(regime.n));
    if (regime.node_defaulted(node))
        throw ValidationError("apply_default: node " + std::to_string(node + 1) +
                              " already defaulted in regime \"" + regime.key() + "\"");
    Regime r = regime;
    r.defaulted |= (1u << node);
    return r;
}

std::vector<Regime> enumerate_active_regimes(int n) {
    std::vector<Regime> out;
    for (uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) == n) continue;  // terminal: no dynamics
        out.push_back(Regime{n, mask});
    }
    std::sort(out.begin(), out.end(), [](const Regime& a, const Regime& b) {
        const int ka = a.num_defaulted(), kb = b.num_defaulted();
        if (ka != kb) return ka < kb;
        return a.defaulted_list() < b.defaulted_list();
    });
    return out;
}

std::vector<std::pair<int, Regime>> children(const Regime& regime) {
    std::vector<std::pair<int, Regime>> out;
    for (int i : regime.survivors()) out.emplace_back(i, apply_default(regime, i));
    return out;
}

RegimeTree RegimeTree::build(int n) {
    RegimeTree t;
    t.n_ = n;
    t.actives_ = enumerate_active_regimes(n);
    for (int i = 0; i < static_cast<int>(t.actives_.size()); ++i)
        t.index_.emplace(t.actives_[static_cast<size_t>(i)].defaulted, i);
    return t;
}

int RegimeTree::id_of(const Regime& r) const { return id_of_mask(r.defaulted); }

int RegimeTree::id_of_mask(uint32_t defaulted) const {
    if (__builtin_popcount(defaulted) == n_) return terminal_id();
    auto it = index_.find(defaulted);
    if (it == index_.end())
        throw ValidationError("unknown regime mask in tree lookup");
    return it->second;
}

}  // namespace cascade
