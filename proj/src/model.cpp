#include "cascade/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include "cascade/csvio.hpp"
#include "cascade/errors.hpp"

namespace cascade {
namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct Parser {
    const std::string& text;
    size_t pos = 0;
    int line = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("line " + std::to_string(line) + ": " + msg);
    }

    bool next_line(std::string& out) {
        while (pos < text.size()) {
            size_t nl = text.find('\n', pos);
            if (nl == std::string::npos) nl = text.size();
            std::string raw = text.substr(pos, nl - pos);
            pos = nl + 1;
            ++line;
            const size_t hash = raw.find('#');
            if (hash != std::string::npos) raw = raw.substr(0, hash);
            raw = trim(raw);
            if (!raw.empty()) {
                out = raw;
                return true;
            }
        }
        return false;
    }

    double parse_number(const std::string& tok) const {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            fail("expected a number, got \"" + tok + "\"");
        return v;
    }

    uint64_t parse_u64(const std::string& tok) const {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0')
            fail("expected an unsigned integer, got \"" + tok + "\"");
        return v;
    }

    long parse_long(const std::string& tok) const {
        char* end = nullptr;
        const long v = std::strtol(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0')
            fail("expected an integer, got \"" + tok + "\"");
        return v;
    }

    bool parse_bool(const std::string& tok) const {
        if (tok == "true") return true;
        if (tok == "false") return false;
        fail("expected true/false, got \"" + tok + "\"");
    }

    std::vector<std::string> split_commas(const std::string& body) const {
        std::vector<std::string> out;
        size_t p = 0;
        while (p <= body.size()) {
            size_t comma = body.find(',', p);
            if (comma == std::string::npos) comma = body.size();
            const std::string tok = trim(body.substr(p, comma - p));
            if (!tok.empty()) out.push_back(tok);
            p = comma + 1;
            if (comma == body.size()) break;
        }
        return out;
    }

    std::vector<double> parse_array(const std::string& tok) const {
        if (tok.size() < 2 || tok.front() != '[' || tok.back() != ']')
            fail("expected an array [..], got \"" + tok + "\"");
        std::vector<double> out;
        for (const auto& t : split_commas(tok.substr(1, tok.size() - 2)))
            out.push_back(parse_number(t));
        return out;
    }

    // scalar `0.1` or breakpoint map `{ 0: 0.1, 0.5: 0.2 }`
    PiecewiseConstant parse_time_function(const std::string& tok) const {
        if (tok.front() != '{') return PiecewiseConstant(parse_number(tok));
        if (tok.back() != '}') fail("unterminated piecewise value \"" + tok + "\"");
        std::vector<double> ts, vs;
        for (const auto& pair : split_commas(tok.substr(1, tok.size() - 2))) {
            const size_t colon = pair.find(':');
            if (colon == std::string::npos)
                fail("piecewise entry \"" + pair + "\" needs t: value");
            ts.push_back(parse_number(trim(pair.substr(0, colon))));
            vs.push_back(parse_number(trim(pair.substr(colon + 1))));
        }
        if (ts.empty()) fail("empty piecewise value");
        try {
            return PiecewiseConstant(std::move(ts), std::move(vs));
        } catch (const ValidationError& e) {
            fail(e.what());
        }
    }
};

const char* const kNodeFields[] = {"mu", "b", "sigma", "nu", "v", "gamma"};

void assign_node_field(Parser& p, PartialNodeCoeffs& nc, const std::string& field,
                       const std::string& value) {
    if (field == "gamma") {
        nc.gamma = p.parse_number(value);
        return;
    }
    PiecewiseConstant f = p.parse_time_function(value);
    if (field == "mu") nc.mu = std::move(f);
    else if (field == "b") nc.b = std::move(f);
    else if (field == "sigma") nc.sigma = std::move(f);
    else if (field == "nu") nc.nu = std::move(f);
    else if (field == "v") nc.v = std::move(f);
    else p.fail("unknown coefficient field \"" + field + "\"");
}

void check_breakpoints(const PiecewiseConstant& f, double horizon,
                       const std::string& what) {
    for (double t : f.breakpoints())
        if (t < 0.0 || t > horizon)
            throw ValidationError(what + ": breakpoint outside [0, horizon]");
    for (double v : f.values())
        if (!std::isfinite(v))
            throw ValidationError(what + ": non-finite value");
}

}  // namespace

const NodeCoeffs& ProblemSpec::coeff(const Regime& regime, int node) const {
    auto it = resolved_.find({regime.defaulted, node});
    if (it == resolved_.end())
        throw ValidationError("unknown regime/node in coefficient lookup (internal misuse): regime \"" +
                              regime.key() + "\" node " + std::to_string(node + 1));
    return it->second;
}

int ProblemSpec::num_steps() const {
    const double raw = horizon / mc.dt;
    int m = static_cast<int>(std::ceil(raw - 1e-12));
    return m < 1 ? 1 : m;
}

void ProblemSpec::validate() const {
    if (n < 1) throw ValidationError("n must be >= 1");
    if (n > 12)
        throw ValidationError("n too large: the regime tree is enumerated exhaustively (max n = 12)");
    if (!(horizon > 0)) throw ValidationError("horizon must be > 0");
    if (!(mc.dt > 0)) throw ValidationError("mc.dt must be > 0");
    if (mc.dt > horizon) throw ValidationError("mc.dt must be <= horizon");
    if (mc.num_paths < 1) throw ValidationError("mc.num_paths must be >= 1");
    if (mc.basis_degree < 0 || mc.basis_degree > 3)
        throw ValidationError("mc.basis_degree must be in {0,1,2,3}");
    if (mc.ridge < 0) throw ValidationError("mc.ridge must be >= 0");
    if (mc.max_picard < 1) throw ValidationError("mc.max_picard must be >= 1");
    if (static_cast<int>(x0.size()) != n)
        throw ValidationError("x0 must have length n");
    for (double x : x0)
        if (!std::isfinite(x)) throw ValidationError("x0 must be finite");
    if (static_cast<int>(bounds.size()) != n)
        throw ValidationError("control bounds must have length n");
    for (const auto& bd : bounds)
        if (!(bd.lo <= bd.hi)) throw ValidationError("control bounds need a_min <= a_max");

    for (const auto& [key, block] : declared) {
        Regime r{n, 0};
        for (int node : key) {
            if (node < 0 || node >= n)
                throw ValidationError("regime key names a node outside 1..n");
            if (r.node_defaulted(node))
                throw ValidationError("regime key has a duplicate node");
            r.defaulted |= (1u << node);
        }
        if (static_cast<int>(key.size()) > n - 1)
            throw ValidationError("size-n regime has no dynamics: \"" + r.key() + "\"");
        for (const auto& [node, nc] : block.nodes) {
            if (node < 0 || node >= n)
                throw ValidationError("coefficient declared for a node outside 1..n");
            if (r.node_defaulted(node))
                throw ValidationError("coefficients declared for defaulted node " +
                                      std::to_string(node + 1) + " in regime \"" + r.key() + "\"");
            const std::string what = "regime \"" + r.key() + "\" node " + std::to_string(node + 1);
            if (nc.mu) check_breakpoints(*nc.mu, horizon, what + " mu");
            if (nc.b) check_breakpoints(*nc.b, horizon, what + " b");
            if (nc.sigma) check_breakpoints(*nc.sigma, horizon, what + " sigma");
            if (nc.nu) check_breakpoints(*nc.nu, horizon, what + " nu");
            if (nc.v) check_breakpoints(*nc.v, horizon, what + " v");
            if (nc.gamma) {
                if (!std::isfinite(*nc.gamma)) throw ValidationError(what + " gamma: non-finite");
                if (*nc.gamma < 0)
                    throw ValidationError(what + " gamma: weights must be >= 0 (cost convexity)");
            }
        }
    }

    // no instant default: root barriers away from the initial state
    const Regime root = Regime::root(n);
    for (int i = 0; i < n; ++i) {
        // resolve v for the root by direct scan of declared blocks (resolve()
        // may not have run yet)
        double v0 = 0.0;
        auto it = declared.find({});
        if (it != declared.end()) {
            auto nit = it->second.nodes.find(i);
            if (nit != it->second.nodes.end() && nit->second.v) v0 = (*nit->second.v)(0.0);
        }
        if (v0 == x0[static_cast<size_t>(i)])
            throw ValidationError("instant default: barrier equals x0 for node " +
                                  std::to_string(i + 1) + " in the root regime");
    }
}

void ProblemSpec::resolve() {
    resolved_.clear();
    // per field: nearest declared ancestor block (largest defaulted subset of
    // the regime's defaulted set; ties by lexicographically smallest list)
    const auto regimes = enumerate_active_regimes(n);
    for (const Regime& r : regimes) {
        for (int i : r.survivors()) {
            NodeCoeffs out;  // defaults: all-zero functions, gamma 0
            struct Best {
                int size = -1;
                std::vector<int> key;
            };
            auto better = [](const Best& cur, int size, const std::vector<int>& key) {
                if (size != cur.size) return size > cur.size;
                return key < cur.key;
            };
            Best best[6];
            for (const auto& [key, block] : declared) {
                // key must be a subset of r.defaulted
                bool subset = true;
                uint32_t keymask = 0;
                for (int node : key) keymask |= (1u << node);
                subset = (keymask & ~r.defaulted) == 0;
                if (!subset) continue;
                auto nit = block.nodes.find(i);
                if (nit == block.nodes.end()) continue;
                const PartialNodeCoeffs& nc = nit->second;
                const int ksize = static_cast<int>(key.size());
                const bool has[6] = {nc.mu.has_value(), nc.b.has_value(),
                                     nc.sigma.has_value(), nc.nu.has_value(),
                                     nc.v.has_value(), nc.gamma.has_value()};
                for (int f = 0; f < 6; ++f) {
                    if (!has[f]) continue;
                    if (better(best[f], ksize, key)) best[f] = Best{ksize, key};
                }
            }
            auto fetch = [&](int f) -> const PartialNodeCoeffs* {
                if (best[f].size < 0) return nullptr;
                return &declared.at(best[f].key).nodes.at(i);
            };
            if (const auto* p = fetch(0)) out.mu = *p->mu;
            if (const auto* p = fetch(1)) out.b = *p->b;
            if (const auto* p = fetch(2)) out.sigma = *p->sigma;
            if (const auto* p = fetch(3)) out.nu = *p->nu;
            if (const auto* p = fetch(4)) out.v = *p->v;
            if (const auto* p = fetch(5)) out.gamma = *p->gamma;
            resolved_.emplace(std::make_pair(r.defaulted, i), std::move(out));
        }
    }
}

std::vector<CoeffSnapshot> coefficients_at(const ProblemSpec& spec,
                                           const Regime& regime, double t) {
    if (t < 0.0 || t > spec.horizon)
        throw ValidationError("coefficients_at: t outside [0, horizon]");
    if (regime.num_survivors() < 1)
        throw ValidationError("coefficients_at: terminal regime has no coefficients");
    std::vector<CoeffSnapshot> out(static_cast<size_t>(spec.n));
    for (int i : regime.survivors()) {
        const NodeCoeffs& c = spec.coeff(regime, i);
        auto& s = out[static_cast<size_t>(i)];
        s.mu = c.mu(t);
        s.b = c.b(t);
        s.sigma = c.sigma(t);
        s.nu = c.nu(t);
        s.v = c.v(t);
        s.gamma = c.gamma;
    }
    return out;
}

ProblemSpec load_spec(const std::string& text) {
    Parser p{text};
    ProblemSpec spec;
    spec.x0.clear();

    bool seen_n = false, seen_horizon = false, seen_x0 = false;
    bool seen_paths = false, seen_dt = false, seen_seed = false;
    std::optional<double> global_lo, global_hi;
    std::map<int, ControlBounds> node_bounds;

    RegimeBlock* current_block = nullptr;
    std::string line;
    while (p.next_line(line)) {
        if (line.front() == '[') {
            const std::string prefix = "[regime.\"";
            if (line.size() < prefix.size() + 2 || line.compare(0, prefix.size(), prefix) != 0 ||
                line.compare(line.size() - 2, 2, "\"]") != 0)
                p.fail("bad section header \"" + line + "\" (expected [regime.\"...\"] )");
            const std::string key = line.substr(prefix.size(), line.size() - prefix.size() - 2);
            if (!seen_n) p.fail("regime sections must come after n");
            Regime r;
            try {
                r = Regime::from_key(key, spec.n);
            } catch (const ConfigError& e) {
                p.fail(e.what());
            }
            auto [it, inserted] = spec.declared.emplace(r.defaulted_list(), RegimeBlock{});
            if (!inserted) p.fail("duplicate regime section \"" + key + "\"");
            current_block = &it->second;
            continue;
        }

        const size_t eq = line.find('=');
        if (eq == std::string::npos) p.fail("expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) p.fail("expected key = value");

        if (current_block) {
            const size_t dot = key.find('.');
            if (dot == std::string::npos)
                p.fail("regime entries use <node>.<field> keys, got \"" + key + "\"");
            const long node1 = p.parse_long(key.substr(0, dot));
            if (node1 < 1 || node1 > spec.n)
                p.fail("node index " + std::to_string(node1) + " outside 1..n");
            assign_node_field(p, current_block->nodes[static_cast<int>(node1) - 1],
                              key.substr(dot + 1), value);
            continue;
        }

        if (key == "n") {
            spec.n = static_cast<int>(p.parse_long(value));
            seen_n = true;
        } else if (key == "horizon") {
            spec.horizon = p.parse_number(value);
            seen_horizon = true;
        } else if (key == "x0") {
            spec.x0 = value.front() == '[' ? p.parse_array(value)
                                           : std::vector<double>{p.parse_number(value)};
            seen_x0 = true;
        } else if (key == "mc.num_paths") {
            spec.mc.num_paths = p.parse_long(value);
            seen_paths = true;
        } else if (key == "mc.dt") {
            spec.mc.dt = p.parse_number(value);
            seen_dt = true;
        } else if (key == "mc.seed") {
            spec.mc.seed = p.parse_u64(value);
            seen_seed = true;
        } else if (key == "mc.basis_degree") {
            spec.mc.basis_degree = static_cast<int>(p.parse_long(value));
        } else if (key == "mc.ridge") {
            spec.mc.ridge = p.parse_number(value);
        } else if (key == "mc.bridge_correction") {
            spec.mc.bridge_correction = p.parse_bool(value);
        } else if (key == "mc.max_picard") {
            spec.mc.max_picard = static_cast<int>(p.parse_long(value));
        } else if (key == "control.a_min") {
            global_lo = p.parse_number(value);
        } else if (key == "control.a_max") {
            global_hi = p.parse_number(value);
        } else if (key.rfind("control.", 0) == 0) {
            const std::string rest = key.substr(8);
            const size_t dot = rest.find('.');
            if (dot == std::string::npos) p.fail("unknown key \"" + key + "\"");
            const long node1 = p.parse_long(rest.substr(0, dot));
            const std::string field = rest.substr(dot + 1);
            if (node1 < 1) p.fail("bad node index in \"" + key + "\"");
            auto& bd = node_bounds[static_cast<int>(node1) - 1];
            if (field == "a_min") bd.lo = p.parse_number(value);
            else if (field == "a_max") bd.hi = p.parse_number(value);
            else p.fail("unknown key \"" + key + "\"");
        } else {
            p.fail("unknown key \"" + key + "\"");
        }
    }

    if (!seen_n) throw ConfigError("missing required key: n");
    if (!seen_horizon) throw ConfigError("missing required key: horizon");
    if (!seen_x0) throw ConfigError("missing required key: x0");
    if (!seen_paths) throw ConfigError("missing required key: mc.num_paths");
    if (!seen_dt) throw ConfigError("missing required key: mc.dt");
    if (!seen_seed) throw ConfigError("missing required key: mc.seed");

    spec.bounds.assign(static_cast<size_t>(std::max(spec.n, 0)), ControlBounds{});
    for (auto& bd : spec.bounds) {
        if (global_lo) bd.lo = *global_lo;
        if (global_hi) bd.hi = *global_hi;
    }
    for (const auto& [node, bd] : node_bounds) {
        if (node >= spec.n) throw ConfigError("control bounds name a node outside 1..n");
        if (std::isfinite(bd.lo)) spec.bounds[static_cast<size_t>(node)].lo = bd.lo;
        if (std::isfinite(bd.hi)) spec.bounds[static_cast<size_t>(node)].hi = bd.hi;
    }

    spec.validate();
    spec.resolve();
    return spec;
}

ProblemSpec load_spec_file(const std::string& path) {
    return load_spec(read_text_file(path));
}

namespace {

std::string fmt_time_function(const PiecewiseConstant& f) {
    if (f.is_constant()) return fmt_double(f.values()[0]);
    std::string out = "{ ";
    for (size_t i = 0; i < f.breakpoints().size(); ++i) {
        if (i) out += ", ";
        out += fmt_double(f.breakpoints()[i]);
        out += ": ";
        out += fmt_double(f.values()[i]);
    }
    out += " }";
    return out;
}

}  // namespace

std::string emit_spec(const ProblemSpec& spec) {
    std::string out;
    auto kv = [&out](const std::string& k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    };
    // top-level keys in sorted order: control.* < horizon < mc.* < n < x0
    for (int i = 0; i < spec.n; ++i) {
        const auto& bd = spec.bounds[static_cast<size_t>(i)];
        if (std::isfinite(bd.lo))
            kv("control." + std::to_string(i + 1) + ".a_min", fmt_double(bd.lo));
        if (std::isfinite(bd.hi))
            kv("control." + std::to_string(i + 1) + ".a_max", fmt_double(bd.hi));
    }
    kv("horizon", fmt_double(spec.horizon));
    kv("mc.basis_degree", std::to_string(spec.mc.basis_degree));
    kv("mc.bridge_correction", spec.mc.bridge_correction ? "true" : "false");
    kv("mc.dt", fmt_double(spec.mc.dt));
    kv("mc.max_picard", std::to_string(spec.mc.max_picard));
    kv("mc.num_paths", std::to_string(spec.mc.num_paths));
    kv("mc.ridge", fmt_double(spec.mc.ridge));
    kv("mc.seed", std::to_string(spec.mc.seed));
    kv("n", std::to_string(spec.n));
    std::string x0 = "[";
    for (size_t i = 0; i < spec.x0.size(); ++i) {
        if (i) x0 += ", ";
        x0 += fmt_double(spec.x0[i]);
    }
    x0 += "]";
    kv("x0", x0);

    // regime sections ordered by (size, lexicographic defaulted list)
    std::vector<const std::vector<int>*> keys;
    for (const auto& [key, block] : spec.declared) keys.push_back(&key);
    std::sort(keys.begin(), keys.end(), [](const auto* a, const auto* b) {
        if (a->size() != b->size()) return a->size() < b->size();
        return *a < *b;
    });
    for (const auto* keyp : keys) {
        const RegimeBlock& block = spec.declared.at(*keyp);
        Regime r{spec.n, 0};
        for (int node : *keyp) r.defaulted |= (1u << node);
        out += "\n[regime.\"" + r.key() + "\"]\n";
        for (const auto& [node, nc] : block.nodes) {
            const std::string prefix = std::to_string(node + 1) + ".";
            if (nc.b) kv(prefix + "b", fmt_time_function(*nc.b));
            if (nc.gamma) kv(prefix + "gamma", fmt_double(*nc.gamma));
            if (nc.mu) kv(prefix + "mu", fmt_time_function(*nc.mu));
            if (nc.nu) kv(prefix + "nu", fmt_time_function(*nc.nu));
            if (nc.sigma) kv(prefix + "sigma", fmt_time_function(*nc.sigma));
            if (nc.v) kv(prefix + "v", fmt_time_function(*nc.v));
        }
    }
    return out;
}

}  // namespace cascade
