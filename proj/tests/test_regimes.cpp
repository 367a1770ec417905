#include <doctest.h>

#include <set>

#include "cascade/errors.hpp"
#include "cascade/regimes.hpp"

using namespace cascade;

TEST_CASE("enumerate_active_regimes counts and order") {
    CHECK(enumerate_active_regimes(1).size() == 1);
    CHECK(enumerate_active_regimes(2).size() == 3);
    CHECK(enumerate_active_regimes(3).size() == 7);

    const auto r2 = enumerate_active_regimes(2);
    CHECK(r2[0].key() == "");
    CHECK(r2[1].key() == "1");
    CHECK(r2[2].key() == "2");

    // 2^n - 1 active regimes, no duplicates
    for (int n = 1; n <= 6; ++n) {
        const auto rs = enumerate_active_regimes(n);
        CHECK(rs.size() == (1u << n) - 1);
        std::set<uint32_t> seen;
        for (const auto& r : rs) seen.insert(r.defaulted);
        CHECK(seen.size() == rs.size());
    }

    // size-major, then lexicographic on the defaulted list: {1,4} before {2,3}
    const auto r4 = enumerate_active_regimes(4);
    size_t i14 = 0, i23 = 0;
    for (size_t i = 0; i < r4.size(); ++i) {
        if (r4[i].key() == "1,4") i14 = i;
        if (r4[i].key() == "2,3") i23 = i;
    }
    CHECK(i14 < i23);
}

TEST_CASE("apply_default flips exactly one mask entry") {
    const Regime root = Regime::root(3);
    const Regime r2 = apply_default(root, 1);
    CHECK(r2.key() == "2");
    CHECK(r2.mask() == std::vector<double>{1, 0, 1});

    const Regime r12 = apply_default(r2, 0);
    CHECK(r12.key() == "1,2");
    CHECK(r12.mask() == std::vector<double>{0, 0, 1});

    const Regime all = apply_default(r12, 2);
    CHECK(all.terminal());
    CHECK(all.mask() == std::vector<double>{0, 0, 0});

    CHECK_THROWS_AS(apply_default(r12, 1), ValidationError);
}

TEST_CASE("apply_default equals componentwise mask product") {
    for (const auto& r : enumerate_active_regimes(4)) {
        for (int k : r.survivors()) {
            const Regime child = apply_default(r, k);
            const auto pm = r.mask();
            const auto cm = child.mask();
            for (int i = 0; i < 4; ++i) {
                const double unit_def = i == k ? 0.0 : 1.0;
                CHECK(cm[static_cast<size_t>(i)] ==
                      pm[static_cast<size_t>(i)] * unit_def);
            }
        }
    }
}

TEST_CASE("children are one per survivor in ascending order") {
    const auto c0 = children(Regime::root(2));
    REQUIRE(c0.size() == 2);
    CHECK(c0[0].first == 0);
    CHECK(c0[0].second.key() == "1");
    CHECK(c0[1].first == 1);
    CHECK(c0[1].second.key() == "2");

    const auto c1 = children(Regime::from_key("1", 2));
    REQUIRE(c1.size() == 1);
    CHECK(c1[0].second.terminal());

    const auto c12 = children(Regime::from_key("1,2", 3));
    REQUIRE(c12.size() == 1);
    CHECK(c12[0].first == 2);
    CHECK(c12[0].second.key() == "1,2,3");
}

TEST_CASE("the children tree visits every subset, deduplicated by set") {
    std::set<uint32_t> seen;
    std::vector<Regime> stack{Regime::root(4)};
    while (!stack.empty()) {
        const Regime r = stack.back();
        stack.pop_back();
        seen.insert(r.defaulted);
        for (const auto& [k, child] : children(r))
            if (!child.terminal()) stack.push_back(child);
    }
    CHECK(seen.size() == enumerate_active_regimes(4).size());
}

TEST_CASE("regime keys round-trip") {
    for (const auto& r : enumerate_active_regimes(5))
        CHECK(Regime::from_key(r.key(), 5) == r);
    CHECK_THROWS_AS(Regime::from_key("0", 2), ConfigError);
    CHECK_THROWS_AS(Regime::from_key("3", 2), ConfigError);
    CHECK_THROWS_AS(Regime::from_key("1,1", 2), ConfigError);
}

TEST_CASE("regime tree ids") {
    const RegimeTree tree = RegimeTree::build(3);
    CHECK(tree.num_active() == 7);
    for (int id = 0; id < tree.num_active(); ++id)
        CHECK(tree.id_of(tree.regime(id)) == id);
    CHECK(tree.id_of_mask(0b111) == tree.terminal_id());
}
