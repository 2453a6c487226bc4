#include "doctest.h"

#include "otrect/core.hpp"
#include "otrect/modelsel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

using namespace otrect;

TEST_CASE("splits partition the indices and are reproducible") {
    const auto a = make_splits(50, 4, 0.8, 9);
    const auto b = make_splits(50, 4, 0.8, 9);
    const auto c = make_splits(50, 4, 0.8, 10);
    REQUIRE(a.size() == 4);
    for (std::size_t s = 0; s < a.size(); ++s) {
        CHECK(a[s].train == b[s].train);
        CHECK(a[s].test == b[s].test);
        CHECK(a[s].train.size() == 40);
        CHECK(a[s].test.size() == 10);
        std::set<std::size_t> all(a[s].train.begin(), a[s].train.end());
        all.insert(a[s].test.begin(), a[s].test.end());
        CHECK(all.size() == 50);
        CHECK(*all.rbegin() == 49);
    }
    CHECK(a[0].train != a[1].train);
    CHECK(a[0].train != c[0].train);
    CHECK_THROWS_AS(make_splits(3, 1, 0.1, 0), InputError);
}

TEST_CASE("table rows are the mean over splits") {
    CvPlan plan;
    plan.grid = {2.0, 0.5, 1.0};
    plan.n_splits = 3;
    plan.seed = 1;
    // Metric depends on delta and on the split through its first test index.
    auto cell = [](std::span<const std::size_t>, std::span<const std::size_t> test, double delta) {
        return (delta - 1.2) * (delta - 1.2) + 0.01 * static_cast<double>(test.front());
    };
    const auto res = cross_validate_delta(40, cell, plan);
    const auto splits = make_splits(40, 3, 0.8, 1);
    REQUIRE(res.table.size() == 3);
    CHECK(res.table[0].delta == 0.5);
    for (const auto& row : res.table) {
        double sum = 0.0;
        for (const auto& s : splits) sum += cell(s.train, s.test, row.delta);
        CHECK(row.mean_metric == doctest::Approx(sum / 3.0).epsilon(1e-14));
        CHECK(row.n_ok == 3);
    }
    CHECK(res.delta_star == 1.0);

    plan.jobs = 3;
    const auto par = cross_validate_delta(40, cell, plan);
    for (std::size_t i = 0; i < 3; ++i) CHECK(par.table[i].mean_metric == res.table[i].mean_metric);
}

TEST_CASE("budget selection edge cases") {
    CvPlan plan;
    plan.grid = {0.7};
    auto fails = [](std::span<const std::size_t>, std::span<const std::size_t>, double) -> double {
        throw std::runtime_error("boom");
    };
    CHECK(cross_validate_delta(20, fails, plan).delta_star == 0.7);

    plan.grid = {0.3, 0.1, 0.2};
    auto flat = [](std::span<const std::size_t>, std::span<const std::size_t>, double) { return 1.0; };
    CHECK(cross_validate_delta(20, flat, plan).delta_star == 0.1);

    CHECK_THROWS(cross_validate_delta(20, fails, plan));

    auto partial = [](std::span<const std::size_t>, std::span<const std::size_t>, double delta) {
        if (delta < 0.15) return std::nan("");
        return delta;
    };
    const auto res = cross_validate_delta(20, partial, plan);
    CHECK(res.delta_star == 0.2);
    CHECK(res.failed_cells == plan.n_splits);
    CHECK(res.table.size() == 2);

    plan.grid.clear();
    CHECK_THROWS_AS(cross_validate_delta(20, flat, plan), InputError);
    plan.grid = {-1.0};
    CHECK_THROWS_AS(cross_validate_delta(20, flat, plan), InputError);
}

TEST_CASE("sweeps") {
    auto trial = [](double v, std::uint64_t seed) { return v * v + static_cast<double>(seed % 7); };
    const auto res = sweep(SweepAxis::delta, {1.0, 0.0, 2.0}, trial, 4, 3);
    REQUIRE(res.points.size() == 3);
    CHECK(res.points[0].value == 0.0);
    // Same seeds at every value: the spread does not depend on the value.
    CHECK(res.points[0].std_metric == doctest::Approx(res.points[2].std_metric));
    CHECK(res.points[2].mean_metric - res.points[0].mean_metric == doctest::Approx(4.0));

    const auto single = sweep(SweepAxis::r, {0.5}, trial, 1, 3);
    CHECK(single.points.size() == 1);
    CHECK(single.points[0].std_metric == 0.0);

    const auto par = sweep(SweepAxis::delta, {1.0, 0.0, 2.0}, trial, 4, 3, 4);
    for (std::size_t i = 0; i < 3; ++i) CHECK(par.points[i].mean_metric == res.points[i].mean_metric);

    CHECK_THROWS_AS(sweep(SweepAxis::delta, {}, trial, 1, 0), InputError);
    CHECK_THROWS_AS(sweep(SweepAxis::delta, {1.0}, trial, 0, 0), InputError);
}

TEST_CASE("csv headers") {
    std::ostringstream a, b;
    write_sweep_csv(a, sweep(SweepAxis::r, {0.5}, [](double, std::uint64_t) { return 1.0; }, 1, 0));
    CHECK(a.str().rfind("r,mean_metric,std_metric\n", 0) == 0);
    CvPlan plan;
    plan.grid = {0.1, 0.2};
    write_cv_csv(b, cross_validate_delta(10, [](auto, auto, double d) { return d; }, plan));
    CHECK(b.str().rfind("delta,mean_metric,std_metric\n", 0) == 0);
}
