#include "doctest.h"

#include "otrect/ivs.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

using namespace otrect;

namespace {

OptionQuote quote(double tau, double delta, double iv, double vega = 0.1) {
    OptionQuote q;
    q.tau_days = tau;
    q.delta_bs = delta;
    q.is_call = delta >= 0.0;
    q.iv = iv;
    q.vega = vega;
    return q;
}

std::vector<OptionQuote> with_ivs(const std::vector<double>& ivs) {
    std::vector<OptionQuote> out;
    for (std::size_t i = 0; i < ivs.size(); ++i) out.push_back(quote(20.0 + 10.0 * i, 0.1 + 0.8 * i / ivs.size(), ivs[i]));
    return out;
}

struct Split {
    std::vector<OptionQuote> train, test;
    std::vector<double> test_truth;
};

Split split_chain(const SyntheticChain& c, std::size_t n_train) {
    Split s;
    for (std::size_t i = 0; i < c.quotes.size(); ++i) {
        if (i < n_train) {
            s.train.push_back(c.quotes[i]);
        } else {
            s.test.push_back(c.quotes[i]);
            s.test_truth.push_back(c.true_iv[i]);
        }
    }
    return s;
}

}  // namespace

TEST_CASE("feature map") {
    const auto f = featurize(quote(1.0, 0.5, 0.2));
    CHECK(f[0] == 0.0);
    CHECK(f[1] == 0.5);
    CHECK(f[2] == 1.0);
    CHECK(featurize(quote(30.0, -0.25, 0.2))[1] == doctest::Approx(0.75));
    const auto p = featurize(quote(std::exp(2.0), -1.0, 0.2));
    CHECK(p[0] == doctest::Approx(2.0));
    CHECK(p[1] == 0.0);
    CHECK(p[2] == 0.0);
    CHECK_THROWS_AS(featurize(quote(0.0, 0.5, 0.2)), InputError);
}

TEST_CASE("kernel values") {
    const Bandwidths h{0.3, 0.2, 0.5};
    const FeatureVector a{1.0, 0.4, 1.0};
    CHECK(kernel(a, a, h) == 1.0);
    CHECK(kernel(a, {1.0 + 0.6, 0.4, 1.0}, h) == doctest::Approx(std::exp(-1.0)));
    CHECK(kernel(a, {1.0 + 0.6, 0.4 + 0.4, 1.0}, h) == doctest::Approx(std::exp(-2.0)));
    CHECK_THROWS_AS(kernel(a, a, {0.0, 0.2, 0.5}), InputError);

    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (int t = 0; t < 200; ++t) {
        const FeatureVector x{g(rng), g(rng), g(rng)}, y{g(rng), g(rng), g(rng)};
        CHECK(kernel(x, y, kDefaultBandwidths) > 0.0);
        CHECK(kernel(x, y, kDefaultBandwidths) == kernel(y, x, kDefaultBandwidths));
    }
}

TEST_CASE("kernel smoother benchmark") {
    const auto one = fit_ks({quote(30.0, 0.4, 0.27)});
    CHECK(one.predict(quote(400.0, -0.9, 1.0)) == doctest::Approx(0.27));

    const auto twin = fit_ks({quote(30.0, 0.4, 0.2), quote(30.0, 0.4, 0.4)});
    CHECK(twin.predict(quote(30.0, 0.4, 1.0)) == doctest::Approx(0.3));

    const std::vector<OptionQuote> pair{quote(30.0, 0.2, 0.2), quote(300.0, 0.7, 0.6)};
    const auto sharp = fit_ks(pair, {0.01, 0.01, 0.01});
    CHECK(sharp.predict(pair[0]) == doctest::Approx(0.2));
    CHECK(sharp.predict(pair[1]) == doctest::Approx(0.6));

    auto zero_vega = pair;
    for (auto& q : zero_vega) q.vega = 0.0;
    const auto flat = fit_ks(zero_vega);
    CHECK(flat.unweighted_fallback);
    CHECK(std::isfinite(flat.predict(pair[0])));
    CHECK_THROWS_AS(fit_ks({}), InputError);
}

TEST_CASE("quantile rule and Tukey fence") {
    CHECK(quantile_linear({0.1, 0.2, 0.3, 0.4}, 0.25) == doctest::Approx(0.175));
    CHECK(quantile_linear({0.4, 0.3, 0.2, 0.1}, 0.75) == doctest::Approx(0.325));
    const auto f = tukey_fence({0.1, 0.2, 0.3, 0.4});
    CHECK(f.lo == doctest::Approx(-0.05));
    CHECK(f.hi == doctest::Approx(0.55));
}

TEST_CASE("two-stage smoother removes only fenced-out quotes") {
    std::vector<double> ivs(49, 0.2);
    ivs.push_back(5.0);
    const auto m = fit_2sks(with_ivs(ivs));
    CHECK(m.n_filtered == 1);
    CHECK(std::none_of(m.train_iv.begin(), m.train_iv.end(), [](double v) { return v == 5.0; }));

    CHECK(fit_2sks(with_ivs(std::vector<double>(10, 0.3))).n_filtered == 0);
    CHECK(fit_2sks(with_ivs({0.1, 0.2, 0.3, 0.4})).n_filtered == 0);

    const auto tiny = fit_2sks(with_ivs({0.1, 0.9, 0.2}));
    CHECK(tiny.filter_passthrough);
    CHECK(tiny.n_filtered == 0);

    const auto chain = generate_chain(3, 80, 0.1, 5.0);
    const auto fit = fit_2sks(chain.quotes);
    std::vector<double> all;
    for (const auto& q : chain.quotes) all.push_back(q.iv);
    const auto fence = tukey_fence(all);
    for (double v : fit.train_iv) {
        CHECK(v >= fence.lo);
        CHECK(v <= fence.hi);
    }
}

TEST_CASE("percentage error metric") {
    const auto c = fit_ks({quote(30.0, 0.5, 1.99)});
    CHECK(mape(c, {quote(30.0, 0.5, 0.99)}) == doctest::Approx(1.0));
    const auto unit = fit_ks({quote(30.0, 0.5, 1.0)});
    const std::vector<OptionQuote> two{quote(30.0, 0.5, 0.5), quote(60.0, 0.5, 0.5)};
    const double y1 = 0.997 / 1.3;  // |1 - y| / (y + 0.01) = 0.3
    const double y2 = 0.495;        // |1 - y| / (y + 0.01) = 1.0
    CHECK(mape(unit, two, {y1, y2}) == doctest::Approx(0.65));
    CHECK(mape(unit, {quote(30.0, 0.5, 1.0)}) == 0.0);
    CHECK_THROWS_AS(mape(unit, two, {0.2}), InputError);
}

TEST_CASE("surface roughness") {
    const auto grid = SurfaceGrid::standard();
    CHECK(grid.taus.size() == 11);
    CHECK(grid.deltas.size() == 40);
    const std::size_t nt = grid.taus.size(), nd = grid.deltas.size();

    CHECK(surface_gradient(std::vector<double>(nt * nd, 0.25), nt, nd) == 0.0);

    const double a = 0.07;
    std::vector<double> lin(nt * nd);
    for (std::size_t i = 0; i < nt; ++i) {
        for (std::size_t j = 0; j < nd; ++j) lin[i * nd + j] = 0.2 + a * std::log(grid.taus[i]);
    }
    double expected = 0.0;
    for (std::size_t i = 0; i + 1 < nt; ++i) {
        const double gap = std::log(grid.taus[i + 1]) - std::log(grid.taus[i]);
        expected += static_cast<double>(nd - 1) * a * a * gap * gap / 2.0;
    }
    CHECK(surface_gradient(lin, nt, nd) == doctest::Approx(expected).epsilon(1e-12));
    CHECK_THROWS_AS(surface_gradient(lin, nt, nd + 1), InputError);

    const auto flat = fit_ks({quote(30.0, 0.5, 0.3)});
    CHECK(surface_gradient(flat) == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("synthetic chain generator") {
    const auto a = generate_chain(11, 80, 0.1, 5.0);
    const auto b = generate_chain(11, 80, 0.1, 5.0);
    REQUIRE(a.quotes.size() == 80);
    CHECK(a.outlier_indices.size() == 8);
    for (std::size_t i = 0; i < 80; ++i) {
        CHECK(a.quotes[i].iv == b.quotes[i].iv);
        CHECK(a.quotes[i].tau_days == b.quotes[i].tau_days);
        CHECK(a.quotes[i].tau_days >= 7.0);
        CHECK(a.quotes[i].tau_days <= 730.0);
        CHECK(std::abs(a.quotes[i].delta_bs) >= 0.02);
        CHECK(std::abs(a.quotes[i].delta_bs) <= 0.98);
    }
    const auto clean = generate_chain(11, 80, 0.0, 5.0);
    for (std::size_t i : a.outlier_indices) {
        CHECK(a.quotes[i].iv == doctest::Approx(5.0 * clean.quotes[i].iv).epsilon(1e-14));
        CHECK(a.quotes[i].iv >= 4.5 * a.true_iv[i]);
    }
    CHECK(clean.outlier_indices.empty());
    CHECK_THROWS_AS(generate_chain(1, 10, 1.0, 5.0), InputError);
}

TEST_CASE("benchmark error on a clean chain") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto c = generate_chain(seed, 80, 0.0, 5.0);
        const auto s = split_chain(c, 64);
        CHECK(mape(fit_ks(s.train), s.test, s.test_truth) < 0.05);
    }
}

TEST_CASE("chain CSV round trip and strict parsing") {
    const auto c = generate_chain(4, 12, 0.0, 5.0);
    std::stringstream ss;
    write_chain_csv(ss, c.quotes);
    const auto back = read_chain_csv(ss);
    REQUIRE(back.size() == c.quotes.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].iv == doctest::Approx(c.quotes[i].iv).epsilon(1e-10));
        CHECK(back[i].is_call == c.quotes[i].is_call);
    }

    auto row_of = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            read_chain_csv(in);
        } catch (const ParseError& e) {
            return e.row();
        }
        return 0;
    };
    const std::string header = "tau_days,delta,is_call,iv,vega\n";
    CHECK(row_of("tau,delta,is_call,iv,vega\n30,0.5,1,0.2,0.1\n") == 1);
    CHECK(row_of(header + "30,0.5,1,0.2,0.1\n30,0.5,2,0.2,0.1\n") == 3);
    CHECK(row_of(header + "30,0.5,1,0.2\n") == 2);
    CHECK(row_of(header + "30,0.5,1,x,0.1\n") == 2);
    CHECK(row_of(header + "-1,0.5,1,0.2,0.1\n") == 2);
    CHECK(row_of(header + "30,0.5,1,0.2,0.1\n\n30,1.5,1,0.2,0.1\n") == 4);
    CHECK(row_of(header) == 1);
    CHECK(row_of("\xEF\xBB\xBF" + header + "30,0.5,1,0.2,0.1\r\n") == 0);
}

TEST_CASE("robust fit on a constant chain reproduces the constant") {
    auto c = generate_chain(5, 40, 0.0, 5.0).quotes;
    for (auto& q : c) q.iv = 0.23;
    for (double delta : {0.0, 0.01, 1.0}) {
        const auto m = fit_robust(c, kDefaultBandwidths, CostSpec(0.5), Budget(delta));
        CHECK(mape(m, c) <= 1e-12);
        CHECK(m.predict(quote(200.0, -0.4, 1.0)) == doctest::Approx(0.23).epsilon(1e-12));
    }
}

TEST_CASE("robust fit without budget is no worse than the benchmark on clean chains") {
    double robust = 0.0, ks = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto c = generate_chain(seed, 80, 0.0, 5.0);
        const auto s = split_chain(c, 64);
        robust += mape(fit_robust(s.train, kDefaultBandwidths, CostSpec(0.5), Budget(0.0)), s.test, s.test_truth);
        ks += mape(fit_ks(s.train), s.test, s.test_truth);
    }
    CHECK(robust <= 1.05 * ks);
}

TEST_CASE("a small budget improves the robust fit on contaminated chains") {
    double with_budget = 0.0, without = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto c = generate_chain(100 + seed, 60, 0.1, 5.0);
        const auto s = split_chain(c, 48);
        with_budget += mape(fit_robust(s.train, kDefaultBandwidths, CostSpec(0.5), Budget(0.01)), s.test, s.test_truth);
        without += mape(fit_robust(s.train, kDefaultBandwidths, CostSpec(0.5), Budget(0.0)), s.test, s.test_truth);
    }
    CHECK(with_budget < without);
}

TEST_CASE("common vega scaling leaves the robust fit unchanged") {
    const auto c = generate_chain(8, 50, 0.1, 5.0).quotes;
    auto scaled = c;
    for (auto& q : scaled) q.vega *= 7.5;
    FitConfig cfg = robust_defaults();
    cfg.max_iters = 200;
    const auto a = fit_robust(c, kDefaultBandwidths, CostSpec(0.5), Budget(0.01), cfg);
    const auto b = fit_robust(scaled, kDefaultBandwidths, CostSpec(0.5), Budget(0.01), cfg);
    REQUIRE(a.theta.size() == b.theta.size());
    CHECK(a.iterations == b.iterations);
    for (std::size_t i = 0; i < a.theta.size(); ++i) CHECK(a.theta[i] == doctest::Approx(b.theta[i]).epsilon(1e-9));
}

TEST_CASE("raw kernel basis and adaptive budget run end to end") {
    const auto c = generate_chain(9, 40, 0.1, 5.0);
    const auto raw = fit_robust(c.quotes, kDefaultBandwidths, CostSpec(0.5), Budget(0.01), robust_defaults(),
                                KernelBasis::raw);
    CHECK(raw.kind == SurfaceModelKind::kernel_expansion);
    CHECK(std::isfinite(mape(raw, c.quotes)));

    FitConfig cfg = robust_defaults();
    cfg.budget_rule = adaptive_budget_rule(0.5);
    const auto adaptive = fit_robust(c.quotes, kDefaultBandwidths, CostSpec(0.5), Budget(0.01), cfg);
    CHECK(std::isfinite(mape(adaptive, c.quotes)));
}

TEST_CASE("budget selection for the surface refits at the chosen budget") {
    const auto c = generate_chain(12, 50, 0.1, 5.0);
    CvPlan plan;
    plan.grid = {0.0, 0.01, 0.1};
    plan.n_splits = 2;
    plan.seed = 4;
    const auto cv = fit_robust_cv(c.quotes, kDefaultBandwidths, CostSpec(0.5), plan);
    CHECK(std::find(plan.grid.begin(), plan.grid.end(), cv.cv.delta_star) != plan.grid.end());
    CHECK(cv.cv.table.size() == 3);
    const auto direct = fit_robust(c.quotes, kDefaultBandwidths, CostSpec(0.5), Budget(cv.cv.delta_star));
    CHECK(direct.theta == cv.model.theta);
}
