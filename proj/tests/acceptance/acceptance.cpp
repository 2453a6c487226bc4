// Acceptance run: every headline criterion is evaluated at its stated
// tolerance and reported as one PASS or FAIL line. The process exits 0 when
// every criterion ran to completion; pass --strict to also exit nonzero when
// any criterion fails.

#include "otrect/dual.hpp"
#include "otrect/estimators.hpp"
#include "otrect/ivs.hpp"
#include "otrect/modelsel.hpp"
#include "otrect/parallel.hpp"
#include "otrect/rng.hpp"
#include "otrect/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace otrect;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------

Outcome dual_oracle() {
    Stopwatch clock;
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> nd(1, 12);
    std::uniform_int_distribution<int> rd(0, 2);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double rs[] = {0.3, 0.5, 0.7};
    constexpr std::size_t kGrid = 100000;

    double worst_oracle = 0.0, worst_grid = 0.0, worst_excess = -1e300;
    std::size_t structure_mismatch = 0;
    for (int t = 0; t < 1000; ++t) {
        const int n = nd(rng);
        const double r = rs[rd(rng)];
        std::vector<double> x(n), a(n), xr(n);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            x[i] = std::abs(g(rng));
            a[i] = 0.1 + u(rng);
            total += a[i];
        }
        double s1 = 0.0;
        for (int i = 0; i < n; ++i) {
            a[i] /= total;
            xr[i] = std::pow(x[i], r);
            s1 += a[i] * xr[i];
        }
        const double delta = 2.0 * s1 * u(rng);
        const auto profile = build_profile(x, a, r);
        const auto s = solve_dual(profile, delta);
        const auto o = enumerate_knots_oracle(profile, delta);
        worst_oracle = std::max(worst_oracle, std::abs(s.objective - o.objective));
        if (s.kind == DualCase::knot && o.kind == DualCase::knot) {
            worst_oracle = std::max({worst_oracle, std::abs(s.lambda_star - o.lambda_star), std::abs(s.eta - o.eta)});
            if (*s.knot != *o.knot) ++structure_mismatch;
        } else if (s.kind != o.kind) {
            ++structure_mismatch;
        }

        double top = 0.0;
        for (int i = 0; i < n; ++i) {
            if (x[i] > 0.0) top = std::max(top, std::pow(x[i], 1.0 - r));
        }
        top = 1.25 * top + 1e-3;
        double best = -1e300;
        for (std::size_t j = 0; j < kGrid; ++j) {
            const double lambda = top * static_cast<double>(j) / static_cast<double>(kGrid - 1);
            double v = -lambda * delta;
            for (int i = 0; i < n; ++i) v += a[i] * std::min(x[i], lambda * xr[i]);
            best = std::max(best, v);
        }
        worst_grid = std::max(worst_grid, std::abs(best - s.objective));
        worst_excess = std::max(worst_excess, best - s.objective);
    }
    const double secs = clock.seconds();
    const bool pass = worst_oracle <= 1e-9 && worst_grid <= 1e-4 && worst_excess <= 1e-12 && structure_mismatch == 0 &&
                      secs < 10.0;
    return {pass, format("max |solver-oracle| %.2e, max |solver-grid| %.2e, knot mismatches %zu, %.1f s",
                         worst_oracle, worst_grid, structure_mismatch, secs)};
}

Outcome conservation() {
    Stopwatch clock;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_cost = 0.0, worst_loss = 0.0;
    for (int t = 0; t < 500; ++t) {
        const bool regression = t % 2 == 1;
        const std::size_t n = 2 + static_cast<std::size_t>(u(rng) * 40);
        const double r = 0.1 + 0.85 * u(rng);
        const CostSpec spec(r);
        std::vector<std::vector<double>> pts;
        for (std::size_t i = 0; i < n; ++i) {
            if (regression) pts.push_back({g(rng), 2.0 * g(rng), 3.0 * g(rng)});
            else pts.push_back({3.0 * g(rng)});
        }
        const auto data = uniform_dataset(pts);
        const Task task = regression ? Task::regression : Task::mean;
        const ModelParams theta = regression ? ModelParams({g(rng), g(rng), g(rng)}) : ModelParams({g(rng)});
        const auto res = absolute_residuals(data, theta, task);
        double s1 = 0.0;
        for (double v : res) s1 += std::pow(v, r) / static_cast<double>(n);
        const double unit = effective_budget(data, theta, task, spec, Budget(1.0));
        const double delta = 1.5 * s1 * u(rng) / unit;
        const double delta_eff = delta * unit;

        const auto q = rectified_distribution(data, theta, task, spec, Budget(delta));
        const auto dual = regression ? lad_objective(data, theta, spec, Budget(delta))
                                     : mean_objective(data, theta, spec, Budget(delta));
        // Cost measured in loss units: each atom pays |change in its residual|^r.
        double cost = 0.0, loss = 0.0;
        for (const auto& atom : q.atoms) {
            const double before = absolute_residuals(Dataset{{atom.origin, 1.0}}, theta, task)[0];
            const double after = absolute_residuals(Dataset{{atom.point, 1.0}}, theta, task)[0];
            cost += atom.mass * std::pow(std::abs(before - after), r);
            loss += atom.mass * after;
        }
        worst_cost = std::max(worst_cost, std::abs(cost - std::min(delta_eff, s1)));
        worst_loss = std::max(worst_loss, std::abs(loss - dual.objective));
    }
    const double secs = clock.seconds();
    return {worst_cost <= 1e-9 && worst_loss <= 1e-9 && secs < 5.0,
            format("max |cost - min(delta_eff, S1)| %.2e, max |E_Q loss - objective| %.2e, %.2f s", worst_cost,
                   worst_loss, secs)};
}

Outcome median_degradation() {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        ContaminationModel m;
        m.corruption_level = 0.45 * u(rng);
        m.n = 50 + static_cast<std::size_t>(950 * u(rng));
        m.seed = rng();
        const auto gd = generate(m);
        const auto clean = masked(gd.samples, gd.clean_mask);
        const auto fit = fit_mean(gd.samples, CostSpec(0.5), Budget(0.0));
        const auto med = baselines_mean(gd.samples, MeanBaseline::median);
        worst = std::max(worst, std::abs(average_loss(clean, fit.theta_hat, Task::mean) -
                                         average_loss(clean, med, Task::mean)));
    }
    return {worst <= 1e-4, format("max clean-loss gap to the median over 50 datasets %.2e", worst)};
}

const TableRow& row_of(const TableResult& t, double level, const std::string& est) {
    for (const auto& r : t.rows) {
        if (std::abs(r.level - level) < 1e-12 && r.estimator == est) return r;
    }
    throw std::runtime_error("missing table row " + est);
}

Outcome mean_table() {
    Stopwatch clock;
    TableConfig cfg = TableConfig::defaults(TableTask::mean);
    cfg.levels = {0.2, 0.3, 0.4, 0.45, 0.49};
    cfg.n_trials = 100;
    cfg.n = 1000;
    cfg.seed = 2024;
    cfg.jobs = jobs();
    const auto t = run_table(cfg);
    std::ostringstream table;
    print_table(table, t);
    std::fputs(table.str().c_str(), stdout);
    const auto& ours = row_of(t, 0.45, "ours");
    const auto& med = row_of(t, 0.45, "median");
    const auto& trim = row_of(t, 0.45, "trimmed_mean");
    const double pct = 100.0 * ours.pct_rectified;
    const bool pass = ours.mean_loss >= 1.95 && ours.mean_loss <= 2.55 && ours.mean_loss < med.mean_loss &&
                      ours.mean_loss < trim.mean_loss && pct >= 8.0 && pct <= 13.0 && t.failures() == 0;
    return {pass, format("at 45%%: ours %.3f +- %.3f, median %.3f, trimmed %.3f, rectified %.2f%%, failures %zu, %.0f s",
                         ours.mean_loss, ours.two_std, med.mean_loss, trim.mean_loss, pct, t.failures(),
                         clock.seconds())};
}

Outcome lad_table() {
    Stopwatch clock;
    TableConfig cfg = TableConfig::defaults(TableTask::lad);
    cfg.levels = {0.2, 0.3, 0.4, 0.45, 0.49};
    cfg.n_trials = 100;
    cfg.n = 1000;
    cfg.seed = 2024;
    cfg.jobs = jobs();
    const auto t = run_table(cfg);
    std::ostringstream table;
    print_table(table, t);
    std::fputs(table.str().c_str(), stdout);
    bool below_all = true;
    std::string worst_level;
    for (double level : cfg.levels) {
        const double ours = row_of(t, level, "ours").mean_loss;
        for (const char* b : {"ols", "lad", "huber"}) {
            if (!(ours < row_of(t, level, b).mean_loss)) {
                below_all = false;
                worst_level += format(" %.0f%%:%s", 100.0 * level, b);
            }
        }
    }
    const double ours45 = row_of(t, 0.45, "ours").mean_loss;
    const bool pass = below_all && ours45 <= 1.4 && t.failures() == 0;
    return {pass, format("at 45%%: ours %.3f, ols %.3f, lad %.3f, huber %.3f; not below:%s; %.0f s", ours45,
                         row_of(t, 0.45, "ols").mean_loss, row_of(t, 0.45, "lad").mean_loss,
                         row_of(t, 0.45, "huber").mean_loss, worst_level.empty() ? " none" : worst_level.c_str(),
                         clock.seconds())};
}

Outcome sensitivity() {
    Stopwatch clock;
    TableConfig cfg = TableConfig::defaults(TableTask::mean);
    cfg.n = 1000;
    const std::size_t trials = 100;
    const std::uint64_t seed = 77;
    const auto deltas = linspace_step(0.5, 2.5, 0.25);
    const auto ds = sweep(SweepAxis::delta, deltas, table_sweep_trial(cfg, 0.45, SweepAxis::delta), trials, seed, jobs());
    const auto med = sweep(SweepAxis::delta, {0.5}, table_sweep_trial(cfg, 0.45, SweepAxis::delta, "median"), trials,
                           seed, jobs());
    const double median_loss = med.points.front().mean_metric;
    double worst = 0.0;
    for (const auto& p : ds.points) worst = std::max(worst, p.mean_metric);

    TableConfig at_one = cfg;
    at_one.delta = 1.0;
    const auto rsw = sweep(SweepAxis::r, {0.5, 1.0}, table_sweep_trial(at_one, 0.45, SweepAxis::r), trials, seed, jobs());
    const double r_half = rsw.points[0].mean_metric, r_one = rsw.points[1].mean_metric;
    return {worst < median_loss && r_half < r_one,
            format("delta in [0.5, 2.5]: worst %.3f vs median %.3f; at delta 1: r=0.5 %.3f vs r=1 %.3f; %.0f s", worst,
                   median_loss, r_half, r_one, clock.seconds())};
}

double two_level_min(const std::function<double(double)>& f, double hi, std::size_t coarse, double fine_step,
                     double* argmin = nullptr) {
    // Coarse scan, then a fine scan around every coarse local minimum.
    std::vector<double> vals(coarse + 1);
    const double h = hi / static_cast<double>(coarse);
    for (std::size_t i = 0; i <= coarse; ++i) vals[i] = f(h * static_cast<double>(i));
    double best = vals[0], best_x = 0.0;
    for (std::size_t i = 0; i <= coarse; ++i) {
        const bool left = i == 0 || vals[i] <= vals[i - 1];
        const bool right = i == coarse || vals[i] <= vals[i + 1];
        if (!(left && right)) continue;
        const double lo = std::max(0.0, h * (static_cast<double>(i) - 1.0));
        const double up = std::min(hi, h * (static_cast<double>(i) + 1.0));
        const auto steps = static_cast<std::size_t>(std::ceil((up - lo) / fine_step));
        for (std::size_t k = 0; k <= steps; ++k) {
            const double x = std::min(up, lo + fine_step * static_cast<double>(k));
            const double v = f(x);
            if (v < best) best = v, best_x = x;
        }
    }
    if (argmin) *argmin = best_x;
    return best;
}

Outcome scalar_minimum() {
    Stopwatch clock;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const double a = 0.01 + 10.0 * u(rng), b = 0.05 + 5.0 * u(rng), lambda = std::pow(10.0, -2.0 + 3.0 * u(rng));
        const double r = 0.02 + 0.96 * u(rng);
        const double hi = a / b;
        const double grid = two_level_min([&](double x) { return a - b * x + lambda * std::pow(x, r); }, hi, 1000,
                                          1e-5 * hi);
        worst = std::max(worst, std::abs(grid - concave_scalar_min(a, b, lambda, r)));
    }
    const double secs = clock.seconds();
    return {worst <= 1e-6 && secs < 5.0, format("max |closed form - grid| %.2e over 10^4 draws, %.2f s", worst, secs)};
}

Outcome squared_regimes() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t regime_mismatch = 0, near_ties = 0;
    double worst_disp = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const double c = 0.01 + 3.0 * u(rng), m = 0.2 + 2.8 * u(rng), lambda = std::pow(10.0, -3.0 + 4.0 * u(rng));
        const auto s = squared_loss_rectify(c, m, lambda);
        auto K = [&](double d) { return (c - m * d) * (c - m * d) + lambda * std::sqrt(d); };
        double arg = 0.0;
        const double best = two_level_min(K, c / m, 2000, 1e-6, &arg);
        if (std::abs(best - K(0.0)) <= 1e-9 && arg > 0.0) {
            // Staying put and the interior minimum cost the same: either answer is optimal.
            ++near_ties;
            if (std::abs(s.objective - best) > 1e-9) ++regime_mismatch;
            continue;
        }
        const bool grid_moves = arg > 0.0;
        if (grid_moves != (s.regime == SquaredLossRegime::long_haul)) ++regime_mismatch;
        worst_disp = std::max(worst_disp, std::abs(s.displacement - arg));
    }
    return {regime_mismatch == 0 && worst_disp <= 1e-5,
            format("regime mismatches %zu, max displacement error %.2e, exact ties %zu", regime_mismatch, worst_disp,
                   near_ties)};
}

Outcome irregular_curve() {
    const auto curve =
        objective_curve(three_point_example(), linspace_step(-2.0, 2.0, 1e-3), CostSpec(0.5), Budget(0.7));
    const int cusps = count_downward_cusps(curve);
    return {cusps >= 2, format("%d downward cusps on [-2, 2]", cusps)};
}

struct SurfaceSeed {
    double robust_mape, ks_mape, robust_grad, ks_grad, twostage_grad, cv_mape;
    std::vector<double> fixed_mape;
};

Outcome ivs_suite() {
    Stopwatch clock;
    const std::vector<double> grid = CvPlan::default_grid();
    const std::size_t n_seeds = 20;
    std::vector<SurfaceSeed> seeds(n_seeds);
    parallel_for(n_seeds, jobs(), [&](std::size_t k) {
        const auto chain = generate_chain(1000 + k, 80, 0.1, 5.0);
        const auto split = make_splits(80, 1, 0.8, 500 + k).front();
        std::vector<OptionQuote> train, test;
        std::vector<double> truth;
        for (auto i : split.train) train.push_back(chain.quotes[i]);
        for (auto i : split.test) {
            test.push_back(chain.quotes[i]);
            truth.push_back(chain.true_iv[i]);
        }
        const CostSpec spec(0.5);
        SurfaceSeed s;
        const auto robust = fit_robust(train, kDefaultBandwidths, spec, Budget(0.01));
        const auto ks = fit_ks(train);
        const auto twostage = fit_2sks(train);
        s.robust_mape = mape(robust, test, truth);
        s.ks_mape = mape(ks, test, truth);
        s.robust_grad = surface_gradient(robust);
        s.ks_grad = surface_gradient(ks);
        s.twostage_grad = surface_gradient(twostage);
        for (double d : grid) s.fixed_mape.push_back(mape(fit_robust(train, kDefaultBandwidths, spec, Budget(d)), test, truth));
        CvPlan plan;
        plan.grid = grid;
        plan.seed = 900 + k;
        s.cv_mape = mape(fit_robust_cv(train, kDefaultBandwidths, spec, plan).model, test, truth);
        seeds[k] = std::move(s);
    });

    std::size_t beats_ks = 0, beats_2sks = 0, cv_within_seed = 0;
    std::vector<double> fixed_mean(grid.size(), 0.0);
    double cv_mean = 0.0;
    for (const auto& s : seeds) {
        if (s.robust_mape < s.ks_mape && s.robust_grad < s.ks_grad) ++beats_ks;
        if (s.robust_grad < s.twostage_grad) ++beats_2sks;
        const double best_here = *std::min_element(s.fixed_mape.begin(), s.fixed_mape.end());
        if (s.cv_mape <= 1.05 * best_here) ++cv_within_seed;
        for (std::size_t g = 0; g < grid.size(); ++g) fixed_mean[g] += s.fixed_mape[g] / n_seeds;
        cv_mean += s.cv_mape / n_seeds;
    }
    const auto best_fixed = std::min_element(fixed_mean.begin(), fixed_mean.end());
    const double best_delta = grid[static_cast<std::size_t>(best_fixed - fixed_mean.begin())];
    const bool cv_ok = cv_mean <= 1.05 * *best_fixed;
    const bool pass = beats_ks >= 18 && beats_2sks >= 14 && cv_ok;
    return {pass, format("beats KS on MAPE and roughness %zu/20 (need 18), beats 2SKS on roughness %zu/20 (need 14), "
                         "CV mean MAPE %.4f vs best fixed delta %g at %.4f (%+.1f%%; per seed within 5%%: %zu/20), %.0f s",
                         beats_ks, beats_2sks, cv_mean, best_delta, *best_fixed, 100.0 * (cv_mean / *best_fixed - 1.0),
                         cv_within_seed, clock.seconds())};
}

Outcome convex_contrast() {
    Stopwatch clock;
    TableConfig cfg = TableConfig::defaults(TableTask::lad);
    cfg.estimators = {"ours"};
    cfg.n = 1000;
    const std::size_t n_seeds = 50;
    std::string detail;
    bool pass = true;
    for (double delta : {0.9, 1.5}) {
        std::vector<int> worse(n_seeds, 0);
        parallel_for(n_seeds, jobs(), [&](std::size_t k) {
            const std::uint64_t seed = stream_seed(31337, k);
            TableConfig concave = cfg, convex = cfg;
            concave.delta = convex.delta = delta;
            convex.r = 2.0;
            convex.convex_comparison = true;
            const auto a = run_trial(concave, 0.45, seed).front();
            const auto b = run_trial(convex, 0.45, seed).front();
            worse[k] = !a.failed && !b.failed && b.clean_loss > a.clean_loss;
        });
        const int count = std::accumulate(worse.begin(), worse.end(), 0);
        pass = pass && count >= 45;
        detail += format("delta %.1f: r=2 worse in %d/50; ", delta, count);
    }
    detail += format("need 45/50 each, %.0f s", clock.seconds());
    return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    std::string only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--strict") == 0) strict = true;
        else only = argv[i];
    }

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"dual solver vs knot oracle vs lambda grid", dual_oracle},
        {"budget conservation and loss consistency", conservation},
        {"zero budget degrades to the median", median_degradation},
        {"location table at 45% contamination", mean_table},
        {"regression table at every contamination level", lad_table},
        {"sensitivity in delta and r", sensitivity},
        {"concave scalar minimum vs grid", scalar_minimum},
        {"squared-loss regimes vs grid", squared_regimes},
        {"irregular objective on three points", irregular_curve},
        {"implied-volatility surface suite", ivs_suite},
        {"concave vs convex cost contrast", convex_contrast},
    };

    int passed = 0, failed = 0, errors = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && name.find(only) == std::string::npos) continue;
        try {
            const auto out = run();
            std::printf("%s  %s: %s\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str());
            (out.pass ? passed : failed)++;
        } catch (const std::exception& e) {
            std::printf("FAIL  %s: error: %s\n", name.c_str(), e.what());
            ++errors;
        }
        std::fflush(stdout);
    }
    std::printf("%d passed, %d failed, %d errored\n", passed, failed + errors, errors);
    if (errors > 0) return 2;
    return strict && failed > 0 ? 1 : 0;
}
