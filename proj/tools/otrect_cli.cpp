// Command-line front end: simulations, surface fits, budget selection,
// sweeps, objective curves and rectification snapshots. Every file written
// gets a <file>.meta.json sidecar holding the configuration needed to rerun it.

#include "otrect/core.hpp"
#include "otrect/estimators.hpp"
#include "otrect/ivs.hpp"
#include "otrect/modelsel.hpp"
#include "otrect/rng.hpp"
#include "otrect/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;
using namespace otrect;

constexpr int kOk = 0;
constexpr int kDataError = 1;
constexpr int kUsageError = 2;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<double> parse_values(const std::string& text) {
    std::vector<std::string> parts;
    std::string part;
    const char sep = text.find(':') != std::string::npos ? ':' : ',';
    std::stringstream ss(text);
    while (std::getline(ss, part, sep)) parts.push_back(part);
    std::vector<double> v;
    try {
        for (const auto& p : parts) {
            std::size_t used = 0;
            v.push_back(std::stod(p, &used));
            if (used != p.size()) throw std::invalid_argument(p);
        }
    } catch (const std::exception&) {
        throw UsageError("cannot parse value list '" + text + "'");
    }
    if (sep == ':') {
        if (v.size() != 3) throw UsageError("ranges are written start:stop:step");
        try {
            return linspace_step(v[0], v[1], v[2]);
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }
    }
    if (v.empty()) throw UsageError("empty value list");
    return v;
}

Bandwidths parse_bandwidths(const std::string& text) {
    const auto v = parse_values(text);
    if (v.size() != 3) throw UsageError("bandwidths take three comma-separated values");
    return {v[0], v[1], v[2]};
}

TableTask parse_task(const std::string& t) {
    if (t == "mean") return TableTask::mean;
    if (t == "lad") return TableTask::lad;
    throw UsageError("task must be mean or lad");
}

CostSpec make_spec(double r, bool convex) {
    if (r >= 1.0 && !convex) throw UsageError("r >= 1 is the convex comparison regime; pass --convex to run it");
    if (!(r > 0.0)) throw UsageError("r must be positive");
    return CostSpec(r, convex);
}

std::ofstream open_output(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open " + path + " for writing");
    return os;
}

struct Run {
    std::string command;
    std::vector<std::string> argv;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    json base() const {
        return {{"format_version", 1},
                {"tool_version", kVersion},
                {"command", command},
                {"argv", argv},
                {"seed", seed},
                {"jobs", jobs},
                {"rng_algorithm", std::string(kRngAlgorithm)}};
    }

    void sidecar(const std::string& path, json meta) const {
        meta["output"] = path;
        meta["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        auto os = open_output(path + ".meta.json");
        os << meta.dump(2) << '\n';
    }
};

json fit_config_json(const FitConfig& c) {
    return {{"step_size", c.step_size},
            {"max_iters", c.max_iters},
            {"tol", c.tol},
            {"stop_rule", c.stop_rule == StopRule::absolute ? "absolute" : "relative"},
            {"n_restarts", c.n_restarts},
            {"batch_size", c.batch_size}};
}

struct FitOverrides {
    double lr = 0.0;
    int max_iters = 0;
    double tol = -1.0;
    int restarts = 0;

    void add(CLI::App* sub) {
        sub->add_option("--lr", lr, "step size (default depends on the task)");
        sub->add_option("--max-iters", max_iters, "iteration cap");
        sub->add_option("--tol", tol, "stopping tolerance on the objective change");
        sub->add_option("--restarts", restarts, "number of random restarts");
    }
    void apply(FitConfig& c) const {
        if (lr > 0.0) c.step_size = lr;
        if (max_iters > 0) c.max_iters = max_iters;
        if (tol >= 0.0) c.tol = tol;
        if (restarts > 0) c.n_restarts = restarts;
    }
};

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string task;
    std::string levels = "0.2,0.3,0.4,0.45,0.49";
    double delta = -1.0;
    double r = 0.5;
    bool convex = false;
    std::size_t trials = 100;
    std::size_t n = 1000;
    std::vector<std::string> estimators;
    bool bernoulli = false;
    double spread = 2.0;
    std::string out;
    FitOverrides fit;
};

int cmd_simulate(const SimulateArgs& a, const Run& run) {
    TableConfig cfg = TableConfig::defaults(parse_task(a.task));
    cfg.levels = parse_values(a.levels);
    if (a.delta >= 0.0) cfg.delta = a.delta;
    make_spec(a.r, a.convex);
    cfg.r = a.r;
    cfg.convex_comparison = a.convex;
    cfg.n_trials = a.trials;
    cfg.n = a.n;
    cfg.seed = run.seed;
    cfg.jobs = run.jobs;
    cfg.exact_counts = !a.bernoulli;
    cfg.spread = a.spread;
    if (!a.estimators.empty()) cfg.estimators = a.estimators;
    a.fit.apply(cfg.ours);

    const auto table = run_table(cfg);
    print_table(std::cout, table);
    if (table.failures() > 0) std::cerr << "warning: " << table.failures() << " trial fits failed\n";

    if (!a.out.empty()) {
        auto os = open_output(a.out);
        write_table_csv(os, table);
        auto meta = run.base();
        meta["config"] = {{"task", to_string(cfg.task)},
                          {"levels", cfg.levels},
                          {"delta", cfg.delta},
                          {"r", cfg.r},
                          {"convex_comparison", cfg.convex_comparison},
                          {"n_trials", cfg.n_trials},
                          {"n", cfg.n},
                          {"estimators", cfg.estimator_names()},
                          {"contamination", cfg.exact_counts ? "exact_counts" : "bernoulli"},
                          {"spread", cfg.spread},
                          {"fit", fit_config_json(cfg.ours)},
                          {"error_bars", "two sample standard deviations"}};
        meta["failed_trials"] = table.failures();
        run.sidecar(a.out, meta);
    }
    return kOk;
}

// ------------------------------------------------------------- fit-surface

struct SurfaceArgs {
    std::string model = "robust";
    std::string in;
    std::string out;
    std::string test_in;
    double delta = 0.01;
    double r = 0.5;
    bool cv = false;
    double holdout = 0.0;
    std::size_t trials = 5;
    std::string h = "0.35,0.10,0.50";
    std::string basis = "smoother";
    bool adaptive = false;
    FitOverrides fit;
};

struct SurfaceFitter {
    std::string model;
    Bandwidths h;
    CostSpec spec;
    double delta;
    bool cv;
    KernelBasis basis;
    FitConfig cfg;
    std::uint64_t seed;
    int jobs;

    KernelModel fit(const std::vector<OptionQuote>& chain, CvResult* cv_out) const {
        if (model == "ks") return fit_ks(chain, h);
        if (model == "2sks") return fit_2sks(chain, h);
        if (cv) {
            CvPlan plan;
            plan.seed = seed;
            plan.jobs = jobs;
            auto res = fit_robust_cv(chain, h, spec, plan, cfg, basis);
            if (cv_out) *cv_out = res.cv;
            return res.model;
        }
        return fit_robust(chain, h, spec, Budget(delta), cfg, basis);
    }
};

json surface_json(const KernelModel& m) {
    const auto grid = SurfaceGrid::standard();
    return {{"taus", grid.taus}, {"deltas", grid.deltas}, {"values", grid.evaluate(m)}, {"layout", "row-major, maturity-major"}};
}

int cmd_fit_surface(const SurfaceArgs& a, const Run& run) {
    if (a.model != "ks" && a.model != "2sks" && a.model != "robust") throw UsageError("model must be ks, 2sks or robust");
    if (a.cv && a.model != "robust") throw UsageError("--cv applies to the robust model only");
    if (a.basis != "smoother" && a.basis != "raw") throw UsageError("basis must be smoother or raw");
    if (a.holdout < 0.0 || a.holdout >= 1.0) throw UsageError("--holdout must lie in [0, 1)");
    if (!(a.delta >= 0.0)) throw UsageError("--delta must be nonnegative");

    FitConfig cfg = robust_defaults();
    a.fit.apply(cfg);
    if (a.adaptive) cfg.budget_rule = adaptive_budget_rule(a.r);
    const SurfaceFitter fitter{a.model, parse_bandwidths(a.h), make_spec(a.r, false), a.delta, a.cv,
                               a.basis == "raw" ? KernelBasis::raw : KernelBasis::smoother, cfg, run.seed, run.jobs};
    validate_bandwidths(fitter.h);

    const auto chain = read_chain_csv(a.in);
    CvResult cv;
    const auto model = fitter.fit(chain, &cv);

    json result = run.base();
    result["model"] = a.model;
    result["bandwidths"] = fitter.h;
    result["delta"] = a.delta;
    result["r"] = a.r;
    result["basis"] = a.basis;
    result["budget_rule"] = a.adaptive ? "adaptive" : "fixed";
    result["quantile_rule"] = kQuantileRule;
    result["n_quotes"] = chain.size();
    result["flags"] = {{"filter_passthrough", model.filter_passthrough},
                       {"n_filtered", model.n_filtered},
                       {"unweighted_fallback", model.unweighted_fallback}};
    if (a.model == "robust") {
        result["fit"] = fit_config_json(cfg);
        result["detected_outlier_indices"] = model.detected_outlier_indices;
        result["pct_rectified"] = model.pct_rectified;
        result["final_objective"] = model.final_objective;
        result["iterations"] = model.iterations;
    }
    if (a.cv) {
        result["delta_star"] = cv.delta_star;
        json rows = json::array();
        for (const auto& row : cv.table) rows.push_back({{"delta", row.delta}, {"mean_mape", row.mean_metric}, {"std_mape", row.std_metric}});
        result["cv_table"] = rows;
        result["cv_failed_cells"] = cv.failed_cells;
    }

    json metrics;
    if (!a.test_in.empty()) {
        metrics["mape"] = mape(model, read_chain_csv(a.test_in));
        metrics["mape_on"] = a.test_in;
    } else {
        metrics["mape"] = mape(model, chain);
        metrics["mape_on"] = "training chain";
    }
    metrics["surface_gradient"] = surface_gradient(model);
    result["metrics"] = metrics;

    if (a.holdout > 0.0) {
        const auto splits = make_splits(chain.size(), a.trials, 1.0 - a.holdout, stream_seed(run.seed, 2));
        json trials = json::array();
        double sum_mape = 0.0, sum_grad = 0.0;
        for (std::size_t t = 0; t < splits.size(); ++t) {
            std::vector<OptionQuote> tr, te;
            for (auto i : splits[t].train) tr.push_back(chain[i]);
            for (auto i : splits[t].test) te.push_back(chain[i]);
            SurfaceFitter f = fitter;
            f.seed = stream_seed(run.seed, 100 + t);
            CvResult tcv;
            const auto m = f.fit(tr, &tcv);
            const double mp = mape(m, te);
            const double gr = surface_gradient(m);
            sum_mape += mp;
            sum_grad += gr;
            json row = {{"trial", t}, {"mape", mp}, {"surface_gradient", gr}, {"n_train", tr.size()}, {"n_test", te.size()}};
            if (a.cv) row["delta_star"] = tcv.delta_star;
            trials.push_back(row);
        }
        const double T = static_cast<double>(splits.size());
        result["holdout"] = {{"test_fraction", a.holdout},
                             {"trials", trials},
                             {"mean_mape", sum_mape / T},
                             {"mean_surface_gradient", sum_grad / T}};
    }

    std::cout << "model " << a.model << ": MAPE " << metrics["mape"].get<double>() << ", surface gradient "
              << metrics["surface_gradient"].get<double>();
    if (a.cv) std::cout << ", delta* " << cv.delta_star;
    if (result.contains("holdout")) {
        std::cout << "; holdout MAPE " << result["holdout"]["mean_mape"].get<double>() << ", holdout gradient "
                  << result["holdout"]["mean_surface_gradient"].get<double>();
    }
    std::cout << '\n';
    if (model.filter_passthrough) std::cerr << "warning: chain too short for the quantile filter; nothing removed\n";
    if (model.unweighted_fallback) std::cerr << "warning: all vegas are zero; weights ignored\n";

    if (!a.out.empty()) {
        result["surface"] = surface_json(model);
        auto os = open_output(a.out);
        os << result.dump(2) << '\n';
        auto meta = run.base();
        meta["input"] = a.in;
        meta["model"] = a.model;
        run.sidecar(a.out, meta);
    }
    return kOk;
}

// -------------------------------------------------------------------- cv

struct CvArgs {
    std::string task = "mean";
    double level = 0.45;
    std::string grid = "0.25,0.5,1,2,2.5,4";
    std::size_t splits = 5;
    double split_frac = 0.8;
    double r = 0.5;
    std::size_t n = 1000;
    bool all_points = false;
    std::string out;
    FitOverrides fit;
};

int cmd_cv(const CvArgs& a, const Run& run) {
    TableConfig cfg = TableConfig::defaults(parse_task(a.task));
    make_spec(a.r, false);
    cfg.r = a.r;
    cfg.n = a.n;
    a.fit.apply(cfg.ours);
    CvPlan plan;
    plan.grid = parse_values(a.grid);
    plan.n_splits = a.splits;
    plan.split_frac = a.split_frac;
    plan.metric = CvMetric::clean_loss;
    plan.seed = stream_seed(run.seed, 1);
    plan.jobs = run.jobs;
    const auto res = cross_validate_table(cfg, a.level, plan, run.seed, !a.all_points);
    write_cv_csv(std::cout, res);
    std::cout << "delta* = " << res.delta_star << '\n';
    if (!a.out.empty()) {
        auto os = open_output(a.out);
        write_cv_csv(os, res);
        auto meta = run.base();
        meta["config"] = {{"task", a.task}, {"level", a.level}, {"grid", plan.grid}, {"n_splits", plan.n_splits},
                          {"split_frac", plan.split_frac}, {"r", a.r}, {"n", a.n},
                          {"holdout_metric", a.all_points ? "average loss on all holdout points" : "average loss on clean holdout points"},
                          {"fit", fit_config_json(cfg.ours)}};
        meta["delta_star"] = res.delta_star;
        meta["failed_cells"] = res.failed_cells;
        run.sidecar(a.out, meta);
    }
    return kOk;
}

// ----------------------------------------------------------------- sweep

struct SweepArgs {
    std::string axis;
    std::string values;
    std::string task = "mean";
    double level = 0.45;
    double delta = -1.0;
    double r = 0.5;
    std::size_t trials = 30;
    std::size_t n = 1000;
    std::string estimator = "ours";
    std::string out;
    FitOverrides fit;
};

int cmd_sweep(const SweepArgs& a, const Run& run) {
    SweepAxis axis;
    if (a.axis == "delta") axis = SweepAxis::delta;
    else if (a.axis == "r") axis = SweepAxis::r;
    else throw UsageError("axis must be delta or r");
    const auto values = parse_values(a.values);
    if (axis == SweepAxis::r) {
        for (double v : values) {
            if (!(v > 0.0)) throw UsageError("r values must be positive");
        }
    } else {
        make_spec(a.r, false);
    }

    TableConfig cfg = TableConfig::defaults(parse_task(a.task));
    if (a.delta >= 0.0) cfg.delta = a.delta;
    cfg.r = a.r;
    cfg.n = a.n;
    a.fit.apply(cfg.ours);
    const auto res = sweep(axis, values, table_sweep_trial(cfg, a.level, axis, a.estimator), a.trials, run.seed, run.jobs);
    write_sweep_csv(std::cout, res);
    if (!a.out.empty()) {
        auto os = open_output(a.out);
        write_sweep_csv(os, res);
        auto meta = run.base();
        meta["config"] = {{"axis", a.axis}, {"values", values}, {"task", a.task}, {"level", a.level},
                          {"delta", cfg.delta}, {"r", cfg.r}, {"n_trials", a.trials}, {"n", a.n},
                          {"estimator", a.estimator}, {"fit", fit_config_json(cfg.ours)},
                          {"spread", "sample standard deviation over trials"}};
        run.sidecar(a.out, meta);
    }
    return kOk;
}

// ----------------------------------------------------------------- curve

struct CurveArgs {
    std::string example = "three-point";
    double delta = 0.7;
    double r = 0.5;
    bool convex = false;
    std::string thetas = "-1.5:1.5:0.001";
    std::string out;
};

int cmd_curve(const CurveArgs& a, const Run& run) {
    if (a.example != "three-point") throw UsageError("the only example is three-point");
    const auto spec = make_spec(a.r, a.convex);
    const auto thetas = parse_values(a.thetas);
    const auto data = three_point_example();
    const auto curve = objective_curve(data, thetas, spec, Budget(a.delta));
    const int cusps = count_downward_cusps(curve);
    std::cout << "downward cusps: " << cusps << '\n';
    if (!a.out.empty()) {
        auto os = open_output(a.out);
        os << "theta,objective\n" << std::setprecision(12);
        for (const auto& [t, f] : curve) os << t << ',' << f << '\n';
        auto meta = run.base();
        meta["config"] = {{"example", a.example}, {"points", {-1.0, 0.0, 1.0}}, {"delta", a.delta}, {"r", a.r},
                          {"thetas", a.thetas}};
        meta["downward_cusps"] = cusps;
        run.sidecar(a.out, meta);
    }
    return kOk;
}

// ---------------------------------------------------------------- evolve

struct EvolveArgs {
    std::string task = "mean";
    std::string deltas = "0,0.5,1,1.5,2,2.5";
    double r = 0.5;
    bool convex = false;
    double level = 0.45;
    std::size_t n = 1000;
    bool bernoulli = false;
    std::string out;
    FitOverrides fit;
};

int cmd_evolve(const EvolveArgs& a, const Run& run) {
    const TableTask task = parse_task(a.task);
    const auto spec = make_spec(a.r, a.convex);
    ContaminationModel model;
    model.corruption_level = a.level;
    model.n = a.n;
    model.seed = run.seed;
    model.exact_counts = !a.bernoulli;
    FitConfig cfg = TableConfig::defaults(task).ours;
    cfg.seed = stream_seed(run.seed, 1);
    a.fit.apply(cfg);
    const auto snaps = evolution_export(task, model, parse_values(a.deltas), spec, cfg);
    for (const auto& s : snaps) {
        std::size_t moved = 0;
        for (const auto& row : s.rows) moved += row.moved;
        std::cout << "delta " << s.delta << ": objective " << s.objective << ", moved atoms " << moved << '\n';
    }
    if (!a.out.empty()) {
        auto os = open_output(a.out);
        write_snapshots_csv(os, snaps);
        auto meta = run.base();
        json thetas = json::array();
        for (const auto& s : snaps) thetas.push_back({{"delta", s.delta}, {"theta", s.theta}, {"objective", s.objective}});
        meta["config"] = {{"task", a.task}, {"r", a.r}, {"level", a.level}, {"n", a.n},
                          {"contamination", a.bernoulli ? "bernoulli" : "exact_counts"}, {"fit", fit_config_json(cfg)}};
        meta["fits"] = thetas;
        run.sidecar(a.out, meta);
    }
    return kOk;
}

// ------------------------------------------------------------ make-chain

struct ChainArgs {
    std::size_t n = 80;
    double outlier_frac = 0.1;
    double outlier_scale = 5.0;
    std::string out;
};

int cmd_make_chain(const ChainArgs& a, const Run& run) {
    if (a.out.empty()) throw UsageError("make-chain needs --out");
    const auto chain = generate_chain(run.seed, a.n, a.outlier_frac, a.outlier_scale);
    auto os = open_output(a.out);
    write_chain_csv(os, chain.quotes);
    auto meta = run.base();
    meta["config"] = {{"n_quotes", a.n}, {"outlier_frac", a.outlier_frac}, {"outlier_scale", a.outlier_scale}};
    meta["true_iv"] = chain.true_iv;
    meta["outlier_indices"] = chain.outlier_indices;
    run.sidecar(a.out, meta);
    std::cout << "wrote " << chain.quotes.size() << " quotes (" << chain.outlier_indices.size() << " outliers) to "
              << a.out << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust estimation that moves outliers under a concave transport cost"};
    app.require_subcommand(1);
    app.fallthrough();
    Run run;
    for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);
    app.add_option("--seed", run.seed, "master seed")->envname("OTRECT_SEED");
    app.add_option("--jobs", run.jobs, "worker threads")->check(CLI::Range(1, 1024));

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "comparison table over corruption levels");
    s->add_option("--task", sim.task, "mean or lad")->required();
    s->add_option("--levels", sim.levels, "corruption levels, comma list or start:stop:step");
    s->add_option("--delta", sim.delta, "budget (default 0.5 for mean, 1.5 for lad)");
    s->add_option("--r", sim.r, "cost exponent");
    s->add_flag("--convex", sim.convex, "allow r >= 1 for comparison runs");
    s->add_option("--trials", sim.trials, "trials per level");
    s->add_option("--n", sim.n, "points per trial");
    s->add_option("--estimators", sim.estimators, "subset of estimators")->delimiter(',');
    s->add_flag("--bernoulli", sim.bernoulli, "corrupt each point independently instead of exact counts");
    s->add_option("--spread", sim.spread, "standard deviation of the mixture components or of the regressor");
    s->add_option("--out", sim.out, "results CSV");
    sim.fit.add(s);

    SurfaceArgs surf;
    auto* f = app.add_subcommand("fit-surface", "fit an implied-volatility surface to an option chain");
    f->add_option("--model", surf.model, "ks, 2sks or robust");
    f->add_option("--in", surf.in, "option chain CSV")->required();
    f->add_option("--out", surf.out, "surface JSON");
    f->add_option("--test-in", surf.test_in, "separate chain for the MAPE");
    f->add_option("--delta", surf.delta, "budget");
    f->add_option("--r", surf.r, "cost exponent");
    f->add_flag("--cv", surf.cv, "choose delta by holdout MAPE over the standard grid");
    f->add_option("--holdout", surf.holdout, "test fraction for repeated random splits");
    f->add_option("--trials", surf.trials, "number of holdout splits");
    f->add_option("--bandwidths", surf.h, "h for (log tau, delta moneyness, call flag)");
    f->add_option("--basis", surf.basis, "smoother or raw");
    f->add_flag("--adaptive-budget", surf.adaptive, "reset delta each iteration to loss / (2 ||theta||^r)");
    surf.fit.add(f);

    CvArgs cva;
    auto* c = app.add_subcommand("cv", "choose the budget for a simulation task by holdout loss");
    c->add_option("--task", cva.task, "mean or lad");
    c->add_option("--level", cva.level, "corruption level");
    c->add_option("--grid", cva.grid, "budget candidates");
    c->add_option("--splits", cva.splits, "number of random splits");
    c->add_option("--split-frac", cva.split_frac, "training fraction");
    c->add_option("--r", cva.r, "cost exponent");
    c->add_option("--n", cva.n, "points");
    c->add_flag("--all-points", cva.all_points, "score on every holdout point, not just the clean ones");
    c->add_option("--out", cva.out, "CV table CSV");
    cva.fit.add(c);

    SweepArgs swp;
    auto* w = app.add_subcommand("sweep", "clean loss as a function of delta or r");
    w->add_option("--axis", swp.axis, "delta or r")->required();
    w->add_option("--values", swp.values, "comma list or start:stop:step")->required();
    w->add_option("--task", swp.task, "mean or lad");
    w->add_option("--level", swp.level, "corruption level");
    w->add_option("--delta", swp.delta, "budget for r sweeps");
    w->add_option("--r", swp.r, "cost exponent for delta sweeps");
    w->add_option("--trials", swp.trials, "trials per value");
    w->add_option("--n", swp.n, "points per trial");
    w->add_option("--estimator", swp.estimator, "estimator to sweep");
    w->add_option("--out", swp.out, "sweep CSV");
    swp.fit.add(w);

    CurveArgs crv;
    auto* u = app.add_subcommand("curve", "objective along a line of parameters");
    u->add_option("--example", crv.example, "three-point");
    u->add_option("--delta", crv.delta, "budget");
    u->add_option("--r", crv.r, "cost exponent");
    u->add_flag("--convex", crv.convex, "allow r >= 1");
    u->add_option("--thetas", crv.thetas, "evaluation points");
    u->add_option("--out", crv.out, "curve CSV");

    EvolveArgs evo;
    auto* e = app.add_subcommand("evolve", "rectified distribution at several budgets");
    e->add_option("--task", evo.task, "mean or lad");
    e->add_option("--deltas", evo.deltas, "budgets");
    e->add_option("--r", evo.r, "cost exponent");
    e->add_flag("--convex", evo.convex, "allow r >= 1");
    e->add_option("--level", evo.level, "corruption level");
    e->add_option("--n", evo.n, "points");
    e->add_flag("--bernoulli", evo.bernoulli, "corrupt each point independently");
    e->add_option("--out", evo.out, "snapshots CSV");
    evo.fit.add(e);

    ChainArgs chn;
    auto* m = app.add_subcommand("make-chain", "write a synthetic option chain");
    m->add_option("--n", chn.n, "quotes");
    m->add_option("--outlier-frac", chn.outlier_frac, "fraction of corrupted quotes");
    m->add_option("--outlier-scale", chn.outlier_scale, "IV multiplier for corrupted quotes");
    m->add_option("--out", chn.out, "chain CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        run.command = app.get_subcommands().front()->get_name();
        if (s->parsed()) return cmd_simulate(sim, run);
        if (f->parsed()) return cmd_fit_surface(surf, run);
        if (c->parsed()) return cmd_cv(cva, run);
        if (w->parsed()) return cmd_sweep(swp, run);
        if (u->parsed()) return cmd_curve(crv, run);
        if (e->parsed()) return cmd_evolve(evo, run);
        if (m->parsed()) return cmd_make_chain(chn, run);
    } catch (const UsageError& err) {
        std::cerr << "usage error: " << err.what() << '\n';
        return kUsageError;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kDataError;
    }
    return kUsageError;
}
