#include "otrect/sim.hpp"

#include "otrect/parallel.hpp"
#include "otrect/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace otrect {

void ContaminationModel::validate() const {
    if (!(corruption_level >= 0.0 && corruption_level < 1.0)) {
        throw InputError("corruption level must lie in [0, 1)");
    }
    if (n == 0) throw InputError("sample size must be positive");
    if (!(scale > 0.0 && x_scale > 0.0 && noise >= 0.0)) throw InputError("scales must be positive");
}

GeneratedData generate(const ContaminationModel& model) {
    model.validate();
    auto rng = make_stream(model.seed, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    GeneratedData out;
    out.samples.reserve(model.n);
    out.clean_mask.reserve(model.n);
    std::vector<bool> corrupted(model.n, false);
    if (model.exact_counts) {
        const auto k = static_cast<std::size_t>(std::llround(model.corruption_level * static_cast<double>(model.n)));
        std::vector<std::size_t> idx(model.n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        auto pick = make_stream(model.seed, 1);
        std::shuffle(idx.begin(), idx.end(), pick);
        for (std::size_t i = 0; i < k; ++i) corrupted[idx[i]] = true;
    }
    const double w = 1.0 / static_cast<double>(model.n);
    for (std::size_t i = 0; i < model.n; ++i) {
        const bool clean = model.exact_counts ? !corrupted[i] : unif(rng) >= model.corruption_level;
        out.clean_mask.push_back(clean);
        if (model.kind == ContaminationKind::mean_mixture) {
            const double loc = clean ? model.clean_loc : model.outlier_loc;
            out.samples.push_back({{loc + model.scale * normal(rng)}, w});
        } else {
            const double x = (clean ? model.clean_x_loc : model.outlier_x_loc) + model.x_scale * normal(rng);
            const double b = clean ? model.clean_intercept : model.outlier_intercept;
            const double y = b + model.slope * x + model.noise * normal(rng);
            out.samples.push_back({{x, y}, w});
        }
    }
    return out;
}

Dataset masked(const Dataset& data, const std::vector<bool>& mask) {
    if (mask.size() != data.size()) throw InputError("mask length does not match the data");
    Dataset out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (mask[i]) out.push_back(data[i]);
    }
    for (auto& s : out) s.weight = 1.0 / static_cast<double>(out.size());
    return out;
}

std::string to_string(TableTask t) { return t == TableTask::mean ? "mean" : "lad"; }

TableConfig TableConfig::defaults(TableTask task) {
    TableConfig c;
    c.task = task;
    if (task == TableTask::mean) {
        c.delta = 0.5;
        c.ours = FitConfig::mean_defaults();
        c.estimators = {"ours", "mean", "median", "trimmed_mean"};
    } else {
        c.delta = 1.5;
        c.ours = FitConfig::lad_defaults();
        c.estimators = {"ours", "ols", "lad", "huber"};
    }
    return c;
}

std::vector<std::string> TableConfig::estimator_names() const {
    if (!estimators.empty()) return estimators;
    return defaults(task).estimators;
}

std::size_t TableResult::failures() const {
    std::size_t f = 0;
    for (const auto& r : rows) f += r.n_failed;
    return f;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t level, std::size_t trial) {
    return stream_seed(stream_seed(seed, level), trial);
}

GeneratedData trial_data(TableTask task, double level, std::size_t n, std::uint64_t seed, bool exact_counts,
                         double spread) {
    ContaminationModel m;
    m.kind = task == TableTask::mean ? ContaminationKind::mean_mixture : ContaminationKind::regression_shift;
    m.corruption_level = level;
    m.n = n;
    m.seed = seed;
    m.exact_counts = exact_counts;
    m.scale = spread;
    m.x_scale = spread;
    return generate(m);
}

namespace {

TrialReport run_one(const TableConfig& cfg, const std::string& name, const GeneratedData& gd, double level,
                    std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    TrialReport rep;
    rep.estimator = name;
    rep.seed = seed;
    rep.pct_rectified = std::numeric_limits<double>::quiet_NaN();
    const Task task = cfg.task == TableTask::mean ? Task::mean : Task::regression;
    try {
        ModelParams theta;
        if (name == "ours") {
            FitConfig fc = cfg.ours;
            fc.seed = stream_seed(seed, 1);
            const CostSpec spec(cfg.r, cfg.convex_comparison);
            const auto res = cfg.task == TableTask::mean ? fit_mean(gd.samples, spec, Budget(cfg.delta), fc)
                                                         : fit_lad(gd.samples, spec, Budget(cfg.delta), fc);
            theta = res.theta_hat;
            rep.pct_rectified = res.pct_rectified;
        } else if (cfg.task == TableTask::mean) {
            if (name == "mean") theta = baselines_mean(gd.samples, MeanBaseline::mean);
            else if (name == "median") theta = baselines_mean(gd.samples, MeanBaseline::median);
            else if (name == "trimmed_mean") {
                theta = baselines_mean(gd.samples, MeanBaseline::trimmed_mean, {level, cfg.trim_side});
            } else {
                throw InputError("unknown estimator for the mean task: " + name);
            }
        } else {
            if (name == "ols") theta = baselines_regression(gd.samples, RegressionBaseline::ols);
            else if (name == "lad") theta = baselines_regression(gd.samples, RegressionBaseline::lad);
            else if (name == "huber") theta = baselines_regression(gd.samples, RegressionBaseline::huber);
            else throw InputError("unknown estimator for the lad task: " + name);
        }
        rep.theta = theta.theta;
        rep.clean_loss = average_loss(masked(gd.samples, gd.clean_mask), theta, task);
    } catch (const InputError&) {
        throw;  // configuration problems are not per-trial failures
    } catch (const std::exception& e) {
        rep.failed = true;
        rep.error = e.what();
    }
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace

std::vector<TrialReport> run_trial(const TableConfig& cfg, double level, std::uint64_t seed) {
    const auto gd = trial_data(cfg.task, level, cfg.n, seed, cfg.exact_counts, cfg.spread);
    std::vector<TrialReport> out;
    for (const auto& name : cfg.estimator_names()) out.push_back(run_one(cfg, name, gd, level, seed));
    return out;
}

TrialFn table_sweep_trial(const TableConfig& base, double level, SweepAxis axis, const std::string& estimator) {
    TableConfig cfg = base;
    cfg.estimators = {estimator};
    return [cfg, level, axis](double value, std::uint64_t seed) {
        TableConfig run = cfg;
        if (axis == SweepAxis::delta) {
            run.delta = value;
        } else {
            run.r = value;
            run.convex_comparison = value >= 1.0;
        }
        const auto rep = run_trial(run, level, seed).front();
        if (rep.failed) throw std::runtime_error("sweep trial failed: " + rep.error);
        return rep.clean_loss;
    };
}

CvResult cross_validate_table(const TableConfig& cfg, double level, const CvPlan& plan, std::uint64_t data_seed,
                              bool clean_only) {
    const auto gd = trial_data(cfg.task, level, cfg.n, data_seed, cfg.exact_counts, cfg.spread);
    const Task task = cfg.task == TableTask::mean ? Task::mean : Task::regression;
    const CostSpec spec(cfg.r, cfg.convex_comparison);
    auto cell = [&](std::span<const std::size_t> train, std::span<const std::size_t> test, double delta) {
        Dataset tr, te;
        for (auto i : train) tr.push_back(gd.samples[i]);
        for (auto i : test) {
            if (!clean_only || gd.clean_mask[i]) te.push_back(gd.samples[i]);
        }
        if (te.empty()) throw InputError("holdout split has no clean points");
        for (auto& p : tr) p.weight = 1.0 / static_cast<double>(tr.size());
        for (auto& p : te) p.weight = 1.0 / static_cast<double>(te.size());
        FitConfig fc = cfg.ours;
        fc.seed = stream_seed(data_seed, 1);
        const auto res = cfg.task == TableTask::mean ? fit_mean(tr, spec, Budget(delta), fc)
                                                     : fit_lad(tr, spec, Budget(delta), fc);
        return average_loss(te, res.theta_hat, task);
    };
    return cross_validate_delta(gd.samples.size(), cell, plan);
}

TableResult run_table(const TableConfig& cfg) {
    if (cfg.levels.empty()) throw InputError("no corruption levels given");
    if (cfg.n_trials == 0) throw InputError("n_trials must be positive");
    const auto names = cfg.estimator_names();

    TableResult out;
    out.trials.resize(cfg.levels.size());
    for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
        std::vector<std::vector<TrialReport>> per_trial(cfg.n_trials);
        parallel_for(cfg.n_trials, cfg.jobs, [&](std::size_t t) {
            per_trial[t] = run_trial(cfg, cfg.levels[li], trial_seed(cfg.seed, li, t));
        });

        auto& by_est = out.trials[li];
        by_est.assign(names.size(), {});
        for (std::size_t e = 0; e < names.size(); ++e) {
            for (std::size_t t = 0; t < cfg.n_trials; ++t) by_est[e].push_back(per_trial[t][e]);

            TableRow row;
            row.task = to_string(cfg.task);
            row.level = cfg.levels[li];
            row.estimator = names[e];
            row.n = cfg.n;
            row.seed = cfg.seed;
            double sum = 0.0, sum_pct = 0.0;
            std::vector<double> losses;
            for (const auto& rep : by_est[e]) {
                if (rep.failed) {
                    ++row.n_failed;
                    continue;
                }
                losses.push_back(rep.clean_loss);
                sum += rep.clean_loss;
                sum_pct += rep.pct_rectified;
            }
            row.n_trials = losses.size();
            const double k = static_cast<double>(losses.size());
            row.mean_loss = k > 0 ? sum / k : std::numeric_limits<double>::quiet_NaN();
            row.pct_rectified = k > 0 ? sum_pct / k : std::numeric_limits<double>::quiet_NaN();
            double ss = 0.0;
            for (double l : losses) ss += (l - row.mean_loss) * (l - row.mean_loss);
            row.two_std = losses.size() > 1 ? 2.0 * std::sqrt(ss / (k - 1.0)) : 0.0;
            out.rows.push_back(row);
        }
    }
    return out;
}

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

void write_table_csv(std::ostream& os, const TableResult& table) {
    os << "task,level,estimator,mean_loss,two_std,pct_rectified,n_trials,n,seed\n";
    for (const auto& r : table.rows) {
        os << r.task << ',' << fmt(r.level) << ',' << r.estimator << ',' << fmt(r.mean_loss) << ','
           << fmt(r.two_std) << ',' << fmt(r.pct_rectified) << ',' << r.n_trials << ',' << r.n << ',' << r.seed
           << '\n';
    }
}

void print_table(std::ostream& os, const TableResult& table) {
    os << std::left << std::setw(6) << "task" << std::setw(8) << "level" << std::setw(14) << "estimator"
       << std::setw(22) << "clean loss" << "rectified\n";
    for (const auto& r : table.rows) {
        std::ostringstream loss;
        loss << std::fixed << std::setprecision(3) << r.mean_loss << " +/- " << r.two_std;
        os << std::left << std::setw(6) << r.task << std::setw(8) << r.level << std::setw(14) << r.estimator
           << std::setw(22) << loss.str();
        if (!std::isnan(r.pct_rectified)) os << std::fixed << std::setprecision(2) << 100.0 * r.pct_rectified << '%';
        os << '\n' << std::defaultfloat;
    }
}

std::vector<Snapshot> evolution_export(TableTask task, const ContaminationModel& model,
                                       const std::vector<double>& deltas, const CostSpec& spec,
                                       const FitConfig& cfg) {
    ContaminationModel m = model;
    m.kind = task == TableTask::mean ? ContaminationKind::mean_mixture : ContaminationKind::regression_shift;
    const auto gd = generate(m);
    std::vector<Snapshot> out;
    for (double d : deltas) {
        const auto res = task == TableTask::mean ? fit_mean(gd.samples, spec, Budget(d), cfg)
                                                 : fit_lad(gd.samples, spec, Budget(d), cfg);
        Snapshot s;
        s.delta = d;
        s.theta = res.theta_hat.theta;
        s.objective = res.final_objective;
        for (const auto& a : res.rectified.atoms) s.rows.push_back({a.source, a.origin, a.point, a.mass, a.moved});
        out.push_back(std::move(s));
    }
    return out;
}

void write_snapshots_csv(std::ostream& os, const std::vector<Snapshot>& snaps) {
    std::size_t dim = 0;
    for (const auto& s : snaps) {
        if (!s.rows.empty()) dim = s.rows.front().orig.size();
    }
    os << "delta,idx";
    for (std::size_t j = 0; j < dim; ++j) os << ",orig_" << j;
    for (std::size_t j = 0; j < dim; ++j) os << ",rect_" << j;
    os << ",mass,moved\n";
    for (const auto& s : snaps) {
        for (const auto& r : s.rows) {
            os << fmt(s.delta) << ',' << r.idx;
            for (double v : r.orig) os << ',' << fmt(v);
            for (double v : r.rect) os << ',' << fmt(v);
            os << ',' << fmt(r.mass) << ',' << (r.moved ? 1 : 0) << '\n';
        }
    }
}

Dataset three_point_example() { return uniform_dataset_1d(std::vector<double>{-1.0, 0.0, 1.0}); }

std::vector<std::pair<double, double>> objective_curve(std::span<const Sample> data,
                                                       const std::vector<double>& thetas, const CostSpec& spec,
                                                       const Budget& delta) {
    for (const auto& s : data) {
        if (s.point.size() != 1) throw InputError("objective_curve expects 1-D data");
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(thetas.size());
    for (double t : thetas) out.emplace_back(t, mean_objective(data, ModelParams({t}), spec, delta).objective);
    return out;
}

std::vector<double> linspace_step(double start, double stop, double step) {
    if (!(step > 0.0) || !std::isfinite(step) || !std::isfinite(start) || !std::isfinite(stop)) {
        throw InputError("range needs finite bounds and a positive step");
    }
    if (stop < start) throw InputError("range stop lies below start");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 0.5)) + 1;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = start + static_cast<double>(i) * step;
    return out;
}

int count_downward_cusps(const std::vector<std::pair<double, double>>& curve, double slope_jump) {
    int cusps = 0;
    bool in_run = false;
    for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
        const double h = 0.5 * (curve[i + 1].first - curve[i - 1].first);
        const double d2 = curve[i + 1].second - 2.0 * curve[i].second + curve[i - 1].second;
        const bool flagged = d2 < -slope_jump * h;
        if (flagged && !in_run) ++cusps;
        in_run = flagged;
    }
    return cusps;
}

}  // namespace otrect
