#include "otrect/estimators.hpp"

#include "otrect/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace otrect {

void FitConfig::validate(std::size_t n) const {
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw InputError("step_size must be positive");
    if (max_iters < 1) throw InputError("max_iters must be at least 1");
    if (!(tol >= 0.0)) throw InputError("tol must be nonnegative");
    if (n_restarts < 1) throw InputError("n_restarts must be at least 1");
    if (batch_size > n) {
        throw InputError("batch_size " + std::to_string(batch_size) + " exceeds the " + std::to_string(n) +
                         " available samples");
    }
    if (init == InitKind::custom && theta0.empty()) throw InputError("custom init requires theta0");
}

FitConfig FitConfig::mean_defaults() {
    FitConfig c;
    c.step_size = 1e-2;
    c.max_iters = 2000;
    c.tol = 1e-6;
    c.n_restarts = 1;
    c.init = InitKind::median;
    return c;
}

FitConfig FitConfig::lad_defaults() {
    FitConfig c;
    c.step_size = 1e-2;
    c.max_iters = 1000;
    c.tol = 1e-6;
    c.n_restarts = 10;
    c.init = InitKind::gaussian;
    return c;
}

double LossModel::budget_norm(std::span<const double> /*theta*/) const { return 1.0; }

MeanLoss::MeanLoss(Dataset data) : data_(std::move(data)) {
    if (data_.empty()) throw InputError("mean estimation needs at least one sample");
    const std::size_t d = data_.front().point.size();
    if (d == 0) throw InputError("mean estimation needs points of dimension >= 1");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (data_[i].point.size() != d) throw InputError("sample " + std::to_string(i) + " has the wrong dimension");
    }
}

void MeanLoss::residuals(std::span<const double> theta, std::span<const std::size_t> idx,
                         std::vector<double>& out) const {
    out.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& z = data_[idx[k]].point;
        double s = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) s += (theta[j] - z[j]) * (theta[j] - z[j]);
        out[k] = std::sqrt(s);
    }
}

void MeanLoss::add_subgradient(std::span<const double> theta, std::size_t i, double scale,
                               std::vector<double>& grad) const {
    const auto& z = data_[i].point;
    if (z.size() == 1) {
        const double diff = theta[0] - z[0];
        grad[0] += scale * static_cast<double>((diff > 0.0) - (diff < 0.0));
        return;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) s += (theta[j] - z[j]) * (theta[j] - z[j]);
    if (s == 0.0) return;
    const double inv = scale / std::sqrt(s);
    for (std::size_t j = 0; j < z.size(); ++j) grad[j] += inv * (theta[j] - z[j]);
}

PointMover MeanLoss::mover(const ModelParams& theta) const { return mean_mover(theta); }

LadLoss::LadLoss(Dataset data) : data_(std::move(data)) {
    if (data_.empty()) throw InputError("regression needs at least one sample");
    const std::size_t p = data_.front().point.size();
    if (p < 2) throw InputError("regression points need at least one feature and a response");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (data_[i].point.size() != p) throw InputError("sample " + std::to_string(i) + " has the wrong dimension");
    }
}

void LadLoss::residuals(std::span<const double> theta, std::span<const std::size_t> idx,
                        std::vector<double>& out) const {
    out.resize(idx.size());
    const std::size_t d = data_.front().point.size() - 1;
    const double b = has_intercept(d + 1, theta.size()) ? theta[d] : 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& z = data_[idx[k]].point;
        double pred = b;
        for (std::size_t j = 0; j < d; ++j) pred += theta[j] * z[j];
        out[k] = std::abs(z[d] - pred);
    }
}

void LadLoss::add_subgradient(std::span<const double> theta, std::size_t i, double scale,
                              std::vector<double>& grad) const {
    const auto& z = data_[i].point;
    const std::size_t d = z.size() - 1;
    const bool icpt = theta.size() == d + 1;
    double pred = icpt ? theta[d] : 0.0;
    for (std::size_t j = 0; j < d; ++j) pred += theta[j] * z[j];
    const double s = pred - z[d];
    // Residuals at rounding level count as zero; their sign is noise.
    if (std::abs(s) <= 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(pred) + std::abs(z[d]))) return;
    const double g = s > 0.0 ? scale : -scale;
    for (std::size_t j = 0; j < d; ++j) grad[j] += g * z[j];
    if (icpt) grad[d] += g;
}

double LadLoss::budget_norm(std::span<const double> theta) const {
    return augmented_slope_norm(theta, data_.front().point.size());
}

PointMover LadLoss::mover(const ModelParams& theta) const { return regression_mover(theta); }

namespace {

struct Evaluation {
    SortedLossProfile profile;
    DualSolution dual;
    double raw_loss = 0.0;
};

Evaluation evaluate(const LossModel& model, const CostSpec& spec, double fixed_delta, const BudgetRule& rule,
                    std::span<const double> theta, std::span<const std::size_t> idx,
                    std::span<const double> weights, std::vector<double>& scratch) {
    model.residuals(theta, idx, scratch);
    Evaluation ev;
    for (std::size_t k = 0; k < idx.size(); ++k) ev.raw_loss += weights[k] * scratch[k];
    const double delta = rule ? rule(ev.raw_loss, theta) : fixed_delta;
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw InputError("budget rule produced an invalid delta");
    const double delta_eff = delta * pow_r(model.budget_norm(theta), spec.r());
    ev.profile = build_profile(scratch, weights, spec.r());
    ev.dual = solve_dual(ev.profile, delta_eff);
    return ev;
}

bool converged(double prev, double cur, double tol, StopRule rule) {
    const double change = std::abs(cur - prev);
    return rule == StopRule::absolute ? change < tol : change / std::max(1.0, std::abs(prev)) < tol;
}

FitResult finish(const LossModel& model, const CostSpec& spec, const Budget& delta, const FitConfig& cfg,
                 std::vector<double> theta, std::vector<double> trace, int iterations) {
    std::vector<std::size_t> all(model.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<double> w(model.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = model.samples()[i].weight;
    std::vector<double> scratch;
    auto ev = evaluate(model, spec, delta.value(), cfg.budget_rule, theta, all, w, scratch);

    FitResult out;
    out.theta_hat = ModelParams(theta);
    out.final_objective = ev.dual.objective;
    out.trace = std::move(trace);
    out.iterations = iterations;
    const double need = ev.profile.total_pow();
    out.budget_ratio = ev.dual.delta_effective > 0.0 ? need / ev.dual.delta_effective
                                                     : (need > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    InnerSolution inner{std::move(ev.profile), ev.dual};
    out.rectified = build_rectified(model.samples(), inner, model.mover(out.theta_hat));
    out.detected_outlier_indices = out.rectified.fully_moved_sources();
    const double total = out.rectified.total_mass();
    out.pct_rectified = total > 0.0 ? std::clamp(out.rectified.moved_mass() / total, 0.0, 1.0) : 0.0;
    return out;
}

}  // namespace

InnerSolution evaluate_objective(const LossModel& model, const CostSpec& spec, const Budget& delta,
                                 std::span<const double> theta) {
    std::vector<std::size_t> all(model.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<double> w(model.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = model.samples()[i].weight;
    std::vector<double> scratch;
    auto ev = evaluate(model, spec, delta.value(), {}, theta, all, w, scratch);
    return {std::move(ev.profile), ev.dual};
}

FitResult fit_generic(const LossModel& model, const CostSpec& spec, const Budget& delta, const FitConfig& cfg,
                      const ModelParams& theta_init) {
    const std::size_t n = model.size();
    if (n == 0) throw InputError("cannot fit an empty dataset");
    cfg.validate(n);

    const bool full = cfg.batch_size == 0 || cfg.batch_size == n;
    const std::size_t m = full ? n : cfg.batch_size;

    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> idx(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    std::vector<double> w(m);
    if (full) {
        for (std::size_t i = 0; i < n; ++i) w[i] = model.samples()[i].weight;
    }
    auto rng = make_stream(cfg.seed, 0);

    std::vector<double> theta = theta_init.theta;
    std::vector<double> grad(theta.size());
    std::vector<double> scratch;
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);

    int steps = 0;
    for (int t = 0;; ++t) {
        if (!full) {
            // Partial Fisher-Yates draws m indices without replacement.
            for (std::size_t k = 0; k < m; ++k) {
                std::uniform_int_distribution<std::size_t> pick(k, n - 1);
                std::swap(pool[k], pool[pick(rng)]);
            }
            std::copy_n(pool.begin(), m, idx.begin());
            double total = 0.0;
            for (std::size_t k = 0; k < m; ++k) total += model.samples()[idx[k]].weight;
            if (!(total > 0.0)) throw InputError("mini-batch has zero total weight");
            for (std::size_t k = 0; k < m; ++k) w[k] = model.samples()[idx[k]].weight / total;
        }

        const auto ev = evaluate(model, spec, delta.value(), cfg.budget_rule, theta, idx, w, scratch);
        const double f = ev.dual.objective;
        const bool stop = t == cfg.max_iters || (!trace.empty() && converged(trace.back(), f, cfg.tol, cfg.stop_rule));
        trace.push_back(f);
        if (stop) break;

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t k = ev.dual.active_begin; k < ev.dual.active_end; ++k) {
            const std::size_t local = ev.profile.perm[k];
            model.add_subgradient(theta, idx[local], w[local], grad);
        }
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= cfg.step_size * grad[j];
        ++steps;
    }
    return finish(model, spec, delta, cfg, std::move(theta), std::move(trace), steps);
}

namespace {

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    const double hi = *mid;
    if (n % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

FitResult best_of_restarts(const LossModel& model, const CostSpec& spec, const Budget& delta, const FitConfig& cfg,
                           const std::function<std::vector<double>(int)>& init_for) {
    FitResult best;
    bool have = false;
    for (int k = 0; k < cfg.n_restarts; ++k) {
        FitConfig run = cfg;
        run.seed = stream_seed(cfg.seed, static_cast<std::uint64_t>(k));
        auto res = fit_generic(model, spec, delta, run, ModelParams(init_for(k)));
        res.best_restart = k;
        if (!have || res.final_objective < best.final_objective) {
            best = std::move(res);
            have = true;
        }
    }
    return best;
}

std::vector<double> gaussian_vector(std::uint64_t seed, std::uint64_t stream, std::size_t size) {
    auto rng = make_stream(seed, stream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(size);
    for (auto& x : v) x = normal(rng);
    return v;
}

// Restart streams for initial points live apart from the batch-sampling streams.
constexpr std::uint64_t kInitStream = 0x1000;

}  // namespace

std::vector<double> coordinate_median(std::span<const Sample> data) {
    if (data.empty()) throw InputError("median of an empty dataset");
    const std::size_t d = data.front().point.size();
    std::vector<double> out(d);
    std::vector<double> col(data.size());
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < data.size(); ++i) col[i] = data[i].point.at(j);
        out[j] = median_of(col);
    }
    return out;
}

FitResult fit_mean(std::span<const Sample> data, const CostSpec& spec, const Budget& delta, const FitConfig& cfg) {
    if (data.empty()) throw InputError("fit_mean: empty data");
    MeanLoss model(Dataset(data.begin(), data.end()));
    const std::size_t d = data.front().point.size();
    cfg.validate(data.size());

    auto init_for = [&](int k) -> std::vector<double> {
        switch (cfg.init) {
            case InitKind::median: return coordinate_median(data);
            case InitKind::zero: return std::vector<double>(d, 0.0);
            case InitKind::gaussian: return gaussian_vector(cfg.seed, kInitStream + static_cast<std::uint64_t>(k), d);
            case InitKind::custom:
                if (cfg.theta0.size() != d) throw InputError("fit_mean: theta0 has the wrong dimension");
                return cfg.theta0;
        }
        return {};
    };
    return best_of_restarts(model, spec, delta, cfg, init_for);
}

FitResult fit_lad(std::span<const Sample> data, const CostSpec& spec, const Budget& delta, const FitConfig& cfg) {
    if (data.empty()) throw InputError("fit_lad: empty data");
    if (data.front().point.size() < 2) throw InputError("fit_lad: points need at least one feature");
    LadLoss model(Dataset(data.begin(), data.end()));
    const std::size_t d = data.front().point.size() - 1;
    const std::size_t p = d + (cfg.fit_intercept ? 1 : 0);
    cfg.validate(data.size());

    auto init_for = [&](int k) -> std::vector<double> {
        switch (cfg.init) {
            case InitKind::zero: return std::vector<double>(p, 0.0);
            case InitKind::median: {
                std::vector<double> t(p, 0.0);
                if (cfg.fit_intercept) {
                    std::vector<double> ys(data.size());
                    for (std::size_t i = 0; i < data.size(); ++i) ys[i] = data[i].point[d];
                    t[d] = median_of(ys);
                }
                return t;
            }
            case InitKind::gaussian: {
                auto t = gaussian_vector(cfg.seed, kInitStream + static_cast<std::uint64_t>(k), d);
                if (cfg.fit_intercept) t.push_back(0.0);
                return t;
            }
            case InitKind::custom:
                if (cfg.theta0.size() != p) throw InputError("fit_lad: theta0 has the wrong dimension");
                return cfg.theta0;
        }
        return {};
    };
    return best_of_restarts(model, spec, delta, cfg, init_for);
}

ModelParams baselines_mean(std::span<const Sample> data, MeanBaseline method, const MeanBaselineOptions& opts) {
    if (data.empty()) throw InputError("baseline of an empty dataset");
    const std::size_t d = data.front().point.size();
    switch (method) {
        case MeanBaseline::mean: {
            std::vector<double> m(d, 0.0);
            for (const auto& s : data) {
                for (std::size_t j = 0; j < d; ++j) m[j] += s.point.at(j);
            }
            for (auto& v : m) v /= static_cast<double>(data.size());
            return ModelParams(m);
        }
        case MeanBaseline::median:
            return ModelParams(coordinate_median(data));
        case MeanBaseline::trimmed_mean: {
            if (d != 1) throw InputError("trimmed mean is defined for 1-D data");
            if (!(opts.trim >= 0.0 && opts.trim < 1.0)) throw InputError("trim fraction must lie in [0, 1)");
            std::vector<double> v(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) v[i] = data[i].point[0];
            std::sort(v.begin(), v.end());
            const auto n = static_cast<double>(v.size());
            std::size_t lo = 0;
            std::size_t hi = v.size();
            switch (opts.side) {
                case TrimSide::symmetric: {
                    const auto cut = static_cast<std::size_t>(std::floor(opts.trim * n / 2.0));
                    lo = cut;
                    hi -= cut;
                    break;
                }
                case TrimSide::upper: hi -= static_cast<std::size_t>(std::floor(opts.trim * n)); break;
                case TrimSide::lower: lo = static_cast<std::size_t>(std::floor(opts.trim * n)); break;
                case TrimSide::each_tail: {
                    const auto cut = static_cast<std::size_t>(std::floor(opts.trim * n));
                    lo = cut;
                    hi -= std::min(cut, hi);
                    break;
                }
            }
            if (lo >= hi) throw InputError("trimmed mean removed every point");
            const double s = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                             v.begin() + static_cast<std::ptrdiff_t>(hi), 0.0);
            return ModelParams({s / static_cast<double>(hi - lo)});
        }
    }
    throw InputError("unknown baseline");
}

namespace {

void design(std::span<const Sample> data, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
    if (data.empty()) throw InputError("regression baseline of an empty dataset");
    const std::size_t p = data.front().point.size();
    if (p < 2) throw InputError("regression points need at least one feature and a response");
    const std::size_t d = p - 1;
    X.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(d + 1));
    y.resize(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& z = data[i].point;
        if (z.size() != p) throw InputError("sample " + std::to_string(i) + " has the wrong dimension");
        const auto r = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < d; ++j) X(r, static_cast<Eigen::Index>(j)) = z[j];
        X(r, static_cast<Eigen::Index>(d)) = 1.0;
        y(r) = z[d];
    }
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) {
        throw RankDeficiencyError("design matrix has rank " + std::to_string(qr.rank()) + " < " +
                                  std::to_string(X.cols()));
    }
    const Eigen::MatrixXd gram = X.transpose() * X;
    return gram.ldlt().solve(X.transpose() * y);
}

}  // namespace

ModelParams baselines_regression(std::span<const Sample> data, RegressionBaseline method,
                                 const RegressionBaselineOptions& opts) {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    design(data, X, y);
    switch (method) {
        case RegressionBaseline::ols:
            return ModelParams(to_std(ols(X, y)));
        case RegressionBaseline::lad: {
            FitConfig cfg = opts.lad_config;
            return fit_lad(data, CostSpec(0.5), Budget(0.0), cfg).theta_hat;
        }
        case RegressionBaseline::huber: {
            if (!(opts.huber_threshold > 0.0)) throw InputError("Huber threshold must be positive");
            Eigen::VectorXd beta = ols(X, y);
            Eigen::VectorXd wts(X.rows());
            for (int it = 0; it < opts.huber_max_iters; ++it) {
                const Eigen::VectorXd res = y - X * beta;
                for (Eigen::Index i = 0; i < res.size(); ++i) {
                    const double a = std::abs(res(i));
                    wts(i) = a <= opts.huber_threshold ? 1.0 : opts.huber_threshold / a;
                }
                const Eigen::MatrixXd gram = X.transpose() * wts.asDiagonal() * X;
                const Eigen::VectorXd next = gram.ldlt().solve(X.transpose() * wts.asDiagonal() * y);
                const double change = (next - beta).norm() / std::max(beta.norm(), 1e-12);
                beta = next;
                if (change < opts.huber_rel_tol) break;
            }
            return ModelParams(to_std(beta));
        }
    }
    throw InputError("unknown baseline");
}

double average_loss(std::span<const Sample> data, const ModelParams& theta, Task task) {
    if (data.empty()) throw InputError("average_loss of an empty dataset");
    const auto res = absolute_residuals(data, theta, task);
    return std::accumulate(res.begin(), res.end(), 0.0) / static_cast<double>(res.size());
}

}  // namespace otrect
