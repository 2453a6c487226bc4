#include "otrect/ivs.hpp"

#include "otrect/rng.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace otrect {

ParseError::ParseError(std::size_t row, const std::string& what)
    : InputError("row " + std::to_string(row) + ": " + what), row_(row) {}

void validate_quote(const OptionQuote& q) {
    if (!(q.tau_days > 0.0) || !std::isfinite(q.tau_days)) throw InputError("tau_days must be positive");
    if (!(q.delta_bs >= -1.0 && q.delta_bs <= 1.0)) throw InputError("delta must lie in [-1, 1]");
    if (!(q.iv > 0.0) || !std::isfinite(q.iv)) throw InputError("iv must be positive");
    if (!(q.vega >= 0.0) || !std::isfinite(q.vega)) throw InputError("vega must be nonnegative");
}

double delta_moneyness(double delta) { return delta >= 0.0 ? delta : 1.0 + delta; }

FeatureVector featurize(const OptionQuote& q) {
    if (!(q.tau_days > 0.0)) throw InputError("featurize: tau_days must be positive");
    return {std::log(q.tau_days), delta_moneyness(q.delta_bs), q.is_call ? 1.0 : 0.0};
}

void validate_bandwidths(const Bandwidths& h) {
    for (double v : h) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InputError("bandwidths must be positive");
    }
}

double kernel(const FeatureVector& a, const FeatureVector& b, const Bandwidths& h) {
    validate_bandwidths(h);
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        const double t = (a[j] - b[j]) / (2.0 * h[j]);
        s += t * t;
    }
    return std::exp(-s);
}

namespace {

double kernel_unchecked(const FeatureVector& a, const FeatureVector& b, const Bandwidths& h) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        const double t = (a[j] - b[j]) / (2.0 * h[j]);
        s += t * t;
    }
    return std::exp(-s);
}

Eigen::MatrixXd kernel_matrix(const std::vector<FeatureVector>& f, const Bandwidths& h) {
    const auto n = static_cast<Eigen::Index>(f.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            K(i, j) = K(j, i) = kernel_unchecked(f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(j)], h);
        }
    }
    return K;
}

void check_chain(const std::vector<OptionQuote>& chain) {
    if (chain.empty()) throw InputError("option chain is empty");
    for (std::size_t i = 0; i < chain.size(); ++i) {
        try {
            validate_quote(chain[i]);
        } catch (const InputError& e) {
            throw InputError("quote " + std::to_string(i) + ": " + e.what());
        }
    }
}

KernelModel base_model(const std::vector<OptionQuote>& chain, const Bandwidths& h) {
    check_chain(chain);
    validate_bandwidths(h);
    KernelModel m;
    m.h = h;
    for (const auto& q : chain) {
        m.train_features.push_back(featurize(q));
        m.train_iv.push_back(q.iv);
        m.vegas.push_back(q.vega);
    }
    return m;
}

Eigen::VectorXd ridge_projection(const Eigen::MatrixXd& K, const Eigen::VectorXd& target) {
    const double rho = 1e-6 * K.trace() / static_cast<double>(K.rows());
    Eigen::MatrixXd A = K.transpose() * K;
    A.diagonal().array() += rho;
    return A.ldlt().solve(K.transpose() * target);
}

}  // namespace

double KernelModel::predict(const FeatureVector& x) const {
    if (kind == SurfaceModelKind::kernel_expansion) {
        double s = 0.0;
        for (std::size_t i = 0; i < train_features.size(); ++i) s += theta[i] * kernel_unchecked(x, train_features[i], h);
        return s;
    }
    const auto& values = kind == SurfaceModelKind::nadaraya_watson ? train_iv : theta;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < train_features.size(); ++i) {
        const double w = kernel_unchecked(x, train_features[i], h) * (unweighted_fallback ? 1.0 : vegas[i]);
        num += w * values[i];
        den += w;
    }
    if (den > 0.0) return num / den;
    // Every kernel weight underflowed: fall back to the global weighted average.
    for (std::size_t i = 0; i < train_features.size(); ++i) {
        const double w = unweighted_fallback ? 1.0 : vegas[i];
        num += w * values[i];
        den += w;
    }
    return num / den;
}

KernelModel fit_ks(const std::vector<OptionQuote>& chain, const Bandwidths& h) {
    auto m = base_model(chain, h);
    m.kind = SurfaceModelKind::nadaraya_watson;
    m.unweighted_fallback = std::all_of(m.vegas.begin(), m.vegas.end(), [](double v) { return v == 0.0; });
    return m;
}

KernelModel fit_ks_coefficients(const std::vector<OptionQuote>& chain, const Bandwidths& h) {
    auto m = base_model(chain, h);
    m.kind = SurfaceModelKind::kernel_expansion;
    const Eigen::MatrixXd K = kernel_matrix(m.train_features, h);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(m.train_iv.data(), static_cast<Eigen::Index>(m.train_iv.size()));
    const Eigen::VectorXd th = ridge_projection(K, y);
    m.theta.assign(th.data(), th.data() + th.size());
    return m;
}

double quantile_linear(std::vector<double> v, double p) {
    if (v.empty()) throw InputError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

TukeyFence tukey_fence(const std::vector<double>& values) {
    TukeyFence f;
    f.q25 = quantile_linear(values, 0.25);
    f.q75 = quantile_linear(values, 0.75);
    const double iqr = f.q75 - f.q25;
    f.lo = f.q25 - 1.5 * iqr;
    f.hi = f.q75 + 1.5 * iqr;
    return f;
}

KernelModel fit_2sks(const std::vector<OptionQuote>& chain, const Bandwidths& h) {
    check_chain(chain);
    if (chain.size() < 4) {
        auto m = fit_ks(chain, h);
        m.filter_passthrough = true;
        return m;
    }
    std::vector<double> ivs(chain.size());
    for (std::size_t i = 0; i < chain.size(); ++i) ivs[i] = chain[i].iv;
    const auto fence = tukey_fence(ivs);
    std::vector<OptionQuote> kept;
    for (const auto& q : chain) {
        if (q.iv >= fence.lo && q.iv <= fence.hi) kept.push_back(q);
    }
    if (kept.empty()) throw DomainError("the quantile filter removed every quote");
    auto m = fit_ks(kept, h);
    m.n_filtered = chain.size() - kept.size();
    return m;
}

FitConfig robust_defaults() {
    FitConfig c;
    c.step_size = 1e-1;
    c.max_iters = 2000;
    c.tol = 1e-5;
    c.stop_rule = StopRule::relative;
    c.n_restarts = 1;
    c.init = InitKind::custom;
    c.fit_intercept = false;
    return c;
}

BudgetRule adaptive_budget_rule(double r) {
    return [r](double loss, std::span<const double> theta) {
        const double nrm = norm(theta);
        return nrm > 0.0 ? loss / (2.0 * pow_r(nrm, r)) : 0.0;
    };
}

KernelModel fit_robust(const std::vector<OptionQuote>& chain, const Bandwidths& h, const CostSpec& spec,
                       const Budget& delta, const FitConfig& cfg, KernelBasis basis) {
    auto m = base_model(chain, h);
    const std::size_t n = chain.size();
    const auto N = static_cast<Eigen::Index>(n);

    const double vega_total = std::accumulate(m.vegas.begin(), m.vegas.end(), 0.0);
    m.unweighted_fallback = !(vega_total > 0.0);

    Eigen::MatrixXd B = kernel_matrix(m.train_features, h);
    std::vector<double> theta0 = cfg.theta0;
    const bool given = cfg.init == InitKind::custom && !theta0.empty();
    if (basis == KernelBasis::smoother) {
        m.kind = SurfaceModelKind::smoother_expansion;
        for (Eigen::Index j = 0; j < N; ++j) {
            if (!m.unweighted_fallback) B.col(j) *= m.vegas[static_cast<std::size_t>(j)];
        }
        for (Eigen::Index i = 0; i < N; ++i) {
            const double row = B.row(i).sum();
            // A quote with zero vega still sees itself through K(x, x) = 1.
            if (row > 0.0) B.row(i) /= row;
            else B(i, i) = 1.0;
        }
        if (!given) theta0 = m.train_iv;
    } else {
        m.kind = SurfaceModelKind::kernel_expansion;
        if (!given) {
            const auto ks = fit_ks(chain, h);
            Eigen::VectorXd target(N);
            for (std::size_t i = 0; i < n; ++i) target(static_cast<Eigen::Index>(i)) = ks.predict(m.train_features[i]);
            const Eigen::VectorXd th = ridge_projection(B, target);
            theta0.assign(th.data(), th.data() + th.size());
        }
    }
    if (theta0.size() != n) throw InputError("fit_robust: initial coefficients have the wrong length");

    Dataset data(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = data[i].point;
        p.resize(n + 1);
        for (std::size_t j = 0; j < n; ++j) p[j] = B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        p[n] = m.train_iv[i];
        data[i].weight = m.unweighted_fallback ? 1.0 / static_cast<double>(n) : m.vegas[i] / vega_total;
    }

    FitConfig run = cfg;
    run.n_restarts = 1;
    run.init = InitKind::custom;
    run.theta0 = theta0;
    run.fit_intercept = false;

    const LadLoss model(std::move(data));
    const auto res = fit_generic(model, spec, delta, run, ModelParams(theta0));
    m.theta = res.theta_hat.theta;
    m.detected_outlier_indices = res.detected_outlier_indices;
    m.pct_rectified = res.pct_rectified;
    m.final_objective = res.final_objective;
    m.iterations = res.iterations;
    return m;
}

SurfaceCvFit fit_robust_cv(const std::vector<OptionQuote>& chain, const Bandwidths& h, const CostSpec& spec,
                           CvPlan plan, const FitConfig& cfg, KernelBasis basis) {
    check_chain(chain);
    if (plan.grid.empty()) plan.grid = CvPlan::default_grid();
    auto cell = [&](std::span<const std::size_t> train, std::span<const std::size_t> test, double delta) {
        std::vector<OptionQuote> tr, te;
        for (auto i : train) tr.push_back(chain[i]);
        for (auto i : test) te.push_back(chain[i]);
        return mape(fit_robust(tr, h, spec, Budget(delta), cfg, basis), te);
    };
    SurfaceCvFit out;
    out.cv = cross_validate_delta(chain.size(), cell, plan);
    out.model = fit_robust(chain, h, spec, Budget(out.cv.delta_star), cfg, basis);
    return out;
}

double mape(const KernelModel& model, const std::vector<OptionQuote>& test) {
    std::vector<double> ref(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) ref[i] = test[i].iv;
    return mape(model, test, ref);
}

double mape(const KernelModel& model, const std::vector<OptionQuote>& test, const std::vector<double>& reference) {
    if (test.empty()) throw InputError("MAPE of an empty test set");
    if (reference.size() != test.size()) throw InputError("MAPE reference has the wrong length");
    double s = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        s += std::abs(model.predict(test[i]) - reference[i]) / (std::abs(reference[i]) + kMapeOffset);
    }
    return s / static_cast<double>(test.size());
}

SurfaceGrid SurfaceGrid::standard() {
    SurfaceGrid g;
    g.taus = {10, 30, 60, 91, 122, 152, 182, 273, 365, 547, 730};
    for (int m = 0; m <= 40; ++m) {
        if (m == 20) continue;
        g.deltas.push_back(-1.0 + 0.05 * m);
    }
    return g;
}

FeatureVector SurfaceGrid::feature(std::size_t i, std::size_t j) const {
    const double d = deltas.at(j);
    return {std::log(taus.at(i)), delta_moneyness(d), d > 0.0 ? 1.0 : 0.0};
}

std::vector<double> SurfaceGrid::evaluate(const KernelModel& model) const {
    std::vector<double> out;
    out.reserve(taus.size() * deltas.size());
    for (std::size_t i = 0; i < taus.size(); ++i) {
        for (std::size_t j = 0; j < deltas.size(); ++j) out.push_back(model.predict(feature(i, j)));
    }
    return out;
}

double surface_gradient(const std::vector<double>& values, std::size_t n_tau, std::size_t n_delta) {
    if (values.size() != n_tau * n_delta) throw InputError("surface values do not match the grid shape");
    auto at = [&](std::size_t i, std::size_t j) { return values[i * n_delta + j]; };
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < n_tau; ++i) {
        for (std::size_t j = 0; j + 1 < n_delta; ++j) {
            const double dt = at(i + 1, j) - at(i, j);
            const double dd = at(i, j + 1) - at(i, j);
            s += 0.5 * (dt * dt + dd * dd);
        }
    }
    return s;
}

double surface_gradient(const KernelModel& model, const SurfaceGrid& grid) {
    return surface_gradient(grid.evaluate(model), grid.taus.size(), grid.deltas.size());
}

double synthetic_true_iv(double tau_days, double delta_bs, bool /*is_call*/) {
    // u is the call-equivalent delta, so calls and puts at one strike agree.
    const double u = delta_moneyness(delta_bs);
    const double t = tau_days / 365.0;
    const double level = 0.18 + 0.05 * std::exp(-t / 0.5);
    const double skew = 0.10 / std::sqrt(1.0 + 2.0 * t);
    const double smile = 0.15 / (1.0 + t);
    const double x = u - 0.5;
    return level + skew * x + smile * x * x;
}

SyntheticChain generate_chain(std::uint64_t seed, std::size_t n_quotes, double outlier_frac, double outlier_scale) {
    if (!(outlier_frac >= 0.0 && outlier_frac < 1.0)) throw InputError("outlier_frac must lie in [0, 1)");
    if (!(outlier_scale > 0.0)) throw InputError("outlier_scale must be positive");
    auto rng = make_stream(seed, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const boost::math::normal_distribution<double> std_normal;

    SyntheticChain out;
    const double log_lo = std::log(7.0), log_hi = std::log(730.0);
    for (std::size_t i = 0; i < n_quotes; ++i) {
        OptionQuote q;
        q.tau_days = std::exp(log_lo + (log_hi - log_lo) * unif(rng));
        q.is_call = unif(rng) < 0.5;
        const double mag = 0.02 + 0.96 * unif(rng);
        q.delta_bs = q.is_call ? mag : -mag;
        const double truth = synthetic_true_iv(q.tau_days, q.delta_bs, q.is_call);
        q.iv = truth * (1.0 + 0.01 * normal(rng));
        const double d1 = boost::math::quantile(std_normal, delta_moneyness(q.delta_bs));
        q.vega = boost::math::pdf(std_normal, d1) * std::sqrt(q.tau_days / 365.0);
        out.quotes.push_back(q);
        out.true_iv.push_back(truth);
    }

    const auto n_out = static_cast<std::size_t>(std::llround(outlier_frac * static_cast<double>(n_quotes)));
    std::vector<std::size_t> idx(n_quotes);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto pick = make_stream(seed, 1);
    std::shuffle(idx.begin(), idx.end(), pick);
    out.outlier_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_out));
    std::sort(out.outlier_indices.begin(), out.outlier_indices.end());
    for (std::size_t i : out.outlier_indices) out.quotes[i].iv *= outlier_scale;
    return out;
}

namespace {

double parse_number(const std::string& field, std::size_t row, const char* name) {
    if (field.empty()) throw ParseError(row, std::string("empty ") + name);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size() || errno == ERANGE || !std::isfinite(v)) {
        throw ParseError(row, std::string("cannot parse ") + name + " '" + field + "'");
    }
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::vector<OptionQuote> read_chain_csv(std::istream& is) {
    std::string line;
    std::size_t row = 1;
    if (!std::getline(is, line)) throw ParseError(1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line != "tau_days,delta,is_call,iv,vega") {
        throw ParseError(1, "expected header 'tau_days,delta,is_call,iv,vega', got '" + line + "'");
    }
    std::vector<OptionQuote> out;
    while (std::getline(is, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw ParseError(row, "expected 5 fields, found " + std::to_string(f.size()));
        OptionQuote q;
        q.tau_days = parse_number(f[0], row, "tau_days");
        q.delta_bs = parse_number(f[1], row, "delta");
        if (f[2] == "1") q.is_call = true;
        else if (f[2] == "0") q.is_call = false;
        else throw ParseError(row, "is_call must be 0 or 1, got '" + f[2] + "'");
        q.iv = parse_number(f[3], row, "iv");
        q.vega = parse_number(f[4], row, "vega");
        try {
            validate_quote(q);
        } catch (const InputError& e) {
            throw ParseError(row, e.what());
        }
        out.push_back(q);
    }
    if (out.empty()) throw ParseError(row, "no quotes");
    return out;
}

std::vector<OptionQuote> read_chain_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return read_chain_csv(in);
}

void write_chain_csv(std::ostream& os, const std::vector<OptionQuote>& chain) {
    os << "tau_days,delta,is_call,iv,vega\n" << std::setprecision(12);
    for (const auto& q : chain) {
        os << q.tau_days << ',' << q.delta_bs << ',' << (q.is_call ? 1 : 0) << ',' << q.iv << ',' << q.vega << '\n';
    }
}

}  // namespace otrect
