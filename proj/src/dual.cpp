#include "otrect/dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace otrect {

SortedLossProfile build_profile(std::span<const double> residuals, std::span<const double> weights, double r) {
    if (residuals.size() != weights.size()) {
        throw InputError("build_profile: residuals and weights differ in length");
    }
    if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("build_profile: r must be positive");
    const std::size_t n = residuals.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!(residuals[i] >= 0.0) || !std::isfinite(residuals[i])) {
            throw InputError("build_profile: residual " + std::to_string(i) + " is negative or not finite");
        }
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
            throw InputError("build_profile: weight " + std::to_string(i) + " is negative or not finite");
        }
    }

    SortedLossProfile p;
    p.r = r;
    p.perm.resize(n);
    std::iota(p.perm.begin(), p.perm.end(), std::size_t{0});
    std::stable_sort(p.perm.begin(), p.perm.end(),
                     [&](std::size_t a, std::size_t b) { return residuals[a] < residuals[b]; });

    p.values.resize(n);
    p.weights.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        p.values[k] = residuals[p.perm[k]];
        p.weights[k] = weights[p.perm[k]];
    }
    p.pow_suffix.assign(n + 1, 0.0);
    for (std::size_t k = n; k-- > 0;) {
        p.pow_suffix[k] = p.pow_suffix[k + 1] + p.weights[k] * pow_r(p.values[k], r);
    }
    return p;
}

namespace {

double weighted_sum(const SortedLossProfile& p, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += p.weights[i] * p.values[i];
    return s;
}

DualSolution no_budget_solution(const SortedLossProfile& p) {
    DualSolution s;
    s.kind = DualCase::no_budget;
    s.objective = weighted_sum(p, 0, p.size());
    // Any lambda >= x_n^{1-r} attains the maximum; report the smallest.
    s.lambda_star = p.size() == 0 || p.values.back() == 0.0 ? 0.0 : std::pow(p.values.back(), 1.0 - p.r);
    s.eta = 1.0;
    s.active_begin = 0;
    s.active_end = p.size();
    return s;
}

DualSolution trivial_solution(double delta_eff) {
    DualSolution s;
    s.kind = DualCase::trivial;
    s.objective = 0.0;
    s.lambda_star = 0.0;
    s.eta = 0.0;
    s.delta_effective = delta_eff;
    return s;
}

DualSolution solve_knot(const SortedLossProfile& p, double delta) {
    const std::size_t n = p.size();
    // Largest k with S_k >= delta. S_0 > delta here, so the scan terminates,
    // and the atom found always has positive residual and weight: otherwise
    // S_{k+1} = S_k >= delta would contradict maximality.
    std::size_t k = n - 1;
    while (p.pow_suffix[k] < delta) --k;

    DualSolution s;
    s.kind = DualCase::knot;
    s.delta_effective = delta;
    s.knot = k;
    const double xk = p.values[k];
    s.lambda_star = std::pow(xk, 1.0 - p.r);
    const double mu = (delta - p.pow_suffix[k + 1]) / (p.weights[k] * pow_r(xk, p.r));
    s.eta = std::clamp(1.0 - mu, 0.0, 1.0);
    s.objective = std::max(weighted_sum(p, 0, k) + s.eta * p.weights[k] * xk, 0.0);
    s.active_begin = 0;
    s.active_end = k + 1;
    return s;
}

DualSolution solve_water_filling(const SortedLossProfile& p, double delta) {
    // Every residual shrinks by min(x_i, t) with sum_i a_i min(x_i, t)^r = delta.
    const std::size_t n = p.size();
    const double r = p.r;
    double below_pow = 0.0;  // sum_{i<j} a_i x_i^r
    double tail_weight = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
    std::size_t j = 0;
    for (; j < n; ++j) {
        if (below_pow + tail_weight * pow_r(p.values[j], r) >= delta) break;
        below_pow += p.weights[j] * pow_r(p.values[j], r);
        tail_weight -= p.weights[j];
    }
    // j < n because total_pow > delta.
    const double t = std::pow(std::max(delta - below_pow, 0.0) / tail_weight, 1.0 / r);

    DualSolution s;
    s.kind = DualCase::water_filling;
    s.delta_effective = delta;
    s.water_level = t;
    s.eta = 1.0;
    double obj = 0.0;
    std::size_t first_active = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (p.values[i] > t) {
            obj += p.weights[i] * (p.values[i] - t);
            if (first_active == n) first_active = i;
        }
    }
    s.objective = obj;
    s.lambda_star = t > 0.0 ? 1.0 / (r * std::pow(t, r - 1.0)) : 0.0;
    s.active_begin = first_active;
    s.active_end = n;
    return s;
}

}  // namespace

DualSolution solve_dual(const SortedLossProfile& profile, double delta_eff) {
    if (!(delta_eff >= 0.0) || !std::isfinite(delta_eff)) {
        throw InputError("solve_dual: effective budget must be finite and nonnegative");
    }
    if (delta_eff == 0.0 || profile.size() == 0) {
        auto s = no_budget_solution(profile);
        s.delta_effective = delta_eff;
        return s;
    }
    if (profile.total_pow() <= delta_eff) return trivial_solution(delta_eff);
    if (profile.r <= 1.0) return solve_knot(profile, delta_eff);
    return solve_water_filling(profile, delta_eff);
}

DualSolution enumerate_knots_oracle(const SortedLossProfile& profile, double delta_eff) {
    const double r = profile.r;
    if (r > 1.0) throw DomainError("enumerate_knots_oracle covers r <= 1 only");
    const auto& x = profile.values;
    const auto& a = profile.weights;
    const std::size_t n = x.size();

    auto dual_value = [&](double lambda) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += a[i] * std::min(x[i], lambda * std::pow(x[i], r));
        return v - lambda * delta_eff;
    };

    // Candidates: 0 and every positive knot, in increasing order.
    std::vector<double> candidates{0.0};
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > 0.0) candidates.push_back(std::pow(x[i], 1.0 - r));
    }
    double best_lambda = 0.0;
    double best_value = dual_value(0.0);
    for (double lam : candidates) {
        const double v = dual_value(lam);
        // Strict improvement beyond rounding keeps the smallest maximizer.
        if (v > best_value + 1e-12 * std::max(1.0, std::abs(best_value))) {
            best_value = v;
            best_lambda = lam;
        }
    }

    DualSolution s;
    s.delta_effective = delta_eff;
    s.lambda_star = best_lambda;
    s.objective = std::max(best_value, 0.0);
    if (delta_eff == 0.0 || n == 0) {
        s.kind = DualCase::no_budget;
        s.eta = 1.0;
        s.active_end = n;
        return s;
    }
    if (best_lambda == 0.0) {
        s.kind = DualCase::trivial;
        s.eta = 0.0;
        s.objective = 0.0;
        return s;
    }
    // Recover the knot: among atoms sitting on lambda*, the last one whose
    // tail of weighted powers still covers the budget.
    s.kind = DualCase::knot;
    std::size_t k = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] <= 0.0) continue;
        if (std::abs(std::pow(x[i], 1.0 - r) - best_lambda) > 1e-12 * best_lambda) continue;
        double tail = 0.0;
        for (std::size_t j = i; j < n; ++j) tail += a[j] * std::pow(x[j], r);
        if (tail >= delta_eff) k = i;
    }
    if (k == n) throw std::logic_error("enumerate_knots_oracle: no knot atom covers the budget");
    double beyond = 0.0;
    for (std::size_t j = k + 1; j < n; ++j) beyond += a[j] * std::pow(x[j], r);
    s.knot = k;
    s.eta = 1.0 - (delta_eff - beyond) / (a[k] * std::pow(x[k], r));
    s.active_begin = 0;
    s.active_end = k + 1;
    return s;
}

InnerSolution solve_inner(std::span<const double> residuals, std::span<const double> weights, double r,
                          double delta_eff) {
    InnerSolution out{build_profile(residuals, weights, r), {}};
    out.dual = solve_dual(out.profile, delta_eff);
    return out;
}

namespace {

std::vector<double> sample_weights(std::span<const Sample> data) {
    std::vector<double> w(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) w[i] = data[i].weight;
    return w;
}

}  // namespace

double effective_budget(std::span<const Sample> data, const ModelParams& theta, Task task, const CostSpec& spec,
                        const Budget& delta) {
    if (task == Task::mean || data.empty()) return delta.value();
    return delta.value() * pow_r(augmented_slope_norm(theta.theta, data.front().point.size()), spec.r());
}

namespace {

InnerSolution solve_task(std::span<const Sample> data, const ModelParams& theta, Task task, const CostSpec& spec,
                         const Budget& delta) {
    const auto res = absolute_residuals(data, theta, task);
    const auto w = sample_weights(data);
    return solve_inner(res, w, spec.r(), effective_budget(data, theta, task, spec, delta));
}

}  // namespace

DualSolution mean_objective(std::span<const Sample> data, const ModelParams& theta, const CostSpec& spec,
                            const Budget& delta) {
    return solve_task(data, theta, Task::mean, spec, delta).dual;
}

DualSolution lad_objective(std::span<const Sample> data, const ModelParams& theta, const CostSpec& spec,
                           const Budget& delta) {
    return solve_task(data, theta, Task::regression, spec, delta).dual;
}

double RectifiedDistribution::total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.mass;
    return s;
}

double RectifiedDistribution::moved_mass() const {
    double s = 0.0;
    for (const auto& a : atoms) {
        if (a.moved) s += a.mass;
    }
    return s;
}

double RectifiedDistribution::transport_cost(const CostSpec& spec) const {
    double s = 0.0;
    for (const auto& a : atoms) {
        if (a.moved) s += a.mass * otrect::transport_cost(a.origin, a.point, spec);
    }
    return s;
}

std::vector<std::size_t> RectifiedDistribution::fully_moved_sources() const {
    // A source is fully moved when none of its atoms stayed put.
    std::vector<std::size_t> moved, kept;
    for (const auto& a : atoms) (a.moved ? moved : kept).push_back(a.source);
    std::sort(moved.begin(), moved.end());
    moved.erase(std::unique(moved.begin(), moved.end()), moved.end());
    std::sort(kept.begin(), kept.end());
    std::vector<std::size_t> out;
    std::set_difference(moved.begin(), moved.end(), kept.begin(), kept.end(), std::back_inserter(out));
    return out;
}

RectifiedDistribution build_rectified(std::span<const Sample> data, const InnerSolution& inner,
                                      const PointMover& mover) {
    const auto& p = inner.profile;
    const auto& d = inner.dual;
    const std::size_t n = p.size();
    if (n != data.size()) throw InputError("build_rectified: profile does not match data");

    std::vector<std::size_t> rank(n);
    for (std::size_t k = 0; k < n; ++k) rank[p.perm[k]] = k;

    RectifiedDistribution out;
    out.atoms.reserve(n + 1);
    auto keep = [&](std::size_t i, double mass) {
        out.atoms.push_back({data[i].point, mass, i, data[i].point, false});
    };
    auto move = [&](std::size_t i, double mass, double reduction) {
        out.atoms.push_back({mover(data[i], reduction), mass, i, data[i].point, true});
    };

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rank[i];
        const double x = p.values[k];
        const double w = data[i].weight;
        switch (d.kind) {
            case DualCase::no_budget:
                keep(i, w);
                break;
            case DualCase::trivial:
                if (x > 0.0) move(i, w, x);
                else keep(i, w);
                break;
            case DualCase::knot:
                if (k < *d.knot) {
                    keep(i, w);
                } else if (k == *d.knot) {
                    if (d.eta > 0.0) keep(i, d.eta * w);
                    if (d.eta < 1.0) move(i, (1.0 - d.eta) * w, x);
                } else {
                    move(i, w, x);
                }
                break;
            case DualCase::water_filling:
                if (x > 0.0) move(i, w, std::min(x, d.water_level));
                else keep(i, w);
                break;
        }
    }
    return out;
}

PointMover mean_mover(const ModelParams& theta) {
    return [t = theta.theta](const Sample& s, double reduction) {
        const auto& z = s.point;
        double dist = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) dist += (t[j] - z[j]) * (t[j] - z[j]);
        dist = std::sqrt(dist);
        if (dist == 0.0 || reduction >= dist) return t;
        std::vector<double> out(z.size());
        const double f = reduction / dist;
        for (std::size_t j = 0; j < z.size(); ++j) out[j] = z[j] + f * (t[j] - z[j]);
        return out;
    };
}

PointMover regression_mover(const ModelParams& theta) {
    return [t = theta.theta](const Sample& s, double reduction) {
        const auto& z = s.point;
        const std::size_t d = z.size() - 1;
        const double signed_res = regression_prediction(z, t) - z[d];
        double nn = 1.0;  // ||(w, -1)||^2
        for (std::size_t j = 0; j < d; ++j) nn += t[j] * t[j];
        // Full moves land exactly on the hyperplane.
        const double c = reduction >= std::abs(signed_res) ? signed_res / nn
                                                           : std::copysign(reduction, signed_res) / nn;
        std::vector<double> out(z);
        for (std::size_t j = 0; j < d; ++j) out[j] -= c * t[j];
        out[d] += c;
        return out;
    };
}

RectifiedDistribution rectified_distribution(std::span<const Sample> data, const ModelParams& theta, Task task,
                                             const CostSpec& spec, const Budget& delta) {
    const auto inner = solve_task(data, theta, task, spec, delta);
    return build_rectified(data, inner, task == Task::mean ? mean_mover(theta) : regression_mover(theta));
}

SquaredLossRectification squared_loss_rectify(double ztilde_dot, double theta_norm, double lambda) {
    if (!(theta_norm > 0.0) || !std::isfinite(theta_norm)) {
        throw InputError("squared_loss_rectify: theta norm must be positive");
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw InputError("squared_loss_rectify: lambda must be positive");
    }
    const double c = std::abs(ztilde_dot);
    const double m = theta_norm;
    auto K = [&](double d) { return (c - m * d) * (c - m * d) + lambda * std::sqrt(d); };
    // g(beta) = m^2 beta^3 + lambda/4 - c m beta; K'(beta^2) has the sign of g(beta).
    auto g = [&](double beta) { return m * m * beta * beta * beta + 0.25 * lambda - c * m * beta; };

    SquaredLossRectification out;
    out.objective = K(0.0);
    const double beta_star = std::sqrt(c / (3.0 * m));
    if (g(beta_star) >= 0.0) {
        out.regime = SquaredLossRegime::no_move;
        return out;
    }

    double lo = beta_star;
    double hi = c / m + 1.0;
    for (int it = 0; it < 500; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (std::abs(gm) <= 1e-12 || hi - lo <= std::numeric_limits<double>::epsilon() * hi) {
            lo = hi = mid;
            break;
        }
        (gm < 0.0 ? lo : hi) = mid;
    }
    const double beta_plus = 0.5 * (lo + hi);
    out.beta_plus = beta_plus;
    const double d_plus = std::min(beta_plus * beta_plus, c / m);
    const double k_plus = K(d_plus);
    // The stationary point only wins if it beats staying put.
    if (k_plus < out.objective) {
        out.regime = SquaredLossRegime::long_haul;
        out.displacement = d_plus;
        out.objective = k_plus;
    }
    return out;
}

}  // namespace otrect
