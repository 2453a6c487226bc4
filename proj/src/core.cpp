#include "otrect/core.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace otrect {

double norm(std::span<const double> v, Norm /*which*/) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dual_norm(std::span<const double> v, Norm which) {
    // The Euclidean norm is self-dual.
    return norm(v, which);
}

CostSpec::CostSpec(double r, bool convex_comparison) : r_(r), convex_comparison_(convex_comparison) {
    if (!std::isfinite(r) || r <= 0.0) {
        throw DomainError("cost exponent r must be a finite positive number, got " + std::to_string(r));
    }
    if (r >= 1.0 && !convex_comparison) {
        throw DomainError("cost exponent r=" + std::to_string(r) +
                          " is outside the concave range (0,1); enable convex comparison to use it");
    }
}

Budget::Budget(double delta) : delta_(delta) {
    if (!std::isfinite(delta) || delta < 0.0) {
        throw InputError("transport budget must be finite and nonnegative, got " + std::to_string(delta));
    }
}

Dataset uniform_dataset(const std::vector<std::vector<double>>& points) {
    Dataset out;
    out.reserve(points.size());
    const double w = points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size());
    for (const auto& p : points) out.push_back(Sample{p, w});
    return out;
}

Dataset uniform_dataset_1d(std::span<const double> values) {
    Dataset out;
    out.reserve(values.size());
    const double w = values.empty() ? 0.0 : 1.0 / static_cast<double>(values.size());
    for (double v : values) out.push_back(Sample{{v}, w});
    return out;
}

void validate_weights(std::span<const Sample> data) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double w = data[i].weight;
        if (!std::isfinite(w) || w < 0.0) {
            throw InputError("sample " + std::to_string(i) + " has an invalid weight");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw InputError("sample weights sum to " + std::to_string(total) + ", expected 1");
    }
}

ModelParams::ModelParams(std::vector<double> t) : theta(std::move(t)) {
    for (double v : theta) {
        if (!std::isfinite(v)) throw InputError("model parameters must be finite");
    }
}

bool has_intercept(std::size_t point_size, std::size_t theta_size) {
    if (point_size < 2) throw InputError("regression points need at least one feature and a response");
    const std::size_t d = point_size - 1;
    if (theta_size == d) return false;
    if (theta_size == d + 1) return true;
    throw InputError("regression parameters have " + std::to_string(theta_size) + " entries for " +
                     std::to_string(d) + " features");
}

double regression_prediction(std::span<const double> point, std::span<const double> theta) {
    const bool icpt = has_intercept(point.size(), theta.size());
    const std::size_t d = point.size() - 1;
    double pred = icpt ? theta[d] : 0.0;
    for (std::size_t j = 0; j < d; ++j) pred += theta[j] * point[j];
    return pred;
}

double augmented_slope_norm(std::span<const double> theta, std::size_t point_size) {
    has_intercept(point_size, theta.size());
    std::vector<double> aug(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(point_size - 1));
    aug.push_back(-1.0);
    return dual_norm(aug);
}

double transport_cost(std::span<const double> a, std::span<const double> b, const CostSpec& spec) {
    if (a.size() != b.size()) {
        throw InputError("transport_cost: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    if (s == 0.0) return 0.0;
    return pow_r(std::sqrt(s), spec.r());
}

std::vector<double> absolute_residuals(std::span<const Sample> data, const ModelParams& theta, Task task) {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& p = data[i].point;
        if (task == Task::mean) {
            if (p.size() != theta.size()) {
                throw InputError("absolute_residuals: sample " + std::to_string(i) + " has dimension " +
                                 std::to_string(p.size()) + ", theta has " + std::to_string(theta.size()));
            }
            double s = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double d = theta.theta[j] - p[j];
                s += d * d;
            }
            out[i] = std::sqrt(s);
        } else {
            out[i] = std::abs(p.back() - regression_prediction(p, theta.theta));
        }
    }
    return out;
}

double concave_scalar_min(double a, double b, double lambda, double r) {
    if (!(r > 0.0 && r < 1.0)) {
        throw DomainError("concave_scalar_min requires 0 < r < 1, got r=" + std::to_string(r));
    }
    if (!(a > 0.0 && b > 0.0 && lambda > 0.0)) {
        throw InputError("concave_scalar_min requires a, b, lambda > 0");
    }
    // g(x) = a - b x + lambda x^r is concave on [0, a/b]; the minimum sits at
    // an endpoint: g(0) = a, g(a/b) = lambda (a/b)^r.
    return std::min(a, lambda * std::pow(a / b, r));
}

}  // namespace otrect
