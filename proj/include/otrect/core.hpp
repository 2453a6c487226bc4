#pragma once

// Domain types shared by every module: the transport cost, the transport
// budget, weighted samples, model parameters and the per-sample residuals
// that the inner rectification problem is solved over.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace otrect {

inline constexpr const char* kVersion = "1.0.0";

/// Raised for malformed inputs (dimension mismatch, negative weights, ...).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a parameter lies outside the range where a closed form holds.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Only the Euclidean ground norm is supported. It is self-dual.
enum class Norm { euclidean };

/// Ground norm of a vector.
double norm(std::span<const double> v, Norm which = Norm::euclidean);

/// Dual norm of a vector. For the Euclidean norm this is the norm itself;
/// every place that needs ||.||_* goes through here.
double dual_norm(std::span<const double> v, Norm which = Norm::euclidean);

/// Transport cost c(z, z') = ||z - z'||^r.
///
/// 0 < r < 1 is the concave regime the rectification theory covers. r >= 1
/// is accepted only when `convex_comparison` is set; it exists so that the
/// convex contrast studies run through the same code path.
class CostSpec {
public:
    explicit CostSpec(double r = 0.5, bool convex_comparison = false);

    double r() const noexcept { return r_; }
    bool is_concave() const noexcept { return r_ < 1.0; }
    bool convex_comparison() const noexcept { return convex_comparison_; }
    Norm norm() const noexcept { return Norm::euclidean; }

private:
    double r_;
    bool convex_comparison_;
};

/// Transport budget delta >= 0.
class Budget {
public:
    explicit Budget(double delta = 0.0);
    double value() const noexcept { return delta_; }

private:
    double delta_;
};

/// A point with its probability mass. For regression the point is laid out
/// as (x_1, ..., x_d, y).
struct Sample {
    std::vector<double> point;
    double weight = 0.0;
};

using Dataset = std::vector<Sample>;

/// Builds a dataset with uniform weights 1/n.
Dataset uniform_dataset(const std::vector<std::vector<double>>& points);

/// Builds a 1-D dataset with uniform weights.
Dataset uniform_dataset_1d(std::span<const double> values);

/// Throws InputError unless weights are nonnegative and sum to 1 (1e-9).
void validate_weights(std::span<const Sample> data);

/// Model parameters. Mean estimation: theta in R^d. Regression on points
/// (x, y) with x in R^d: either d slopes, or d slopes followed by an
/// intercept (d + 1 entries).
struct ModelParams {
    std::vector<double> theta;

    ModelParams() = default;
    explicit ModelParams(std::vector<double> t);

    std::size_t size() const noexcept { return theta.size(); }
};

enum class Task { mean, regression };

/// Linear prediction theta^T x (+ intercept) for a regression point (x, y).
double regression_prediction(std::span<const double> point, std::span<const double> theta);

/// True when theta carries a trailing intercept for points of this size.
bool has_intercept(std::size_t point_size, std::size_t theta_size);

/// ||(w, -1)||_* where w are the slopes (the intercept is not a coordinate of
/// the data space and does not enter the norm).
double augmented_slope_norm(std::span<const double> theta, std::size_t point_size);

/// ||a - b||^r.
double transport_cost(std::span<const double> a, std::span<const double> b, const CostSpec& spec);

/// Per-sample loss magnitudes |theta - z_i| (mean) or |y_i - theta^T x_i|
/// (regression), in input order.
std::vector<double> absolute_residuals(std::span<const Sample> data, const ModelParams& theta, Task task);

/// min over x in [0, a/b] of a - b x + lambda x^r, which equals
/// min{a, lambda a^r / b^r} for 0 < r < 1.
double concave_scalar_min(double a, double b, double lambda, double r);

/// x^r with fast paths for r = 1/2 and r = 1.
inline double pow_r(double x, double r) {
    if (r == 0.5) return std::sqrt(x);
    if (r == 1.0) return x;
    return std::pow(x, r);
}

}  // namespace otrect
