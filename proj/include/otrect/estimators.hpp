#pragma once

// Outer minimization over theta by subgradient descent on the rectified
// objective, plus the classical estimators used as comparison baselines.

#include "otrect/core.hpp"
#include "otrect/dual.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace otrect {

/// Raised when a least-squares design matrix does not have full column rank.
class RankDeficiencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class InitKind { median, zero, gaussian, custom };

/// absolute: |f_t - f_{t-1}| < tol. relative: |f_t - f_{t-1}| / max(1, |f_{t-1}|) < tol.
enum class StopRule { absolute, relative };

/// Per-iteration budget override. Receives the weighted un-rectified loss
/// and the current theta and returns the budget delta to use.
using BudgetRule = std::function<double(double loss, std::span<const double> theta)>;

struct FitConfig {
    double step_size = 1e-2;
    int max_iters = 2000;
    double tol = 1e-6;
    StopRule stop_rule = StopRule::absolute;
    int n_restarts = 1;
    InitKind init = InitKind::median;
    std::vector<double> theta0;  ///< used when init == custom
    /// Mini-batch size; 0 means the full dataset.
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
    /// Regression only: append an intercept to the slopes.
    bool fit_intercept = true;
    /// Optional adaptive budget; when unset the fixed Budget is used.
    BudgetRule budget_rule;

    /// Throws InputError when a field is out of range for a dataset of size n.
    void validate(std::size_t n) const;

    /// lr 1e-2, 2000 iterations, tol 1e-6, median start.
    static FitConfig mean_defaults();
    /// lr 1e-2, 1000 iterations, tol 1e-6, 10 Gaussian restarts with zero bias.
    static FitConfig lad_defaults();
};

struct FitResult {
    ModelParams theta_hat;
    double final_objective = 0.0;
    std::vector<double> trace;
    RectifiedDistribution rectified;
    std::vector<std::size_t> detected_outlier_indices;
    /// Share of the probability mass that was moved, in [0, 1].
    double pct_rectified = 0.0;
    int iterations = 0;
    int best_restart = 0;
    /// Cost of moving every point onto the fit divided by the effective
    /// budget. At or below one the budget covers every residual and the
    /// objective is zero.
    double budget_ratio = 0.0;
};

/// A per-sample loss that is the magnitude of a residual, together with its
/// subgradient in theta and the geometry needed to build rectified points.
class LossModel {
public:
    virtual ~LossModel() = default;

    virtual const Dataset& samples() const = 0;
    std::size_t size() const { return samples().size(); }

    /// Residual magnitudes of the listed samples at theta (all nonnegative).
    virtual void residuals(std::span<const double> theta, std::span<const std::size_t> idx,
                           std::vector<double>& out) const = 0;

    /// grad += scale * (subgradient of sample i's loss at theta).
    virtual void add_subgradient(std::span<const double> theta, std::size_t i, double scale,
                                 std::vector<double>& grad) const = 0;

    /// Factor b with delta_eff = delta * b^r; 1 unless moving a point by one
    /// unit can change the residual by more than one unit.
    virtual double budget_norm(std::span<const double> theta) const;

    virtual PointMover mover(const ModelParams& theta) const = 0;
};

/// Loss ||theta - z||.
class MeanLoss final : public LossModel {
public:
    explicit MeanLoss(Dataset data);
    const Dataset& samples() const override { return data_; }
    void residuals(std::span<const double> theta, std::span<const std::size_t> idx,
                   std::vector<double>& out) const override;
    void add_subgradient(std::span<const double> theta, std::size_t i, double scale,
                         std::vector<double>& grad) const override;
    PointMover mover(const ModelParams& theta) const override;

private:
    Dataset data_;
};

/// Loss |y - w^T x - b| on points (x, y); theta = (w) or (w, b).
class LadLoss final : public LossModel {
public:
    explicit LadLoss(Dataset data);
    const Dataset& samples() const override { return data_; }
    void residuals(std::span<const double> theta, std::span<const std::size_t> idx,
                   std::vector<double>& out) const override;
    void add_subgradient(std::span<const double> theta, std::size_t i, double scale,
                         std::vector<double>& grad) const override;
    double budget_norm(std::span<const double> theta) const override;
    PointMover mover(const ModelParams& theta) const override;

private:
    Dataset data_;
};

/// Mini-batch loop: draw batch_size points without replacement, renormalize
/// their weights, solve the inner problem on the batch and step on the atoms
/// that keep loss. With batch_size 0 or n the whole dataset is used as is.
/// Starts from `theta_init`; restarts are handled by the callers.
FitResult fit_generic(const LossModel& model, const CostSpec& spec, const Budget& delta, const FitConfig& cfg,
                      const ModelParams& theta_init);

/// Rectified location estimate. Default start is the coordinatewise median.
FitResult fit_mean(std::span<const Sample> data, const CostSpec& spec, const Budget& delta,
                   const FitConfig& cfg = FitConfig::mean_defaults());

/// Rectified LAD regression with restarts; returns the restart with the
/// lowest final objective.
FitResult fit_lad(std::span<const Sample> data, const CostSpec& spec, const Budget& delta,
                  const FitConfig& cfg = FitConfig::lad_defaults());

/// Rectified objective value and inner solution at a fixed theta.
InnerSolution evaluate_objective(const LossModel& model, const CostSpec& spec, const Budget& delta,
                                 std::span<const double> theta);

enum class MeanBaseline { mean, median, trimmed_mean };
/// symmetric: trim/2 from each tail. upper / lower: trim from one tail.
/// each_tail: trim from both tails (2 * trim in total).
enum class TrimSide { symmetric, upper, lower, each_tail };

struct MeanBaselineOptions {
    double trim = 0.1;
    TrimSide side = TrimSide::symmetric;
};

ModelParams baselines_mean(std::span<const Sample> data, MeanBaseline method,
                           const MeanBaselineOptions& opts = {});

enum class RegressionBaseline { ols, lad, huber };

struct RegressionBaselineOptions {
    double huber_threshold = 1.5;
    double huber_rel_tol = 1e-8;
    int huber_max_iters = 500;
    /// The LAD baseline is the rectified loop with delta = 0: one restart from zero.
    FitConfig lad_config = [] {
        FitConfig c = FitConfig::lad_defaults();
        c.n_restarts = 1;
        c.init = InitKind::zero;
        return c;
    }();
};

/// Fits slopes plus intercept.
ModelParams baselines_regression(std::span<const Sample> data, RegressionBaseline method,
                                 const RegressionBaselineOptions& opts = {});

/// Coordinatewise median of the points (1-D: the sample median).
std::vector<double> coordinate_median(std::span<const Sample> data);

/// Unweighted mean absolute loss of theta on the samples.
double average_loss(std::span<const Sample> data, const ModelParams& theta, Task task);

}  // namespace otrect
