#pragma once

// Exact solvers for the inner problem
//
//     min_{Q : D_c(Q, P_n) <= delta} E_Q[loss]
//
// for absolute-value losses. After sorting residuals x_1 <= ... <= x_n with
// weights a_i, the dual
//
//     max_{lambda >= 0} sum_i a_i min{x_i, lambda x_i^r} - lambda delta
//
// is a concave piecewise-linear function of lambda whose maximum sits at a
// knot lambda = x_k^{1-r}. The optimal rectified distribution keeps atoms
// below the knot, splits the knot atom, and hauls everything above it to a
// zero-loss position.

#include "otrect/core.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace otrect {

/// Residual magnitudes sorted ascending together with their weights and the
/// suffix sums of weighted r-th powers.
struct SortedLossProfile {
    std::vector<double> values;
    std::vector<double> weights;
    /// pow_suffix[k] = sum_{i >= k} weights[i] * values[i]^r, with a trailing
    /// pow_suffix[n] = 0 so that the suffix past the last atom is addressable.
    std::vector<double> pow_suffix;
    /// perm[sorted position] = original sample index.
    std::vector<std::size_t> perm;
    double r = 0.5;

    std::size_t size() const noexcept { return values.size(); }
    double total_pow() const noexcept { return pow_suffix.empty() ? 0.0 : pow_suffix.front(); }
};

/// Stable ascending sort of residuals (ties keep input order) plus suffix sums.
SortedLossProfile build_profile(std::span<const double> residuals, std::span<const double> weights, double r);

enum class DualCase {
    no_budget,      ///< delta = 0: nothing moves
    trivial,        ///< budget covers every residual: everything moves, objective 0
    knot,           ///< concave regime with a split knot atom
    water_filling,  ///< convex comparison regime (r > 1): every residual shrinks by the same amount
};

struct DualSolution {
    DualCase kind = DualCase::no_budget;
    double lambda_star = 0.0;
    /// Sorted position of the knot atom (knot case only).
    std::optional<std::size_t> knot;
    /// Fraction of the knot atom's mass that stays in place.
    double eta = 1.0;
    double objective = 0.0;
    double delta_effective = 0.0;
    /// Common residual reduction in the water-filling case.
    double water_level = 0.0;
    /// Sorted range [active_begin, active_end) of atoms that keep (part of)
    /// their loss; the subgradient step runs over these.
    std::size_t active_begin = 0;
    std::size_t active_end = 0;
};

/// Solves the dual over a sorted profile. r <= 1 uses the knot search,
/// r > 1 the water-filling solution of the convex comparison regime.
DualSolution solve_dual(const SortedLossProfile& profile, double delta_eff);

/// Reference solver that evaluates the dual at lambda = 0 and at every knot
/// x_k^{1-r} and keeps the best one. Shares no code with solve_dual. r <= 1 only.
DualSolution enumerate_knots_oracle(const SortedLossProfile& profile, double delta_eff);

/// Profile plus dual solution for one parameter value.
struct InnerSolution {
    SortedLossProfile profile;
    DualSolution dual;
};

InnerSolution solve_inner(std::span<const double> residuals, std::span<const double> weights, double r,
                          double delta_eff);

/// Effective budget: delta for the mean task, delta * ||(w,-1)||^r for regression.
double effective_budget(std::span<const Sample> data, const ModelParams& theta, Task task, const CostSpec& spec,
                        const Budget& delta);

/// Inner minimum for mean estimation with loss ||theta - z||.
DualSolution mean_objective(std::span<const Sample> data, const ModelParams& theta, const CostSpec& spec,
                            const Budget& delta);

/// Inner minimum for LAD regression with loss |y - theta^T x|.
DualSolution lad_objective(std::span<const Sample> data, const ModelParams& theta, const CostSpec& spec,
                           const Budget& delta);

struct RectifiedAtom {
    std::vector<double> point;
    double mass = 0.0;
    std::size_t source = 0;
    std::vector<double> origin;
    bool moved = false;
};

/// Weighted point masses realizing the optimal inner distribution.
struct RectifiedDistribution {
    std::vector<RectifiedAtom> atoms;

    double total_mass() const;
    double moved_mass() const;
    /// sum mass * ||origin - point||^r.
    double transport_cost(const CostSpec& spec) const;
    /// Original indices whose whole mass was moved.
    std::vector<std::size_t> fully_moved_sources() const;
};

/// Moves a sample so that its residual drops by `reduction` (which may equal
/// the full residual) along the cheapest direction.
using PointMover = std::function<std::vector<double>(const Sample&, double reduction)>;

/// Assembles the rectified distribution from a solved inner problem.
RectifiedDistribution build_rectified(std::span<const Sample> data, const InnerSolution& inner,
                                      const PointMover& mover);

/// Mover for the mean task: slides z toward theta.
PointMover mean_mover(const ModelParams& theta);

/// Mover for regression: slides (x, y) along the normal (w, -1) of the fitted
/// hyperplane, which is the minimal Euclidean displacement for a given
/// residual change.
PointMover regression_mover(const ModelParams& theta);

RectifiedDistribution rectified_distribution(std::span<const Sample> data, const ModelParams& theta, Task task,
                                             const CostSpec& spec, const Budget& delta);

enum class SquaredLossRegime { no_move, long_haul };

struct SquaredLossRectification {
    double displacement = 0.0;
    /// Square root of the interior stationary displacement, when one exists.
    /// It is reported even if staying put turns out cheaper.
    std::optional<double> beta_plus;
    /// long_haul exactly when the displacement is positive.
    SquaredLossRegime regime = SquaredLossRegime::no_move;
    /// K(displacement) = (|t| - m d)^2 + lambda d^{1/2}.
    double objective = 0.0;
};

/// Single-point rectification for squared loss with cost ||.||^{1/2}:
/// minimizes K(d) = (|t| - m d)^2 + lambda sqrt(d) over d in [0, |t|/m],
/// where t = theta_tilde^T z and m = ||theta_tilde||_*.
SquaredLossRectification squared_loss_rectify(double ztilde_dot, double theta_norm, double lambda);

}  // namespace otrect
