#pragma once

// Implied-volatility surfaces from option chains: the (log tau, delta
// moneyness, call flag) feature map, the Gaussian-type kernel, the
// Nadaraya-Watson benchmark with and without Tukey filtering, the rectified
// vega-weighted kernel LAD fit, and the error / roughness metrics.

#include "otrect/core.hpp"
#include "otrect/estimators.hpp"
#include "otrect/modelsel.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace otrect {

/// Strict CSV parse failure; `row` is the 1-based line number in the file.
class ParseError : public InputError {
public:
    ParseError(std::size_t row, const std::string& what);
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

struct OptionQuote {
    double tau_days = 0.0;
    double delta_bs = 0.0;
    bool is_call = true;
    double iv = 0.0;
    double vega = 0.0;
};

/// Throws InputError when a field is out of range.
void validate_quote(const OptionQuote& q);

using FeatureVector = std::array<double, 3>;
using Bandwidths = std::array<double, 3>;

inline constexpr Bandwidths kDefaultBandwidths{0.35, 0.10, 0.50};

/// x for x >= 0, 1 + x for x < 0: calls and puts of the same strike share a value.
double delta_moneyness(double delta);

FeatureVector featurize(const OptionQuote& q);

/// exp(-sum_j ((a_j - b_j) / (2 h_j))^2).
double kernel(const FeatureVector& a, const FeatureVector& b, const Bandwidths& h);

/// nadaraya_watson: vega-weighted local average of the training IVs.
/// smoother_expansion: the same local-average weights applied to theta.
/// kernel_expansion: theta^T k(x) with raw kernel values.
enum class SurfaceModelKind { nadaraya_watson, smoother_expansion, kernel_expansion };

/// Basis for the rectified fit. `smoother` uses the rows of the vega-weighted
/// local-average matrix, so the benchmark is exactly theta = training IVs.
/// `raw` uses kernel-matrix rows and starts from a ridge projection.
enum class KernelBasis { smoother, raw };

struct KernelModel {
    SurfaceModelKind kind = SurfaceModelKind::nadaraya_watson;
    Bandwidths h = kDefaultBandwidths;
    std::vector<FeatureVector> train_features;
    std::vector<double> train_iv;
    /// Expansion coefficients (both expansion kinds).
    std::vector<double> theta;
    std::vector<double> vegas;

    /// All vegas were zero and the local average ignored them.
    bool unweighted_fallback = false;
    /// Chain too short for the quantile filter; nothing was removed.
    bool filter_passthrough = false;
    std::size_t n_filtered = 0;

    // Rectified fit diagnostics.
    std::vector<std::size_t> detected_outlier_indices;
    double pct_rectified = 0.0;
    double final_objective = 0.0;
    int iterations = 0;

    double predict(const FeatureVector& x) const;
    double predict(const OptionQuote& q) const { return predict(featurize(q)); }
};

void validate_bandwidths(const Bandwidths& h);

/// Vega-weighted Nadaraya-Watson local average.
KernelModel fit_ks(const std::vector<OptionQuote>& chain, const Bandwidths& h = kDefaultBandwidths);

/// Coefficient form of the least-squares benchmark: ridge regression of the
/// IVs on the kernel rows with penalty rho = 1e-6 trace(K)/n.
KernelModel fit_ks_coefficients(const std::vector<OptionQuote>& chain, const Bandwidths& h = kDefaultBandwidths);

struct TukeyFence {
    double q25 = 0.0;
    double q75 = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Linear-interpolation quantile (the (n-1)p rule), input need not be sorted.
double quantile_linear(std::vector<double> v, double p);

/// [q25 - 1.5 IQR, q75 + 1.5 IQR].
TukeyFence tukey_fence(const std::vector<double>& values);

inline constexpr const char* kQuantileRule = "linear interpolation at (n-1)p (type 7)";

/// Drops quotes whose IV lies outside the Tukey fence, then fit_ks.
KernelModel fit_2sks(const std::vector<OptionQuote>& chain, const Bandwidths& h = kDefaultBandwidths);

/// lr 0.1, relative tol 1e-5, 2000 iterations, full batch, start from the
/// benchmark's coefficients.
FitConfig robust_defaults();

/// Budget rule delta_t = loss / (2 ||theta||^r).
BudgetRule adaptive_budget_rule(double r);

/// Rectified vega-weighted kernel LAD. Vegas are normalized to sum to one.
KernelModel fit_robust(const std::vector<OptionQuote>& chain, const Bandwidths& h, const CostSpec& spec,
                       const Budget& delta, const FitConfig& cfg = robust_defaults(),
                       KernelBasis basis = KernelBasis::smoother);

struct SurfaceCvFit {
    CvResult cv;
    KernelModel model;  ///< refit on the whole chain at delta_star
};

/// Picks delta by holdout MAPE over random splits of the chain, then refits.
/// An empty plan grid means CvPlan::default_grid().
SurfaceCvFit fit_robust_cv(const std::vector<OptionQuote>& chain, const Bandwidths& h, const CostSpec& spec,
                           CvPlan plan, const FitConfig& cfg = robust_defaults(),
                           KernelBasis basis = KernelBasis::smoother);

inline constexpr double kMapeOffset = 0.01;

/// (1/n) sum |prediction - y| / (|y| + 0.01) against the quotes' own IVs.
double mape(const KernelModel& model, const std::vector<OptionQuote>& test);

/// Same, against a separate list of reference IVs.
double mape(const KernelModel& model, const std::vector<OptionQuote>& test, const std::vector<double>& reference);

struct SurfaceGrid {
    std::vector<double> taus;
    std::vector<double> deltas;

    /// 11 maturities from 10 to 730 days and the 40 nonzero deltas -1.0 + 0.05 m.
    static SurfaceGrid standard();
    FeatureVector feature(std::size_t i, std::size_t j) const;
    /// Row-major, maturity-major values.
    std::vector<double> evaluate(const KernelModel& model) const;
};

/// Sum over grid cells of the averaged squared forward differences in both directions.
double surface_gradient(const KernelModel& model, const SurfaceGrid& grid = SurfaceGrid::standard());
double surface_gradient(const std::vector<double>& values, std::size_t n_tau, std::size_t n_delta);

/// Smooth reference surface used by the synthetic generator.
double synthetic_true_iv(double tau_days, double delta_bs, bool is_call);

struct SyntheticChain {
    std::vector<OptionQuote> quotes;
    std::vector<double> true_iv;
    std::vector<std::size_t> outlier_indices;
};

/// Quotes with tau in [7, 730] days, |delta| in [0.02, 0.98], IV from the
/// reference surface with 1% multiplicative noise, and vega shaped like the
/// Black-Scholes vega in delta terms. A random outlier_frac subset gets its
/// IV multiplied by outlier_scale.
SyntheticChain generate_chain(std::uint64_t seed, std::size_t n_quotes, double outlier_frac, double outlier_scale);

std::vector<OptionQuote> read_chain_csv(std::istream& is);
std::vector<OptionQuote> read_chain_csv(const std::string& path);
void write_chain_csv(std::ostream& os, const std::vector<OptionQuote>& chain);

}  // namespace otrect
