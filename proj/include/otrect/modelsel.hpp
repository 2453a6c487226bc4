#pragma once

// Budget selection by repeated random splits and one-dimensional
// sensitivity sweeps.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace otrect {

enum class CvMetric { mape, clean_loss, objective };

struct CvPlan {
    std::vector<double> grid;
    std::size_t n_splits = 5;
    double split_frac = 0.8;
    CvMetric metric = CvMetric::mape;
    std::uint64_t seed = 0;
    int jobs = 1;

    void validate() const;
    /// {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1, 2, 5, 10}.
    static std::vector<double> default_grid();
};

/// Fits on the training indices at budget delta and returns the holdout
/// metric (lower is better). Exceptions and non-finite values mark the cell
/// as failed.
using CvCellFn =
    std::function<double(std::span<const std::size_t> train, std::span<const std::size_t> test, double delta)>;

struct CvSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct CvRow {
    double delta = 0.0;
    double mean_metric = 0.0;
    double std_metric = 0.0;
    std::size_t n_ok = 0;
    std::vector<double> cells;  ///< per split; NaN where the fit failed
};

struct CvResult {
    double delta_star = 0.0;
    std::vector<CvRow> table;  ///< rows for deltas with at least one successful split
    std::size_t failed_cells = 0;
};

/// Random train/test partitions of {0..n-1}, reproducible from the seed.
std::vector<CvSplit> make_splits(std::size_t n, std::size_t n_splits, double split_frac, std::uint64_t seed);

/// Averages the holdout metric over splits for every grid value and returns
/// the minimizer (ties go to the smaller delta). The caller refits on the
/// full data at delta_star.
CvResult cross_validate_delta(std::size_t n, const CvCellFn& cell, const CvPlan& plan);

enum class SweepAxis { delta, r };

std::string to_string(SweepAxis a);

struct SweepPoint {
    double value = 0.0;
    double mean_metric = 0.0;
    double std_metric = 0.0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::delta;
    std::vector<SweepPoint> points;
    std::size_t n_trials = 0;
    std::uint64_t seed = 0;
};

/// Metric of one seeded trial at a given axis value.
using TrialFn = std::function<double(double value, std::uint64_t seed)>;

/// Runs n_trials trials per value. Trial t uses the same seed at every value
/// so the curve compares estimators on identical data.
SweepResult sweep(SweepAxis axis, const std::vector<double>& values, const TrialFn& trial, std::size_t n_trials,
                  std::uint64_t seed, int jobs = 1);

void write_sweep_csv(std::ostream& os, const SweepResult& result);
void write_cv_csv(std::ostream& os, const CvResult& result);

}  // namespace otrect
