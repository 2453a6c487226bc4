#pragma once

// Contamination models, the Monte-Carlo comparison harness, rectified
// distribution snapshots across budgets and objective curves along a line.

#include "otrect/core.hpp"
#include "otrect/estimators.hpp"
#include "otrect/modelsel.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace otrect {

enum class ContaminationKind { mean_mixture, regression_shift };

struct ContaminationModel {
    ContaminationKind kind = ContaminationKind::mean_mixture;
    double corruption_level = 0.0;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    /// false: each point is corrupted independently with probability epsilon.
    /// true: exactly round(epsilon n) points, chosen at random, are corrupted.
    bool exact_counts = false;

    // mean_mixture: N(clean_loc, scale^2) vs N(outlier_loc, scale^2)
    double clean_loc = 0.0;
    double outlier_loc = 25.0;
    double scale = 2.0;

    // regression_shift: x ~ N(x_loc, x_scale^2), y = intercept + slope x + noise w
    double slope = -0.8;
    double clean_intercept = 0.1;
    double outlier_intercept = 10.1;
    double clean_x_loc = 0.0;
    double outlier_x_loc = 4.0;
    double x_scale = 2.0;
    double noise = 0.2;

    void validate() const;
};

struct GeneratedData {
    Dataset samples;             ///< uniform weights
    std::vector<bool> clean_mask;
};

GeneratedData generate(const ContaminationModel& model);

/// Subset of samples whose mask entry is true, reweighted uniformly.
Dataset masked(const Dataset& data, const std::vector<bool>& mask);

enum class TableTask { mean, lad };

std::string to_string(TableTask t);

struct TableConfig {
    TableTask task = TableTask::mean;
    std::vector<double> levels{0.45};
    /// mean task: ours, mean, median, trimmed_mean. lad task: ours, ols, lad, huber.
    std::vector<std::string> estimators;
    std::size_t n_trials = 100;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    double delta = 0.5;
    double r = 0.5;
    bool convex_comparison = false;
    /// The trim fraction equals the corruption level and is cut from each tail.
    TrimSide trim_side = TrimSide::each_tail;
    /// Corrupt exactly round(level n) points instead of flipping a coin per point.
    bool exact_counts = true;
    /// Spread of the mixture components (mean task) or of the regressor (lad task).
    double spread = 2.0;
    FitConfig ours;
    int jobs = 1;

    /// Defaults for the mean comparison (delta 0.5) or the LAD comparison (delta 1.5).
    static TableConfig defaults(TableTask task);
    std::vector<std::string> estimator_names() const;
};

struct TrialReport {
    std::string estimator;
    double clean_loss = 0.0;
    double pct_rectified = 0.0;  ///< NaN for baselines
    std::uint64_t seed = 0;
    double wall_time = 0.0;  ///< seconds
    bool failed = false;
    std::string error;
    std::vector<double> theta;
};

struct TableRow {
    std::string task;
    double level = 0.0;
    std::string estimator;
    double mean_loss = 0.0;
    double two_std = 0.0;
    double pct_rectified = 0.0;  ///< NaN for baselines
    std::size_t n_trials = 0;    ///< successful trials
    std::size_t n_failed = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
};

struct TableResult {
    std::vector<TableRow> rows;
    /// trials[level][estimator][trial]
    std::vector<std::vector<std::vector<TrialReport>>> trials;
    std::size_t failures() const;
};

/// Seed of trial `trial` at level index `level` under master `seed`.
std::uint64_t trial_seed(std::uint64_t seed, std::size_t level, std::size_t trial);

/// Dataset for one trial of the table protocol.
GeneratedData trial_data(TableTask task, double level, std::size_t n, std::uint64_t seed,
                         bool exact_counts = false, double spread = 2.0);

/// Runs every estimator on one generated dataset.
std::vector<TrialReport> run_trial(const TableConfig& cfg, double level, std::uint64_t seed);

TableResult run_table(const TableConfig& cfg);

/// Sweep trial for one estimator of the table protocol at a fixed level:
/// the axis value replaces delta or r (r >= 1 switches on the convex
/// comparison flag). Returns the clean loss and throws if the fit failed.
TrialFn table_sweep_trial(const TableConfig& base, double level, SweepAxis axis, const std::string& estimator = "ours");

/// Budget selection for the "ours" estimator of a table task on one
/// generated dataset. The holdout metric is the average loss on the test
/// points; with clean_only it is restricted to the clean ones.
CvResult cross_validate_table(const TableConfig& cfg, double level, const CvPlan& plan, std::uint64_t data_seed,
                              bool clean_only = true);

void write_table_csv(std::ostream& os, const TableResult& table);
/// Fixed-width human-readable table.
void print_table(std::ostream& os, const TableResult& table);

struct SnapshotRow {
    std::size_t idx = 0;
    std::vector<double> orig;
    std::vector<double> rect;
    double mass = 0.0;
    bool moved = false;
};

struct Snapshot {
    double delta = 0.0;
    std::vector<double> theta;
    double objective = 0.0;
    std::vector<SnapshotRow> rows;
};

/// For each delta, fits the task on one dataset drawn from `model` and
/// records where every atom of the rectified distribution sits.
std::vector<Snapshot> evolution_export(TableTask task, const ContaminationModel& model,
                                       const std::vector<double>& deltas, const CostSpec& spec,
                                       const FitConfig& cfg);

void write_snapshots_csv(std::ostream& os, const std::vector<Snapshot>& snaps);

/// Three equal masses at -1, 0, 1.
Dataset three_point_example();

/// Evaluates the rectified mean objective at each theta (1-D data).
std::vector<std::pair<double, double>> objective_curve(std::span<const Sample> data,
                                                       const std::vector<double>& thetas, const CostSpec& spec,
                                                       const Budget& delta);

/// Evenly spaced values from start to stop (inclusive when stop is within
/// step/2 of a grid point).
std::vector<double> linspace_step(double start, double stop, double step);

/// Counts downward-facing kinks: runs of consecutive grid points where the
/// second difference falls below -slope_jump * h. A kink where the slope
/// drops by s yields a second difference of about -s h, while smooth
/// stretches give O(h^2).
int count_downward_cusps(const std::vector<std::pair<double, double>>& curve, double slope_jump = 1e-2);

}  // namespace otrect
