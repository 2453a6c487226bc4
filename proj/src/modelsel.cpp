#include "otrect/modelsel.hpp"

#include "otrect/core.hpp"
#include "otrect/parallel.hpp"
#include "otrect/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

namespace otrect {

void CvPlan::validate() const {
    if (grid.empty()) throw InputError("CV grid is empty");
    for (double d : grid) {
        if (!(d >= 0.0) || !std::isfinite(d)) throw InputError("CV grid values must be finite and nonnegative");
    }
    if (n_splits == 0) throw InputError("CV needs at least one split");
    if (!(split_frac > 0.0 && split_frac < 1.0)) throw InputError("split fraction must lie in (0, 1)");
}

std::vector<double> CvPlan::default_grid() { return {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 2.0, 5.0, 10.0}; }

std::vector<CvSplit> make_splits(std::size_t n, std::size_t n_splits, double split_frac, std::uint64_t seed) {
    const auto n_train = static_cast<std::size_t>(std::llround(split_frac * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n) throw InputError("split leaves an empty training or test set");
    std::vector<CvSplit> out(n_splits);
    for (std::size_t s = 0; s < n_splits; ++s) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        auto rng = make_stream(seed, s);
        std::shuffle(idx.begin(), idx.end(), rng);
        out[s].train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        out[s].test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
        std::sort(out[s].train.begin(), out[s].train.end());
        std::sort(out[s].test.begin(), out[s].test.end());
    }
    return out;
}

CvResult cross_validate_delta(std::size_t n, const CvCellFn& cell, const CvPlan& plan) {
    plan.validate();
    std::vector<double> grid = plan.grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    CvResult out;
    if (grid.size() == 1) {
        out.delta_star = grid.front();
        return out;
    }

    const auto splits = make_splits(n, plan.n_splits, plan.split_frac, plan.seed);
    const std::size_t S = splits.size();
    std::vector<double> cells(grid.size() * S, std::numeric_limits<double>::quiet_NaN());
    parallel_for(cells.size(), plan.jobs, [&](std::size_t c) {
        const std::size_t g = c / S;
        const std::size_t s = c % S;
        try {
            const double v = cell(splits[s].train, splits[s].test, grid[g]);
            if (std::isfinite(v)) cells[c] = v;
        } catch (const std::exception&) {
            // recorded as NaN
        }
    });

    bool have = false;
    double best = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        CvRow row;
        row.delta = grid[g];
        row.cells.assign(cells.begin() + static_cast<std::ptrdiff_t>(g * S),
                         cells.begin() + static_cast<std::ptrdiff_t>((g + 1) * S));
        double sum = 0.0;
        for (double v : row.cells) {
            if (std::isnan(v)) {
                ++out.failed_cells;
                continue;
            }
            sum += v;
            ++row.n_ok;
        }
        if (row.n_ok == 0) continue;
        row.mean_metric = sum / static_cast<double>(row.n_ok);
        double ss = 0.0;
        for (double v : row.cells) {
            if (!std::isnan(v)) ss += (v - row.mean_metric) * (v - row.mean_metric);
        }
        row.std_metric = row.n_ok > 1 ? std::sqrt(ss / static_cast<double>(row.n_ok - 1)) : 0.0;
        // Grid is ascending, so strict improvement keeps the smaller delta on ties.
        if (!have || row.mean_metric < best) {
            best = row.mean_metric;
            out.delta_star = row.delta;
            have = true;
        }
        out.table.push_back(std::move(row));
    }
    if (!have) throw std::runtime_error("cross-validation failed for every budget on every split");
    return out;
}

std::string to_string(SweepAxis a) { return a == SweepAxis::delta ? "delta" : "r"; }

SweepResult sweep(SweepAxis axis, const std::vector<double>& values, const TrialFn& trial, std::size_t n_trials,
                  std::uint64_t seed, int jobs) {
    if (values.empty()) throw InputError("sweep needs at least one value");
    if (n_trials == 0) throw InputError("sweep needs at least one trial");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());

    const std::size_t T = n_trials;
    std::vector<double> metric(sorted.size() * T);
    parallel_for(metric.size(), jobs, [&](std::size_t c) {
        metric[c] = trial(sorted[c / T], stream_seed(seed, c % T));
    });

    SweepResult out;
    out.axis = axis;
    out.n_trials = n_trials;
    out.seed = seed;
    for (std::size_t v = 0; v < sorted.size(); ++v) {
        const auto begin = metric.begin() + static_cast<std::ptrdiff_t>(v * T);
        const double mean = std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(T), 0.0) / static_cast<double>(T);
        double ss = 0.0;
        for (auto it = begin; it != begin + static_cast<std::ptrdiff_t>(T); ++it) ss += (*it - mean) * (*it - mean);
        out.points.push_back({sorted[v], mean, T > 1 ? std::sqrt(ss / static_cast<double>(T - 1)) : 0.0});
    }
    return out;
}

void write_sweep_csv(std::ostream& os, const SweepResult& result) {
    os << to_string(result.axis) << ",mean_metric,std_metric\n" << std::setprecision(10);
    for (const auto& p : result.points) os << p.value << ',' << p.mean_metric << ',' << p.std_metric << '\n';
}

void write_cv_csv(std::ostream& os, const CvResult& result) {
    os << "delta,mean_metric,std_metric\n" << std::setprecision(10);
    for (const auto& r : result.table) os << r.delta << ',' << r.mean_metric << ',' << r.std_metric << '\n';
}

}  // namespace otrect
