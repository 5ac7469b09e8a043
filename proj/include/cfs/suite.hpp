#pragma once

#include "cfs/core.hpp"
#include "cfs/models.hpp"
#include "cfs/smallball.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cfs {

enum class TargetStyle { Flat, RampUp, RampDown, Zigzag, Spike };

std::string_view to_string(TargetStyle s);
TargetStyle parse_target_style(std::string_view s);

struct Target {
    TargetStyle style;
    double amplitude;
    Path f;
};

struct TargetFamily {
    std::size_t n_segments;
    std::vector<Target> members;
};

/// Piecewise-linear target on the tail grid with f(t_restart) = 0. Knots split the tail into
/// n_segments equal pieces; the spike is a triangle peaking at the midpoint whatever n_segments is.
Path make_target(const TimeGrid& tail, TargetStyle style, double amplitude, std::size_t n_segments);

/// Every style at amplitudes a and a/2, style-major: 10 targets.
TargetFamily build_targets(const TimeGrid& tail, double amplitude, std::size_t n_segments);

struct QueryTemplate {
    std::vector<double> t_fracs{0.0, 0.5};
    std::vector<double> eps_factors{0.2, 0.4};
    /// Fixed amplitude; unset means one standard deviation of Z(T) - Z(t_restart) from a pilot run,
    /// or the largest node-wise one when Z(T) is pinned.
    std::optional<double> amplitude;
    std::uint64_t pilot_reps = 1000;
    std::size_t n_segments = 4;
    ConditioningMode mode = ConditioningMode::Hold;
};

struct BatteryOptions {
    TimeGrid grid{0.0, 1.0, 2048};
    EstimatorOptions estimator;
};

struct BatteryRow {
    std::string model;
    double t_frac;
    TargetStyle style;
    double amplitude;
    double epsilon;
    Estimate estimate;
    std::uint64_t seed;
};

enum class Verdict { PositiveAll, ZeroConsistent, NotFullSupport };
std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view s);

struct ModelSummary {
    std::string model;
    Verdict verdict;
    std::size_t positive = 0;
    std::size_t zero_consistent = 0;
    std::size_t analytic_zero = 0;
};

struct BatteryReport {
    std::uint64_t seed = 0;
    std::uint64_t reps = 0;
    double t_end = 1.0;
    std::size_t n_steps = 0;
    std::vector<BatteryRow> rows;
    std::vector<ModelSummary> summaries;
    std::uint64_t total_replications = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

/// For each model and restart fraction: one simulated history, an amplitude, the target family,
/// and every (target, eps) query estimated on shared continuations. Output depends only on
/// (models, template, reps, seed, grid), not on the worker count.
BatteryReport run_battery(std::span<const ModelSpec> models, const QueryTemplate& tmpl, std::uint64_t reps,
                          std::uint64_t seed, const BatteryOptions& opts = {});

/// Verdict over a model's rows: any analytic zero, else all positive, else zero-consistent.
Verdict summarize(std::span<const BatteryRow> rows);

enum class ReportFormat { Csv, Json, Plotdata };
std::string_view to_string(ReportFormat f);
std::string_view extension(ReportFormat f);
ReportFormat parse_report_format(std::string_view s);

inline constexpr std::string_view kCsvHeader =
    "model,t_frac,style,amplitude,epsilon,reps,hits,p_hat,ci_low,ci_high,classification,seed";

std::string render_csv_row(const BatteryRow& row);
/// Wall-clock time is left out so equal inputs give equal bytes.
std::string render_report(const BatteryReport& r, ReportFormat format);
BatteryReport parse_report_json(std::string_view text);

} // namespace cfs
