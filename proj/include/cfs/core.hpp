#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cfs {

enum class ErrorCode {
    NonPositiveSpan,
    ZeroSteps,
    GridMismatch,
    NonFinite,
    ZeroReps,
    NotPowerOfTwo,
    HurstOutOfRange,
    CovarianceNotPD,
    BadParams,
    BadGenerator,
    IncompatibleContext,
    BadQuery,
    DegenerateClock,
    EmptyBattery,
    BadConfig,
    Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);

    ErrorCode code() const noexcept { return code_; }

    /// True for failures of the numerics (as opposed to bad input).
    bool numerical() const noexcept;

private:
    ErrorCode code_;
};

/// Uniform grid t_start = t_0 < t_1 < ... < t_n = t_end.
class TimeGrid {
public:
    TimeGrid(double t_start, double t_end, std::size_t n_steps);

    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_end_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t size() const noexcept { return n_steps_ + 1; }
    double dt() const noexcept { return dt_; }
    double span() const noexcept { return t_end_ - t_start_; }

    // Last node is pinned to t_end so that it is exact.
    double node(std::size_t i) const noexcept
    {
        return i == n_steps_ ? t_end_ : t_start_ + static_cast<double>(i) * dt_;
    }

    std::vector<double> nodes() const;

    /// Sub-grid [node(from), t_end] with the same spacing.
    TimeGrid tail(std::size_t from) const;

    /// Nearest node index to t, clamped to the grid.
    std::size_t index_of(double t) const noexcept;

    /// Same node count and endpoints up to rounding.
    bool matches(const TimeGrid& other) const noexcept;

private:
    double t_start_;
    double t_end_;
    std::size_t n_steps_;
    double dt_;
};

TimeGrid make_grid(double t_start, double t_end, std::size_t n_steps);

/// Real-valued trajectory sampled at every node of a grid.
class Path {
public:
    Path(TimeGrid grid, std::vector<double> values);

    static Path constant(const TimeGrid& grid, double value);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double front() const noexcept { return values_.front(); }
    double back() const noexcept { return values_.back(); }

    /// Nodes [0, last] as a path on the matching prefix grid.
    Path prefix(std::size_t last) const;
    /// Nodes [from, n] as a path on grid().tail(from).
    Path suffix(std::size_t from) const;

    /// Linear interpolation between nodes; clamps outside the grid.
    double interpolate(double t) const noexcept;

private:
    TimeGrid grid_;
    std::vector<double> values_;
};

void require_same_grid(const TimeGrid& a, const TimeGrid& b, std::string_view context);

/// max_i |x(t_i) - offset - f(t_i)|
double sup_deviation(const Path& x, const Path& f, double offset);

struct Interval {
    double low;
    double high;
};

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::uint64_t hits, std::uint64_t reps, double z = 1.96);

enum class Classification { Positive, ZeroConsistent, AnalyticZero };

std::string_view to_string(Classification c);
Classification parse_classification(std::string_view s);

struct Estimate {
    std::uint64_t hits = 0;
    std::uint64_t reps = 0;
    double p_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 1.0;
    Classification classification = Classification::ZeroConsistent;
    /// Set when classification is AnalyticZero.
    std::string reason;

    static Estimate from_counts(std::uint64_t hits, std::uint64_t reps, double z = 1.96);
};

/// Decimal with 17 significant digits ("%.17g"); round-trips every double.
std::string format_real(double x);
/// Shortest text that round-trips.
std::string format_short(double x);
/// Whole-string parses; throw BadConfig naming `what` on failure.
double parse_real(std::string_view text, std::string_view what);
std::uint64_t parse_count(std::string_view text, std::string_view what);
std::string_view trim(std::string_view s) noexcept;

} // namespace cfs
