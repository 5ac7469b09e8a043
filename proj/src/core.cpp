#include "cfs/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cfs {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::NonPositiveSpan: return "NonPositiveSpan";
    case ErrorCode::ZeroSteps: return "ZeroSteps";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ZeroReps: return "ZeroReps";
    case ErrorCode::NotPowerOfTwo: return "NotPowerOfTwo";
    case ErrorCode::HurstOutOfRange: return "HurstOutOfRange";
    case ErrorCode::CovarianceNotPD: return "CovarianceNotPD";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::BadGenerator: return "BadGenerator";
    case ErrorCode::IncompatibleContext: return "IncompatibleContext";
    case ErrorCode::BadQuery: return "BadQuery";
    case ErrorCode::DegenerateClock: return "DegenerateClock";
    case ErrorCode::EmptyBattery: return "EmptyBattery";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
{
}

bool Error::numerical() const noexcept
{
    return code_ == ErrorCode::CovarianceNotPD || code_ == ErrorCode::NonFinite;
}

TimeGrid::TimeGrid(double t_start, double t_end, std::size_t n_steps)
    : t_start_(t_start), t_end_(t_end), n_steps_(n_steps), dt_(0.0)
{
    if (!std::isfinite(t_start) || !std::isfinite(t_end) || !(t_end > t_start)) {
        std::ostringstream os;
        os << "grid end " << t_end << " must exceed start " << t_start;
        throw Error(ErrorCode::NonPositiveSpan, os.str());
    }
    if (n_steps == 0)
        throw Error(ErrorCode::ZeroSteps, "grid needs at least one step");
    dt_ = (t_end - t_start) / static_cast<double>(n_steps);
}

std::vector<double> TimeGrid::nodes() const
{
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = node(i);
    return out;
}

TimeGrid TimeGrid::tail(std::size_t from) const
{
    if (from >= n_steps_)
        throw Error(ErrorCode::GridMismatch, "tail must leave at least one step");
    return TimeGrid(node(from), t_end_, n_steps_ - from);
}

std::size_t TimeGrid::index_of(double t) const noexcept
{
    const double x = std::round((t - t_start_) / dt_);
    if (!(x > 0.0))
        return 0;
    return std::min(n_steps_, static_cast<std::size_t>(x));
}

bool TimeGrid::matches(const TimeGrid& other) const noexcept
{
    const double tol = 1e-12 * std::max({1.0, std::abs(t_end_), std::abs(t_start_)});
    return n_steps_ == other.n_steps_ && std::abs(t_start_ - other.t_start_) <= tol &&
           std::abs(t_end_ - other.t_end_) <= tol;
}

TimeGrid make_grid(double t_start, double t_end, std::size_t n_steps)
{
    return TimeGrid(t_start, t_end, n_steps);
}

Path::Path(TimeGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values))
{
    if (values_.size() != grid_.size()) {
        std::ostringstream os;
        os << "path has " << values_.size() << " values for a grid of " << grid_.size() << " nodes";
        throw Error(ErrorCode::GridMismatch, os.str());
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            std::ostringstream os;
            os << "path value at node " << i << " is not finite";
            throw Error(ErrorCode::NonFinite, os.str());
        }
    }
}

Path Path::constant(const TimeGrid& grid, double value)
{
    return Path(grid, std::vector<double>(grid.size(), value));
}

Path Path::prefix(std::size_t last) const
{
    if (last == 0 || last > grid_.n_steps())
        throw Error(ErrorCode::GridMismatch, "prefix must cover at least one step");
    TimeGrid g(grid_.t_start(), grid_.node(last), last);
    return Path(g, std::vector<double>(values_.begin(), values_.begin() + static_cast<std::ptrdiff_t>(last) + 1));
}

Path Path::suffix(std::size_t from) const
{
    return Path(grid_.tail(from),
                std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(from), values_.end()));
}

double Path::interpolate(double t) const noexcept
{
    if (t <= grid_.t_start())
        return values_.front();
    if (t >= grid_.t_end())
        return values_.back();
    const double x = (t - grid_.t_start()) / grid_.dt();
    auto i = static_cast<std::size_t>(x);
    if (i >= grid_.n_steps())
        return values_.back();
    const double w = x - static_cast<double>(i);
    return values_[i] + w * (values_[i + 1] - values_[i]);
}

void require_same_grid(const TimeGrid& a, const TimeGrid& b, std::string_view context)
{
    if (!a.matches(b)) {
        std::ostringstream os;
        os << context << ": grids [" << a.t_start() << ", " << a.t_end() << "]/" << a.n_steps() << " and ["
           << b.t_start() << ", " << b.t_end() << "]/" << b.n_steps() << " differ";
        throw Error(ErrorCode::GridMismatch, os.str());
    }
}

double sup_deviation(const Path& x, const Path& f, double offset)
{
    require_same_grid(x.grid(), f.grid(), "sup_deviation");
    double sup = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        sup = std::max(sup, std::abs(x[i] - offset - f[i]));
    return sup;
}

Interval wilson_interval(std::uint64_t hits, std::uint64_t reps, double z)
{
    if (reps == 0)
        throw Error(ErrorCode::ZeroReps, "Wilson interval needs at least one replication");
    if (hits > reps)
        throw Error(ErrorCode::BadParams, "hits exceed replications");
    if (!(z > 0.0))
        throw Error(ErrorCode::BadParams, "z must be positive");

    const double n = static_cast<double>(reps);
    const double p = static_cast<double>(hits) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));

    Interval ci{centre - half, centre + half};
    // Endpoints are exact at the boundary counts; rounding must not push them past p.
    ci.low = hits == 0 ? 0.0 : std::clamp(ci.low, 0.0, p);
    ci.high = hits == reps ? 1.0 : std::clamp(ci.high, p, 1.0);
    return ci;
}

std::string_view to_string(Classification c)
{
    switch (c) {
    case Classification::Positive: return "POSITIVE";
    case Classification::ZeroConsistent: return "ZERO_CONSISTENT";
    case Classification::AnalyticZero: return "ANALYTIC_ZERO";
    }
    return "UNKNOWN";
}

Classification parse_classification(std::string_view s)
{
    if (s == "POSITIVE")
        return Classification::Positive;
    if (s == "ZERO_CONSISTENT")
        return Classification::ZeroConsistent;
    if (s == "ANALYTIC_ZERO")
        return Classification::AnalyticZero;
    throw Error(ErrorCode::BadParams, "unknown classification '" + std::string(s) + "'");
}

Estimate Estimate::from_counts(std::uint64_t hits, std::uint64_t reps, double z)
{
    const Interval ci = wilson_interval(hits, reps, z);
    Estimate e;
    e.hits = hits;
    e.reps = reps;
    e.p_hat = static_cast<double>(hits) / static_cast<double>(reps);
    e.ci_low = ci.low;
    e.ci_high = ci.high;
    e.classification = (hits >= 1 && ci.low > 0.0) ? Classification::Positive : Classification::ZeroConsistent;
    return e;
}

std::string format_real(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string format_short(double x)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) noexcept
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_real(std::string_view text, std::string_view what)
{
    const std::string_view t = trim(text);
    double x = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw Error(ErrorCode::BadConfig, std::string(what) + ": '" + std::string(text) + "' is not a number");
    return x;
}

std::uint64_t parse_count(std::string_view text, std::string_view what)
{
    const std::string_view t = trim(text);
    std::uint64_t x = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw Error(ErrorCode::BadConfig,
                    std::string(what) + ": '" + std::string(text) + "' is not a non-negative integer");
    return x;
}

} // namespace cfs
