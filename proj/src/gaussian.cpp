#include "cfs/gaussian.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <sstream>

namespace cfs {

void validate(const FbmSpec& spec)
{
    if (!(spec.hurst > 0.0 && spec.hurst < 1.0)) {
        std::ostringstream os;
        os << "Hurst index " << spec.hurst << " outside (0, 1)";
        throw Error(ErrorCode::HurstOutOfRange, os.str());
    }
}

void validate(const FouSpec& spec)
{
    validate(FbmSpec{spec.hurst});
    if (!(spec.alpha > 0.0))
        throw Error(ErrorCode::BadParams, "fOU mean reversion must be positive");
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.v0))
        throw Error(ErrorCode::BadParams, "fOU volatility must be non-negative and v0 finite");
}

double fbm_covariance(double s, double t, double hurst) noexcept
{
    const double two_h = 2.0 * hurst;
    return 0.5 * (std::pow(s, two_h) + std::pow(t, two_h) - std::pow(std::abs(t - s), two_h));
}

void fill_brownian(const TimeGrid& grid, RngStream& rng, std::span<double> out)
{
    const double sd = std::sqrt(grid.dt());
    out[0] = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        out[i] = out[i - 1] + sd * rng.normal();
}

Path gen_brownian(const TimeGrid& grid, RngStream& rng)
{
    std::vector<double> w(grid.size());
    fill_brownian(grid, rng, w);
    return Path(grid, std::move(w));
}

Path gen_brownian_alt(const TimeGrid& grid, RngStream& rng)
{
    const std::size_t n = grid.n_steps();
    if (!std::has_single_bit(n)) {
        std::ostringstream os;
        os << "midpoint refinement needs a power-of-two step count, got " << n;
        throw Error(ErrorCode::NotPowerOfTwo, os.str());
    }
    std::vector<double> w(n + 1, 0.0);
    w[n] = std::sqrt(grid.span()) * rng.normal();
    // Given the endpoints of a dyadic interval of length len, the midpoint is
    // N(mean of endpoints, len/4).
    for (std::size_t stride = n; stride > 1; stride /= 2) {
        const std::size_t half = stride / 2;
        const double sd = std::sqrt(static_cast<double>(half) * grid.dt() / 2.0);
        for (std::size_t left = 0; left < n; left += stride)
            w[left + half] = 0.5 * (w[left] + w[left + stride]) + sd * rng.normal();
    }
    return Path(grid, std::move(w));
}

FbmGenerator::FbmGenerator(const TimeGrid& grid, FbmSpec spec) : grid_(grid), spec_(spec)
{
    validate(spec_);
    if (grid_.t_start() != 0.0)
        throw Error(ErrorCode::BadParams, "fractional Brownian motion grids must start at 0");

    const auto n = static_cast<Eigen::Index>(grid_.n_steps());
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            cov(i, j) = cov(j, i) = fbm_covariance(grid_.node(static_cast<std::size_t>(i) + 1),
                                                   grid_.node(static_cast<std::size_t>(j) + 1), spec_.hurst);

    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        std::ostringstream os;
        os << "fBm covariance with h = " << spec_.hurst << " on " << n
           << " nodes is not numerically positive definite";
        throw Error(ErrorCode::CovarianceNotPD, os.str());
    }
    const Eigen::MatrixXd l = llt.matrixL();
    factor_.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            if (!std::isfinite(l(i, j)))
                throw Error(ErrorCode::CovarianceNotPD, "Cholesky factor has non-finite entries");
            factor_.push_back(l(i, j));
        }
}

std::span<const double> FbmGenerator::factor_row(std::size_t node) const noexcept
{
    const std::size_t offset = (node - 1) * node / 2;
    return {factor_.data() + offset, node};
}

void FbmGenerator::draw_innovations(RngStream& rng, std::span<double> xi) const
{
    for (double& x : xi)
        x = rng.normal();
}

void FbmGenerator::fill(std::span<const double> xi, std::span<double> values, std::size_t first_node) const
{
    values[0] = 0.0;
    for (std::size_t j = std::max<std::size_t>(first_node, 1); j <= grid_.n_steps(); ++j) {
        const auto row = factor_row(j);
        double acc = 0.0;
        for (std::size_t l = 0; l < j; ++l)
            acc += row[l] * xi[l];
        values[j] = acc;
    }
}

Path FbmGenerator::from_innovations(std::span<const double> xi) const
{
    std::vector<double> values(grid_.size());
    fill(xi, values);
    return Path(grid_, std::move(values));
}

Path FbmGenerator::sample(RngStream& rng) const
{
    std::vector<double> xi(dimension());
    draw_innovations(rng, xi);
    return from_innovations(xi);
}

Path gen_fbm(const TimeGrid& grid, const FbmSpec& spec, RngStream& rng)
{
    return FbmGenerator(grid, spec).sample(rng);
}

double fou_advance(const FouSpec& spec, double dt, double t, double fbm_prev, double fbm_now, double& smoothed) noexcept
{
    const double decay = std::exp(-spec.alpha * dt);
    smoothed = decay * smoothed + 0.5 * dt * (decay * fbm_prev + fbm_now);
    return spec.v0 * std::exp(-spec.alpha * t) + spec.sigma * (fbm_now - spec.alpha * smoothed);
}

void fou_from_fbm(const TimeGrid& grid, std::span<const double> fbm, const FouSpec& spec, std::span<double> out)
{
    // smoothed(t_j) = int_0^{t_j} e^{-alpha(t_j - s)} B(s) ds, trapezoid per cell.
    double smoothed = 0.0;
    out[0] = spec.v0;
    for (std::size_t j = 1; j < grid.size(); ++j)
        out[j] = fou_advance(spec, grid.dt(), grid.node(j), fbm[j - 1], fbm[j], smoothed);
}

Path fou_from_fbm(const Path& fbm, const FouSpec& spec)
{
    validate(spec);
    std::vector<double> out(fbm.size());
    fou_from_fbm(fbm.grid(), fbm.values(), spec, out);
    return Path(fbm.grid(), std::move(out));
}

Path gen_fou(const TimeGrid& grid, const FouSpec& spec, RngStream& rng)
{
    validate(spec);
    return fou_from_fbm(gen_fbm(grid, FbmSpec{spec.hurst}, rng), spec);
}

void fill_bridge(const TimeGrid& grid, double start, double terminal_value, RngStream& rng, std::span<double> out)
{
    const std::size_t n = grid.n_steps();
    const double dt = grid.dt();
    out[0] = start;
    // Given x at t_i, the next node of a bridge to (T, b) is
    // N(x + (b - x) dt / tau, dt (tau - dt) / tau) with tau = T - t_i.
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double tau = static_cast<double>(n - i) * dt;
        const double x = out[i];
        const double mean = x + (terminal_value - x) * (dt / tau);
        const double sd = std::sqrt(dt * (tau - dt) / tau);
        out[i + 1] = mean + sd * rng.normal();
    }
    out[n] = terminal_value;
}

Path gen_bridge_continuation(const Path& history, double terminal_value, const TimeGrid& grid_tail, RngStream& rng)
{
    const TimeGrid& h = history.grid();
    const double tol = 1e-12 * std::max(1.0, std::abs(grid_tail.t_end()));
    if (std::abs(h.t_end() - grid_tail.t_start()) > tol) {
        std::ostringstream os;
        os << "history ends at " << h.t_end() << " but the continuation grid starts at " << grid_tail.t_start();
        throw Error(ErrorCode::GridMismatch, os.str());
    }
    if (!std::isfinite(terminal_value))
        throw Error(ErrorCode::NonFinite, "bridge terminal value is not finite");
    std::vector<double> out(grid_tail.size());
    fill_bridge(grid_tail, history.back(), terminal_value, rng, out);
    return Path(grid_tail, std::move(out));
}

} // namespace cfs
