#pragma once

#include "cfs/core.hpp"
#include "cfs/rng.hpp"

#include <span>
#include <vector>

namespace cfs {

struct FbmSpec {
    double hurst = 0.5;
};

/// Fractional Ornstein-Uhlenbeck: V(t) = v0 e^{-alpha t} + sigma int_0^t e^{-alpha(t-s)} dB^h(s).
struct FouSpec {
    double hurst = 0.5;
    double alpha = 1.0;
    double sigma = 1.0;
    double v0 = 0.0;
};

void validate(const FbmSpec& spec);
void validate(const FouSpec& spec);

/// R(s,t) = (s^{2h} + t^{2h} - |t-s|^{2h}) / 2
double fbm_covariance(double s, double t, double hurst) noexcept;

/// Brownian motion on the grid by summing independent N(0, dt) increments; W(t_0) = 0.
Path gen_brownian(const TimeGrid& grid, RngStream& rng);
/// Writes the same construction into a caller-owned buffer of grid.size() values.
void fill_brownian(const TimeGrid& grid, RngStream& rng, std::span<double> out);

/// Brownian motion by Levy midpoint refinement (endpoint first, then dyadic midpoints).
/// Same law as gen_brownian, different algorithm; n_steps must be a power of two.
Path gen_brownian_alt(const TimeGrid& grid, RngStream& rng);

/// Exact fractional Brownian motion on a grid starting at 0, by Cholesky factorisation of the
/// covariance of the nodes t_1..t_n. Factor once, sample many times.
///
/// Node j is sum_{l<=j} L[j][l] xi_l with iid standard normal innovations xi. Because L is lower
/// triangular, the first m innovations determine the path up to t_m and vice versa, so redrawing
/// only innovations m+1..n samples the exact conditional law of the future given the past.
class FbmGenerator {
public:
    FbmGenerator(const TimeGrid& grid, FbmSpec spec);

    const TimeGrid& grid() const noexcept { return grid_; }
    const FbmSpec& spec() const noexcept { return spec_; }
    /// Number of innovations per path (= n_steps).
    std::size_t dimension() const noexcept { return grid_.n_steps(); }

    Path sample(RngStream& rng) const;
    void draw_innovations(RngStream& rng, std::span<double> xi) const;
    /// values[j] for j >= first_node from innovations xi (values[0] = 0 always).
    void fill(std::span<const double> xi, std::span<double> values, std::size_t first_node = 1) const;
    Path from_innovations(std::span<const double> xi) const;

    /// Row of the Cholesky factor for node j in 1..n (length j).
    std::span<const double> factor_row(std::size_t node) const noexcept;

private:
    TimeGrid grid_;
    FbmSpec spec_;
    std::vector<double> factor_; // packed lower triangle, row-major
};

Path gen_fbm(const TimeGrid& grid, const FbmSpec& spec, RngStream& rng);

/// fOU from a given fBm path by integration by parts,
///   int_0^t e^{-alpha(t-s)} dB(s) = B(t) - alpha int_0^t e^{-alpha(t-s)} B(s) ds,
/// with trapezoidal quadrature of the Riemann integral.
Path fou_from_fbm(const Path& fbm, const FouSpec& spec);
void fou_from_fbm(const TimeGrid& grid, std::span<const double> fbm, const FouSpec& spec, std::span<double> out);

Path gen_fou(const TimeGrid& grid, const FouSpec& spec, RngStream& rng);

/// One trapezoid step of the recursion behind fou_from_fbm. `smoothed` carries
/// int_0^t e^{-alpha(t-s)} B(s) ds from t - dt to t; returns V(t).
double fou_advance(const FouSpec& spec, double dt, double t, double fbm_prev, double fbm_now, double& smoothed) noexcept;

/// Continues a Brownian history on [t, T] as a Brownian bridge to terminal_value.
/// The last node equals terminal_value exactly.
Path gen_bridge_continuation(const Path& history, double terminal_value, const TimeGrid& grid_tail, RngStream& rng);
void fill_bridge(const TimeGrid& grid, double start, double terminal_value, RngStream& rng, std::span<double> out);

} // namespace cfs
