#pragma once

#include "cfs/core.hpp"

#include <span>
#include <vector>

namespace cfs {

/// I(t_j) = sum_{i<j} k(t_i) (w(t_{i+1}) - w(t_i)), left-point (Ito) sums.
Path ito_integral(const Path& k, const Path& w);

/// Pathwise Riemann-Stieltjes integral of a finite-variation integrand against a continuous path.
/// Computed as the left-point sum; rs_integral_parts gives the integration-by-parts form
///   J(t_j) = k(t_j) x(t_j) - k(t_0) x(t_0) - sum_{i<j} x(t_{i+1}) (k(t_{i+1}) - k(t_i)).
Path rs_integral(const Path& k, const Path& x);
Path rs_integral_parts(const Path& k, const Path& x);

/// g(t_j) = sum_{i<j} k(t_i)^2 dt, the quadratic variation of int k dW.
class QvClock {
public:
    explicit QvClock(const Path& k);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::span<const double> g() const noexcept { return g_; }
    double total() const noexcept { return g_.back(); }

    /// Smallest t with g(t) = u, linear inside cells. Plateaus collapse to their left end.
    double inverse(double u) const;

private:
    TimeGrid grid_;
    std::vector<double> g_;
};

QvClock qv_clock(const Path& k);

/// Z(t) = exp(W(t) - W(t_0) - (t - t_0) / 2)
Path doleans_exp(const Path& w);

struct ProgCfsReport {
    bool k_nonvanishing = true;
    bool qv_bounded = false;
    bool integrands_finite = false;
    double int_k2 = 0.0;        ///< int k^2 ds
    double int_inv_k2 = 0.0;    ///< int k^{-2} ds
    double int_h2_inv_k2 = 0.0; ///< int k^{-2} h^2 ds

    bool all_pass() const noexcept { return k_nonvanishing && qv_bounded && integrands_finite; }
};

/// Per-path diagnostics for the uniform quadratic-variation bound and the integrands of the
/// exponential-moment conditions. Left-point Riemann sums; never throws.
ProgCfsReport check_progcfs_conditions(const Path& k, const Path& h, double k_bar);

} // namespace cfs
