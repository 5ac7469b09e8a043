#include "cfs/integrate.hpp"

#include <algorithm>
#include <cmath>

namespace cfs {

Path ito_integral(const Path& k, const Path& w)
{
    require_same_grid(k.grid(), w.grid(), "ito_integral");
    std::vector<double> out(k.size(), 0.0);
    for (std::size_t i = 0; i + 1 < k.size(); ++i)
        out[i + 1] = out[i] + k[i] * (w[i + 1] - w[i]);
    return Path(k.grid(), std::move(out));
}

Path rs_integral(const Path& k, const Path& x)
{
    return ito_integral(k, x);
}

Path rs_integral_parts(const Path& k, const Path& x)
{
    require_same_grid(k.grid(), x.grid(), "rs_integral_parts");
    std::vector<double> out(k.size(), 0.0);
    const double start = k[0] * x[0];
    double correction = 0.0;
    for (std::size_t j = 1; j < k.size(); ++j) {
        correction += x[j] * (k[j] - k[j - 1]);
        out[j] = k[j] * x[j] - start - correction;
    }
    return Path(k.grid(), std::move(out));
}

QvClock::QvClock(const Path& k) : grid_(k.grid()), g_(k.size(), 0.0)
{
    const double dt = grid_.dt();
    for (std::size_t i = 0; i + 1 < k.size(); ++i)
        g_[i + 1] = g_[i] + k[i] * k[i] * dt;
}

double QvClock::inverse(double u) const
{
    if (u <= 0.0)
        return grid_.t_start();
    if (u >= total())
        return grid_.node(std::distance(g_.begin(), std::lower_bound(g_.begin(), g_.end(), total())));
    // First node with g >= u; the cell before it has g strictly increasing.
    const auto it = std::lower_bound(g_.begin(), g_.end(), u);
    const auto j = static_cast<std::size_t>(std::distance(g_.begin(), it));
    const double g0 = g_[j - 1];
    const double g1 = g_[j];
    const double w = (u - g0) / (g1 - g0);
    return grid_.node(j - 1) + w * grid_.dt();
}

QvClock qv_clock(const Path& k)
{
    return QvClock(k);
}

Path doleans_exp(const Path& w)
{
    std::vector<double> out(w.size());
    const double t0 = w.grid().t_start();
    for (std::size_t i = 0; i < w.size(); ++i)
        out[i] = std::exp(w[i] - w[0] - 0.5 * (w.grid().node(i) - t0));
    return Path(w.grid(), std::move(out));
}

ProgCfsReport check_progcfs_conditions(const Path& k, const Path& h, double k_bar)
{
    ProgCfsReport r;
    if (!k.grid().matches(h.grid()))
        return r;
    const double dt = k.grid().dt();
    for (std::size_t i = 0; i < k.size(); ++i)
        if (k[i] == 0.0)
            r.k_nonvanishing = false;
    for (std::size_t i = 0; i + 1 < k.size(); ++i) {
        const double k2 = k[i] * k[i];
        r.int_k2 += k2 * dt;
        r.int_inv_k2 += dt / k2;
        r.int_h2_inv_k2 += h[i] * h[i] * dt / k2;
    }
    r.qv_bounded = r.int_k2 <= k_bar * (1.0 + 1e-12);
    r.integrands_finite = r.k_nonvanishing && std::isfinite(r.int_inv_k2) && std::isfinite(r.int_h2_inv_k2);
    return r;
}

} // namespace cfs
