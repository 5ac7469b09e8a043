#include <doctest.h>

#include "cfs/gaussian.hpp"
#include "stats.hpp"

#include <Eigen/Dense>

#include <cmath>

using namespace cfs;
using namespace cfs::testing;

namespace {

template <class F>
ErrorCode code_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

double cholesky_residual(std::size_t n, double hurst)
{
    const auto grid = make_grid(0.0, 1.0, n);
    const FbmGenerator gen(grid, FbmSpec{hurst});
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd r(n, n);
    for (std::size_t j = 1; j <= n; ++j) {
        const auto row = gen.factor_row(j);
        for (std::size_t k = 0; k < j; ++k)
            l(j - 1, k) = row[k];
        for (std::size_t k = 1; k <= n; ++k)
            r(j - 1, k - 1) = fbm_covariance(grid.node(j), grid.node(k), hurst);
    }
    const Eigen::MatrixXd diff = l * l.transpose() - r;
    return diff.cwiseAbs().maxCoeff() / r.cwiseAbs().maxCoeff();
}

} // namespace

TEST_CASE("brownian paths start at zero and are deterministic")
{
    const auto grid = make_grid(0.0, 1.0, 64);
    for (std::uint64_t s = 0; s < 20; ++s) {
        RngStream a(s, 1), b(s, 1);
        const Path p = gen_brownian(grid, a);
        const Path q = gen_brownian(grid, b);
        CHECK(p[0] == 0.0);
        CHECK(std::equal(p.values().begin(), p.values().end(), q.values().begin()));
        RngStream c(s, 2);
        CHECK(gen_brownian_alt(grid, c)[0] == 0.0);
    }
}

TEST_CASE("brownian terminal variance")
{
    const auto grid = make_grid(0.0, 1.0, 16);
    RngStream base(17, 0);
    std::vector<double> wt(100000);
    for (std::size_t r = 0; r < wt.size(); ++r) {
        RngStream s = base.substream(r);
        wt[r] = gen_brownian(grid, s).back();
    }
    CHECK(std::abs(variance(wt) - 1.0) < 0.02);
}

TEST_CASE("midpoint refinement construction")
{
    CHECK(code_of([] {
              RngStream r(1, 1);
              gen_brownian_alt(make_grid(0.0, 1.0, 3), r);
          }) == ErrorCode::NotPowerOfTwo);

    const auto grid = make_grid(0.0, 1.0, 16);
    RngStream base(21, 0);
    const std::size_t n = 100000;
    std::vector<double> a(n), b(n), prod(n);
    for (std::size_t r = 0; r < n; ++r) {
        RngStream s = base.substream(r);
        const Path w = gen_brownian_alt(grid, s);
        a[r] = w[4];
        b[r] = w[12];
        prod[r] = a[r] * b[r];
    }
    CHECK(std::abs(mean(prod) - 0.25) < 4.0 * std_error(prod));
    CHECK(std::abs(variance(b) - 0.75) < 4.0 * 0.75 * std::sqrt(2.0 / n));
}

TEST_CASE("both brownian constructions agree in law")
{
    const auto grid = make_grid(0.0, 1.0, 64);
    RngStream base(23, 0);
    const std::size_t n = 10000;
    std::vector<double> mid_a(n), end_a(n), mid_b(n), end_b(n);
    for (std::size_t r = 0; r < n; ++r) {
        RngStream s = base.substream(r), t = base.substream(r + n);
        const Path a = gen_brownian(grid, s);
        const Path b = gen_brownian_alt(grid, t);
        mid_a[r] = a[32];
        end_a[r] = a[64];
        mid_b[r] = b[32];
        end_b[r] = b[64];
    }
    CHECK(ks_statistic(mid_a, mid_b) < ks_critical_1pct(n, n));
    CHECK(ks_statistic(end_a, end_b) < ks_critical_1pct(n, n));
}

TEST_CASE("fbm cholesky factor reproduces the covariance")
{
    for (double h : {0.25, 0.5, 0.75})
        CHECK(cholesky_residual(256, h) <= 1e-10);
}

TEST_CASE("fbm parameter checks")
{
    const auto grid = make_grid(0.0, 1.0, 8);
    RngStream rng(1, 1);
    CHECK(code_of([&] { gen_fbm(grid, FbmSpec{0.0}, rng); }) == ErrorCode::HurstOutOfRange);
    CHECK(code_of([&] { gen_fbm(grid, FbmSpec{1.0}, rng); }) == ErrorCode::HurstOutOfRange);
    CHECK(code_of([&] { gen_fbm(make_grid(0.5, 1.0, 8), FbmSpec{0.5}, rng); }) == ErrorCode::BadParams);
}

TEST_CASE("fbm moments")
{
    const auto grid = make_grid(0.0, 1.0, 8);
    const FbmGenerator g75(grid, FbmSpec{0.75});
    const FbmGenerator g25(grid, FbmSpec{0.25});
    RngStream base(29, 0);
    const std::size_t n = 100000;
    std::vector<double> end(n), inc1(n), inc2(n);
    for (std::size_t r = 0; r < n; ++r) {
        RngStream s = base.substream(r);
        end[r] = g75.sample(s).back();
        const Path p = g25.sample(s);
        inc1[r] = p[4] - p[3];
        inc2[r] = p[5] - p[4];
    }
    CHECK(std::abs(variance(end) - 1.0) < 4.0 * std::sqrt(2.0 / n));
    const double rho = std::pow(2.0, 2.0 * 0.25 - 1.0) - 1.0;
    CHECK(std::abs(correlation(inc1, inc2) - rho) < 4.0 * (1.0 - rho * rho) / std::sqrt(double(n)));
}

TEST_CASE("fbm with h = 1/2 is brownian in law")
{
    const auto grid = make_grid(0.0, 1.0, 32);
    const FbmGenerator gen(grid, FbmSpec{0.5});
    RngStream base(31, 0);
    const std::size_t n = 10000;
    std::vector<double> a(n), b(n);
    for (std::size_t r = 0; r < n; ++r) {
        RngStream s = base.substream(r), t = base.substream(r + n);
        a[r] = gen.sample(s)[16];
        b[r] = gen_brownian(grid, t)[16];
    }
    CHECK(ks_statistic(a, b) < ks_critical_1pct(n, n));
}

TEST_CASE("fbm innovations determine the past exactly")
{
    const auto grid = make_grid(0.0, 1.0, 32);
    const FbmGenerator gen(grid, FbmSpec{0.3});
    RngStream rng(3, 3);
    std::vector<double> xi(gen.dimension());
    gen.draw_innovations(rng, xi);
    const Path full = gen.from_innovations(xi);
    for (std::size_t l = 10; l < xi.size(); ++l)
        xi[l] = rng.normal();
    const Path changed = gen.from_innovations(xi);
    for (std::size_t j = 0; j <= 10; ++j)
        CHECK(full[j] == changed[j]);
    CHECK(full[11] != changed[11]);
}

TEST_CASE("fou without noise decays deterministically")
{
    const auto grid = make_grid(0.0, 2.0, 50);
    RngStream rng(4, 4);
    const FouSpec spec{0.7, 1.3, 0.0, 0.8};
    const Path v = gen_fou(grid, spec, rng);
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(v[i] == spec.v0 * std::exp(-spec.alpha * grid.node(i)));
}

TEST_CASE("fou with h = 1/2 has the ornstein-uhlenbeck transition law")
{
    const auto grid = make_grid(0.0, 1.0, 256);
    const FouSpec spec{0.5, 2.0, 0.5, 0.3};
    const FbmGenerator gen(grid, FbmSpec{0.5});
    RngStream base(37, 0);
    std::vector<double> vt(10000);
    for (std::size_t r = 0; r < vt.size(); ++r) {
        RngStream s = base.substream(r);
        vt[r] = fou_from_fbm(gen.sample(s), spec).back();
    }
    const double m = spec.v0 * std::exp(-spec.alpha);
    const double sd = spec.sigma * std::sqrt((1.0 - std::exp(-2.0 * spec.alpha)) / (2.0 * spec.alpha));
    CHECK(ks_one_sample(vt, [&](double x) { return normal_cdf(x, m, sd); }) < 1.63 / std::sqrt(double(vt.size())));
}

TEST_CASE("fou by parts agrees with a direct kernel sum")
{
    // Strong mean reversion: only the recent fBm increments matter.
    const auto grid = make_grid(0.0, 1.0, 1024);
    const FouSpec spec{0.75, 50.0, 1.0, 0.0};
    const FbmGenerator gen(grid, FbmSpec{0.75});
    RngStream base(41, 0);
    std::vector<double> diff, level;
    for (std::size_t r = 0; r < 50; ++r) {
        RngStream s = base.substream(r);
        const Path b = gen.sample(s);
        const double by_parts = fou_from_fbm(b, spec).back();
        double direct = 0.0;
        for (std::size_t i = 0; i < grid.n_steps(); ++i) {
            const double mid = 0.5 * (grid.node(i) + grid.node(i + 1));
            direct += std::exp(-spec.alpha * (1.0 - mid)) * (b[i + 1] - b[i]);
        }
        diff.push_back(std::abs(by_parts - direct));
        level.push_back(direct);
    }
    CHECK(mean(diff) < 0.01 * std::sqrt(variance(level)));
}

TEST_CASE("bridge continuation moments")
{
    const auto grid = make_grid(0.0, 1.0, 16);
    RngStream base(43, 0);
    const std::size_t n = 100000;
    std::vector<double> mid(n), out(grid.size());
    for (std::size_t r = 0; r < n; ++r) {
        RngStream s = base.substream(r);
        fill_bridge(grid, 0.0, 1.0, s, out);
        REQUIRE(out.back() == 1.0);
        mid[r] = out[8];
    }
    CHECK(std::abs(mean(mid) - 0.5) < 4.0 * 0.5 / std::sqrt(double(n)));
    CHECK(std::abs(variance(mid) - 0.25) < 4.0 * 0.25 * std::sqrt(2.0 / n));
}

TEST_CASE("bridge continuation pins the endpoint bit-exactly")
{
    const auto grid = make_grid(0.0, 1.0, 64);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RngStream rng(seed, 9);
        const Path w = gen_brownian(grid, rng);
        const Path history = w.prefix(20);
        const double terminal = rng.normal() * 3.0;
        const Path tail = gen_bridge_continuation(history, terminal, grid.tail(20), rng);
        CHECK(tail.back() == terminal);
        CHECK(tail.front() == w[20]);
    }
    RngStream rng(1, 1);
    const Path w = gen_brownian(grid, rng);
    CHECK(code_of([&] { gen_bridge_continuation(w.prefix(20), 0.0, grid.tail(21), rng); }) ==
          ErrorCode::GridMismatch);
}
