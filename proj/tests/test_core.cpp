#include <doctest.h>

#include "cfs/core.hpp"
#include "cfs/rng.hpp"

#include <cmath>
#include <limits>

using namespace cfs;

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

// Wilson score interval written out from the textbook formula.
std::pair<double, double> wilson_oracle(double k, double n, double z)
{
    const double p = k / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {centre - half, centre + half};
}

} // namespace

TEST_CASE("grid nodes")
{
    const auto g = make_grid(0.0, 1.0, 4);
    const std::vector<double> expected{0.0, 0.25, 0.5, 0.75, 1.0};
    CHECK(g.nodes() == expected);
    CHECK(g.size() == 5);
    CHECK(make_grid(0.0, 1.0, 1).nodes() == std::vector<double>{0.0, 1.0});
    CHECK(code_of([] { make_grid(0.5, 0.25, 4); }) == ErrorCode::NonPositiveSpan);
    CHECK(code_of([] { make_grid(0.0, 1.0, 0); }) == ErrorCode::ZeroSteps);
    CHECK(code_of([] { make_grid(0.0, std::nan(""), 4); }) == ErrorCode::NonPositiveSpan);
}

TEST_CASE("grid nodes strictly increase and end exactly at t_end")
{
    for (std::size_t n : {1u, 3u, 7u, 1000u, 2048u}) {
        const auto g = make_grid(0.3, 1.7, n);
        CHECK(g.node(0) == 0.3);
        CHECK(g.node(n) == 1.7);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(g.node(i) < g.node(i + 1));
    }
}

TEST_CASE("tail and index lookup")
{
    const auto g = make_grid(0.0, 1.0, 8);
    const auto t = g.tail(4);
    CHECK(t.t_start() == 0.5);
    CHECK(t.t_end() == 1.0);
    CHECK(t.n_steps() == 4);
    CHECK(t.dt() == doctest::Approx(g.dt()));
    CHECK(g.index_of(0.5) == 4);
    CHECK(g.index_of(0.51) == 4);
    CHECK(g.index_of(-3.0) == 0);
    CHECK(g.index_of(9.0) == 8);
    CHECK(code_of([&] { g.tail(8); }) == ErrorCode::GridMismatch);
}

TEST_CASE("path construction")
{
    const auto g = make_grid(0.0, 1.0, 2);
    CHECK(code_of([&] { Path(g, {0.0, 1.0}); }) == ErrorCode::GridMismatch);
    CHECK(code_of([&] { Path(g, {0.0, std::numeric_limits<double>::infinity(), 1.0}); }) == ErrorCode::NonFinite);
    const Path p(g, {0.0, 1.0, 4.0});
    CHECK(p.interpolate(0.25) == doctest::Approx(0.5));
    CHECK(p.interpolate(2.0) == 4.0);
    CHECK(p.suffix(1).values()[0] == 1.0);
    CHECK(p.suffix(1).grid().t_start() == 0.5);
    CHECK(p.prefix(1).size() == 2);
}

TEST_CASE("sup deviation")
{
    const auto g = make_grid(0.0, 1.0, 2);
    const Path f(g, {0.0, 0.25, -0.25});
    const Path shifted(g, {1.5, 1.75, 1.25});
    CHECK(sup_deviation(shifted, f, 1.5) == 0.0);
    CHECK(sup_deviation(Path::constant(g, 0.0), Path::constant(g, 0.0), 0.3) == doctest::Approx(0.3));
    CHECK(sup_deviation(Path(g, {0.0, 1.0, 0.0}), Path::constant(g, 0.0), 0.0) == 1.0);
    CHECK(code_of([&] { sup_deviation(f, Path::constant(make_grid(0.0, 2.0, 2), 0.0), 0.0); }) ==
          ErrorCode::GridMismatch);
}

TEST_CASE("sup deviation obeys the triangle inequality")
{
    const auto g = make_grid(0.0, 1.0, 64);
    RngStream rng(11, 0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(g.size()), b(g.size()), sum(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            a[i] = rng.normal();
            b[i] = rng.normal();
            sum[i] = a[i] + b[i];
        }
        const Path zero = Path::constant(g, 0.0);
        const double lhs = sup_deviation(Path(g, sum), zero, 0.0);
        const double rhs = sup_deviation(Path(g, a), zero, 0.0) + sup_deviation(Path(g, b), zero, 0.0);
        CHECK(lhs <= rhs);
    }
}

TEST_CASE("wilson interval examples")
{
    CHECK(wilson_interval(100, 100, 1.96).high == 1.0);
    const auto half = wilson_interval(50, 100, 1.96);
    CHECK(half.low == doctest::Approx(0.404).epsilon(1e-3));
    CHECK(half.high == doctest::Approx(0.596).epsilon(1e-3));
    const auto zero = wilson_interval(0, 1000, 1.96);
    CHECK(zero.low == 0.0);
    CHECK(zero.high == doctest::Approx(3.8416 / 1003.8416).epsilon(1e-9));
    CHECK(code_of([] { wilson_interval(0, 0); }) == ErrorCode::ZeroReps);
    CHECK(code_of([] { wilson_interval(5, 4); }) == ErrorCode::BadParams);
}

TEST_CASE("wilson interval matches the closed form and contains p_hat")
{
    for (std::uint64_t n : {1u, 7u, 100u, 12345u})
        for (std::uint64_t k = 0; k <= n; k += std::max<std::uint64_t>(1, n / 17)) {
            const auto ci = wilson_interval(k, n, 1.96);
            const auto [lo, hi] = wilson_oracle(double(k), double(n), 1.96);
            CHECK(ci.low == doctest::Approx(std::max(0.0, lo)).epsilon(1e-12));
            CHECK(ci.high == doctest::Approx(std::min(1.0, hi)).epsilon(1e-12));
            const double p = double(k) / double(n);
            CHECK(ci.low <= p);
            CHECK(p <= ci.high);
            CHECK(ci.low >= 0.0);
            CHECK(ci.high <= 1.0);
        }
}

TEST_CASE("wilson coverage by exact binomial enumeration")
{
    // Exact coverage of the nominal 95% interval at n = 100.
    const int n = 100;
    for (double p : {0.2, 0.5}) {
        double coverage = 0.0;
        for (int k = 0; k <= n; ++k) {
            const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                                   k * std::log(p) + (n - k) * std::log1p(-p);
            const auto ci = wilson_interval(k, n, 1.96);
            if (ci.low <= p && p <= ci.high)
                coverage += std::exp(log_pmf);
        }
        CHECK(coverage > 0.92);
        CHECK(coverage < 0.98);
    }
}

TEST_CASE("estimate invariants and classification")
{
    const auto e = Estimate::from_counts(3, 1000);
    CHECK(e.p_hat == 0.003);
    CHECK(e.classification == Classification::Positive);
    CHECK(e.ci_low > 0.0);
    const auto z = Estimate::from_counts(0, 1000);
    CHECK(z.classification == Classification::ZeroConsistent);
    CHECK(z.ci_low == 0.0);
    CHECK(z.ci_high > 0.0);
    for (auto c : {Classification::Positive, Classification::ZeroConsistent, Classification::AnalyticZero})
        CHECK(parse_classification(to_string(c)) == c);
    CHECK(to_string(Classification::AnalyticZero) == "ANALYTIC_ZERO");
}

TEST_CASE("number formatting round-trips")
{
    RngStream rng(5, 5);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.normal() * std::pow(10.0, static_cast<int>(rng.uniform() * 40) - 20);
        CHECK(parse_real(format_real(x), "x") == x);
        CHECK(parse_real(format_short(x), "x") == x);
    }
    CHECK(format_real(0.1) == "0.10000000000000001");
    CHECK(format_short(0.1) == "0.1");
    CHECK(code_of([] { parse_real("1.5x", "eps"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_count("-3", "reps"); }) == ErrorCode::BadConfig);
    CHECK(parse_count(" 42 ", "reps") == 42);
}

TEST_CASE("numerical errors are flagged")
{
    CHECK(Error(ErrorCode::CovarianceNotPD, "x").numerical());
    CHECK(Error(ErrorCode::NonFinite, "x").numerical());
    CHECK_FALSE(Error(ErrorCode::BadConfig, "x").numerical());
    CHECK_FALSE(Error(ErrorCode::BadQuery, "x").numerical());
}
