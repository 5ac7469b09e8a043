#include "cfs/smallball.hpp"

#include "cfs/gaussian.hpp"
#include "cfs/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <sstream>
#include <thread>

namespace cfs {

namespace {

using RepBody = std::function<void(std::uint64_t rep, std::vector<std::uint64_t>& hits)>;

/// Runs replications [0, reps) on contiguous chunks, one per worker, and sums the hit counts.
/// make_body is called once per worker so each gets its own buffers.
std::vector<std::uint64_t> run_replications(std::uint64_t reps, unsigned workers, std::size_t n_counts,
                                            const std::function<RepBody()>& make_body)
{
    const auto n_workers = static_cast<unsigned>(std::clamp<std::uint64_t>(workers, 1, std::max<std::uint64_t>(reps, 1)));
    std::vector<std::vector<std::uint64_t>> partial(n_workers, std::vector<std::uint64_t>(n_counts, 0));
    std::vector<std::exception_ptr> errors(n_workers);

    auto work = [&](unsigned w) {
        try {
            const std::uint64_t begin = reps * w / n_workers;
            const std::uint64_t end = reps * (w + 1) / n_workers;
            RepBody body = make_body();
            for (std::uint64_t r = begin; r < end; ++r)
                body(r, partial[w]);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };

    if (n_workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w)
            threads.emplace_back(work, w);
        for (auto& t : threads)
            t.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    std::vector<std::uint64_t> total(n_counts, 0);
    for (const auto& p : partial)
        for (std::size_t i = 0; i < n_counts; ++i)
            total[i] += p[i];
    return total;
}

double normal_cdf_diff(double lo, double hi) noexcept
{
    // Phi(hi) - Phi(lo) for 0 <= lo <= hi without cancellation.
    return 0.5 * (std::erfc(lo / std::numbers::sqrt2) - std::erfc(hi / std::numbers::sqrt2));
}

} // namespace

void check_query(const ConditioningContext& ctx, const SmallBallQuery& q)
{
    if (!(q.epsilon > 0.0) || std::isnan(q.epsilon))
        throw Error(ErrorCode::BadQuery, "tube radius epsilon must be positive");
    if (q.node != ctx.node) {
        std::ostringstream os;
        os << "query restarts at node " << q.node << " but the context was taken at node " << ctx.node;
        throw Error(ErrorCode::IncompatibleContext, os.str());
    }
    if (!q.target.grid().matches(ctx.tail_grid()))
        throw Error(ErrorCode::BadQuery, "target must live on the tail grid [t_restart, T]");
    if (q.target.front() != 0.0)
        throw Error(ErrorCode::BadQuery, "target must start at 0 at the restart time");
}

double bridge_stay_probability(double d0, double d1, double eps, double var) noexcept
{
    if (!(var > 0.0))
        return 1.0;
    const double up = 2.0 * (eps - d0) * (eps - d1) / var;
    const double down = 2.0 * (eps + d0) * (eps + d1) / var;
    if (std::min(up, down) > 40.0)
        return 1.0;

    // Images in the strip (-eps, eps) of width w = 2 eps, relative to the free bridge density.
    const double w = 2.0 * eps;
    const double diff = d1 - d0;
    const double sum = d1 + d0 + 2.0 * eps;
    const double base = diff * diff;
    auto direct = [&](double k) {
        const double a = diff + 2.0 * k * w;
        return std::exp(-(a * a - base) / (2.0 * var));
    };
    auto mirrored = [&](double k) {
        const double a = sum + 2.0 * k * w;
        return std::exp(-(a * a - base) / (2.0 * var));
    };
    double p = direct(0.0) - mirrored(0.0);
    for (int k = 1; k < 10000; ++k) {
        const double terms = direct(k) + direct(-k) - mirrored(k) - mirrored(-k);
        p += terms;
        const double size = std::max({direct(k), direct(-k), mirrored(k), mirrored(-k)});
        if (size < 1e-18)
            break;
    }
    return std::clamp(p, 0.0, 1.0);
}

bool tube_hit(std::span<const double> rel, std::span<const double> f, double eps, std::span<const double> cell_sigma,
              double dt, const RngStream& cell_uniforms)
{
    double prev = rel[0] - f[0];
    if (!(std::abs(prev) < eps))
        return false;
    const bool correct = !cell_sigma.empty();
    for (std::size_t i = 1; i < rel.size(); ++i) {
        const double d = rel[i] - f[i];
        if (!(std::abs(d) < eps))
            return false;
        if (correct) {
            const double s = cell_sigma[i - 1];
            const double p = bridge_stay_probability(prev, d, eps, s * s * dt);
            if (p < 1.0 && cell_uniforms.uniform_at(i - 1) >= p)
                return false;
        }
        prev = d;
    }
    return true;
}

std::string_view to_string(ZeroReason r)
{
    return r == ZeroReason::Positivity ? "POSITIVITY" : "ENDPOINT_PIN";
}

std::optional<AnalyticZero> detect_analytic_zero(const ModelSpec& spec, const ConditioningContext& ctx,
                                                 const SmallBallQuery& q)
{
    const auto f = q.target.values();
    if (is_positive_model(spec)) {
        for (std::size_t i = 0; i < f.size(); ++i)
            if (ctx.z_start + f[i] + q.epsilon <= 0.0) {
                std::ostringstream os;
                os << "Z > 0 but the tube needs Z(t) < Z(t_restart) + f(t) + eps = " << ctx.z_start + f[i] + q.epsilon
                   << " at t = " << q.target.grid().node(i);
                return AnalyticZero{ZeroReason::Positivity, os.str()};
            }
    }
    if (spec.tag() == ModelTag::BridgeCe) {
        const double pinned = ctx.terminal - ctx.b_state;
        if (std::abs(f.back() - pinned) >= q.epsilon) {
            std::ostringstream os;
            os << "Z(T) - Z(t_restart) is pinned to B_T - B_t = " << pinned << ", |f(T) - pinned| = "
               << std::abs(f.back() - pinned) << " >= eps";
            return AnalyticZero{ZeroReason::EndpointPin, os.str()};
        }
    }
    return std::nullopt;
}

std::vector<Estimate> estimate_smallball_batch(const ModelSpec& spec, const ConditioningContext& ctx,
                                               std::span<const SmallBallQuery> queries, std::uint64_t reps,
                                               const RngStream& rng, const EstimatorOptions& opts)
{
    check_context(spec, ctx);
    if (reps == 0)
        throw Error(ErrorCode::ZeroReps, "at least one replication is needed");
    if (queries.empty())
        return {};
    const ConditioningMode mode = queries.front().mode;
    for (const auto& q : queries) {
        check_query(ctx, q);
        if (q.mode != mode)
            throw Error(ErrorCode::BadQuery, "batched queries must share one conditioning mode");
    }

    const double dt = ctx.grid.dt();
    const auto hits = run_replications(reps, opts.workers, queries.size(), [&]() -> RepBody {
        return [&, c = Continuation{}](std::uint64_t r, std::vector<std::uint64_t>& counts) mutable {
            RngStream s = rng.substream(r);
            continue_into(ctx, mode, s, c);
            const std::span<const double> sigma =
                opts.bridge_correction ? std::span<const double>(c.cell_sigma) : std::span<const double>{};
            for (std::size_t qi = 0; qi < queries.size(); ++qi)
                if (tube_hit(c.rel, queries[qi].target.values(), queries[qi].epsilon, sigma, dt, s))
                    ++counts[qi];
        };
    });

    std::vector<Estimate> out;
    out.reserve(queries.size());
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        Estimate e = Estimate::from_counts(hits[qi], reps, opts.z);
        if (auto zero = detect_analytic_zero(spec, ctx, queries[qi])) {
            e.classification = Classification::AnalyticZero;
            e.reason = std::string(to_string(zero->reason)) + ": " + zero->detail;
        }
        out.push_back(std::move(e));
    }
    return out;
}

Estimate estimate_smallball(const ModelSpec& spec, const ConditioningContext& ctx, const SmallBallQuery& q,
                            std::uint64_t reps, const RngStream& rng, const EstimatorOptions& opts)
{
    return estimate_smallball_batch(spec, ctx, std::span<const SmallBallQuery>(&q, 1), reps, rng, opts).front();
}

Estimate estimate_tube(const PathSampler& sampler, const Path& target, double epsilon, std::uint64_t reps,
                       const RngStream& rng, const EstimatorOptions& opts)
{
    if (!(epsilon > 0.0))
        throw Error(ErrorCode::BadQuery, "tube radius epsilon must be positive");
    if (target.front() != 0.0)
        throw Error(ErrorCode::BadQuery, "target must start at 0");
    if (reps == 0)
        throw Error(ErrorCode::ZeroReps, "at least one replication is needed");
    const double dt = target.grid().dt();
    const auto hits = run_replications(reps, opts.workers, 1, [&]() -> RepBody {
        return [&, rel = std::vector<double>{}, sig = std::vector<double>{}](std::uint64_t r,
                                                                            std::vector<std::uint64_t>& counts) mutable {
            RngStream s = rng.substream(r);
            sampler(s, rel, sig);
            if (rel.size() != target.size())
                throw Error(ErrorCode::GridMismatch, "sampler output does not match the target grid");
            const std::span<const double> sigma =
                opts.bridge_correction ? std::span<const double>(sig) : std::span<const double>{};
            if (tube_hit(rel, target.values(), epsilon, sigma, dt, s))
                ++counts[0];
        };
    });
    return Estimate::from_counts(hits[0], reps, opts.z);
}

double brownian_smallball_series(double k_total, double eps)
{
    if (!(k_total >= 0.0) || !(eps > 0.0) || std::isnan(eps))
        throw Error(ErrorCode::BadParams, "small-ball series needs K >= 0 and eps > 0");
    if (k_total == 0.0 || std::isinf(eps))
        return 1.0;
    constexpr double pi = std::numbers::pi;
    const double x = pi * pi * k_total / (8.0 * eps * eps);
    double p = 0.0;
    if (x >= 0.25) {
        // (4/pi) sum_n (-1)^n / (2n+1) exp(-(2n+1)^2 x)
        for (int n = 0;; ++n) {
            const double m = 2.0 * n + 1.0;
            const double term = 4.0 / pi / m * std::exp(-m * m * x);
            p += (n % 2 == 0) ? term : -term;
            if (term < 1e-15)
                break;
        }
    } else {
        // Same law by reflection in the dual form, fast when eps^2 >> K:
        // sum_k (-1)^k [Phi((2k+1)a) - Phi((2k-1)a)], a = eps / sqrt(K).
        const double a = eps / std::sqrt(k_total);
        p = std::erf(a / std::numbers::sqrt2);
        for (int k = 1;; ++k) {
            const double term = 2.0 * normal_cdf_diff((2.0 * k - 1.0) * a, (2.0 * k + 1.0) * a);
            p += (k % 2 == 0) ? term : -term;
            if (term < 1e-15)
                break;
        }
    }
    return std::clamp(p, 0.0, 1.0);
}

Estimate timechanged_smallball(const Path& k, const Path& f, double eps, std::uint64_t reps, const RngStream& rng,
                               const EstimatorOptions& opts)
{
    require_same_grid(k.grid(), f.grid(), "timechanged_smallball");
    const QvClock clock(k);
    if (!(clock.total() > 0.0))
        throw Error(ErrorCode::DegenerateClock, "k vanishes on the whole grid: quadratic variation K = 0");

    const TimeGrid ugrid = make_grid(0.0, clock.total(), k.grid().n_steps());
    std::vector<double> fu(ugrid.size());
    for (std::size_t i = 0; i < ugrid.size(); ++i)
        fu[i] = f.interpolate(clock.inverse(ugrid.node(i)));
    fu[0] = f.front();
    const Path target(ugrid, std::move(fu));

    const PathSampler sampler = [&](RngStream& s, std::vector<double>& rel, std::vector<double>& sig) {
        rel.resize(ugrid.size());
        sig.assign(ugrid.n_steps(), 1.0);
        fill_brownian(ugrid, s, rel);
    };
    return estimate_tube(sampler, target, eps, reps, rng, opts);
}

} // namespace cfs
