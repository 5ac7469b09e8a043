#include "cfs/jumps.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cfs {

void validate(const SubordinatorSpec& spec)
{
    switch (spec.kind) {
    case SubordinatorKind::CompoundPoissonExp:
        // jump_rate = 0 is the degenerate (identically zero) subordinator.
        if (!(spec.jump_rate >= 0.0) || !std::isfinite(spec.jump_rate) || !(spec.jump_theta > 0.0))
            throw Error(ErrorCode::BadParams, "compound Poisson subordinator needs jump_rate >= 0 and theta > 0");
        break;
    case SubordinatorKind::Gamma:
        if (!(spec.shape > 0.0) || !(spec.rate > 0.0))
            throw Error(ErrorCode::BadParams, "gamma subordinator needs positive shape and rate");
        break;
    }
}

void validate(const BnsSpec& spec)
{
    validate(spec.subordinator);
    if (!(spec.lambda > 0.0) || !std::isfinite(spec.lambda))
        throw Error(ErrorCode::BadParams, "BNS decay rate lambda must be positive");
    if (spec.window < 0.0)
        throw Error(ErrorCode::BadParams, "BNS stationary window must be positive");
}

void validate(const CtmcSpec& spec)
{
    const std::size_t n = spec.n_states();
    if (n < 2)
        throw Error(ErrorCode::BadParams, "regime chain needs at least two states");
    if (spec.generator.size() != n)
        throw Error(ErrorCode::BadGenerator, "generator matrix size does not match the number of states");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = spec.generator[i];
        if (row.size() != n)
            throw Error(ErrorCode::BadGenerator, "generator matrix is not square");
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && !(row[j] >= 0.0))
                throw Error(ErrorCode::BadGenerator, "generator has a negative off-diagonal rate");
            sum += row[j];
        }
        if (!(std::abs(sum) <= 1e-12)) {
            std::ostringstream os;
            os << "generator row " << i << " sums to " << sum << ", not 0";
            throw Error(ErrorCode::BadGenerator, os.str());
        }
        if (!(spec.sigma[i] > 0.0))
            throw Error(ErrorCode::BadParams, "regime volatility levels must be positive");
    }
    if (spec.initial_state >= n)
        throw Error(ErrorCode::BadParams, "initial regime out of range");
}

Path gen_subordinator(const TimeGrid& grid, const SubordinatorSpec& spec, RngStream& rng)
{
    validate(spec);
    std::vector<double> out(grid.size(), 0.0);
    if (spec.kind == SubordinatorKind::Gamma) {
        for (std::size_t i = 1; i < grid.size(); ++i)
            out[i] = out[i - 1] + rng.gamma(spec.shape * grid.dt(), 1.0 / spec.rate);
        return Path(grid, std::move(out));
    }

    const std::uint64_t count = rng.poisson(spec.jump_rate * grid.span());
    std::vector<JumpEvent> jumps(count);
    for (auto& j : jumps) {
        j.time = grid.t_start() + grid.span() * rng.uniform();
        j.size = rng.exponential(spec.jump_theta);
    }
    std::sort(jumps.begin(), jumps.end(), [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });

    double level = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.node(i);
        while (k < jumps.size() && jumps[k].time <= t)
            level += jumps[k++].size;
        out[i] = level;
    }
    return Path(grid, std::move(out));
}

std::vector<JumpEvent> sample_bns_jumps(double t_from, double t_to, const BnsSpec& spec, double cell,
                                        RngStream& rng)
{
    std::vector<JumpEvent> jumps;
    const double span = t_to - t_from;
    if (!(span > 0.0))
        return jumps;
    const SubordinatorSpec& sub = spec.subordinator;

    if (sub.kind == SubordinatorKind::CompoundPoissonExp) {
        // L(lambda s) jumps at rate lambda * eta in real time.
        const std::uint64_t count = rng.poisson(spec.lambda * sub.jump_rate * span);
        jumps.resize(count);
        for (auto& j : jumps) {
            j.time = t_from + span * rng.uniform();
            j.size = rng.exponential(sub.jump_theta);
        }
        std::sort(jumps.begin(), jumps.end(), [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });
        return jumps;
    }

    const auto cells = static_cast<std::size_t>(std::ceil(span / cell - 1e-9));
    const double width = span / static_cast<double>(cells);
    jumps.reserve(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        const double size = rng.gamma(sub.shape * spec.lambda * width, 1.0 / sub.rate);
        const double time = t_from + width * (static_cast<double>(c) + rng.uniform());
        jumps.push_back({std::min(time, t_to), size});
    }
    return jumps;
}

double sample_bns_stationary(const BnsSpec& spec, double cell, RngStream& rng)
{
    const double window = spec.effective_window();
    const auto jumps = sample_bns_jumps(-window, 0.0, spec, cell, rng);
    double v = 0.0;
    for (const auto& j : jumps)
        v += j.size * std::exp(spec.lambda * j.time);
    return v;
}

void bns_from_jumps(const TimeGrid& grid, double lambda, double v_start, std::span<const JumpEvent> jumps,
                    std::span<double> out)
{
    const double step_decay = std::exp(-lambda * grid.dt());
    const double t0 = grid.t_start();
    double jump_part = 0.0;
    std::size_t k = 0;
    out[0] = v_start;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double t = grid.node(i);
        jump_part *= step_decay;
        while (k < jumps.size() && jumps[k].time <= t) {
            jump_part += jumps[k].size * std::exp(-lambda * (t - jumps[k].time));
            ++k;
        }
        out[i] = std::exp(-lambda * (t - t0)) * v_start + jump_part;
    }
}

Path bns_from_jumps(const TimeGrid& grid, double lambda, double v_start, std::span<const JumpEvent> jumps)
{
    std::vector<double> out(grid.size());
    bns_from_jumps(grid, lambda, v_start, jumps, out);
    return Path(grid, std::move(out));
}

Path gen_bns_vol(const TimeGrid& grid, const BnsSpec& spec, RngStream& rng)
{
    validate(spec);
    if (grid.t_start() != 0.0)
        throw Error(ErrorCode::BadParams, "BNS volatility grids must start at 0");
    const double v0 = sample_bns_stationary(spec, grid.dt(), rng);
    const auto jumps = sample_bns_jumps(grid.t_start(), grid.t_end(), spec, grid.dt(), rng);
    return bns_from_jumps(grid, spec.lambda, v0, jumps);
}

void gen_ctmc_states(const TimeGrid& grid, const CtmcSpec& spec, std::size_t start_state, RngStream& rng,
                     std::span<std::size_t> out)
{
    const auto& q = spec.generator;
    std::size_t state = start_state;
    auto holding = [&](std::size_t s) {
        const double rate = -q[s][s];
        return rate > 0.0 ? rng.exponential(rate) : INFINITY;
    };
    double next_jump = grid.t_start() + holding(state);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.node(i);
        while (next_jump <= t) {
            const double rate = -q[state][state];
            double u = rng.uniform() * rate;
            std::size_t target = state;
            for (std::size_t j = 0; j < q.size(); ++j) {
                if (j == state || q[state][j] <= 0.0)
                    continue;
                target = j;
                u -= q[state][j];
                if (u < 0.0)
                    break;
            }
            state = target;
            next_jump += holding(state);
        }
        out[i] = state;
    }
}

Path gen_ctmc_vol(const TimeGrid& grid, const CtmcSpec& spec, RngStream& rng)
{
    validate(spec);
    std::vector<std::size_t> states(grid.size());
    gen_ctmc_states(grid, spec, spec.initial_state, rng, states);
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = spec.sigma[states[i]];
    return Path(grid, std::move(out));
}

} // namespace cfs
