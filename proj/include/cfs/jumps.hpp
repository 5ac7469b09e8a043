#pragma once

#include "cfs/core.hpp"
#include "cfs/rng.hpp"

#include <span>
#include <vector>

namespace cfs {

enum class SubordinatorKind { CompoundPoissonExp, Gamma };

/// Driftless increasing Levy process with L(0) = 0.
struct SubordinatorSpec {
    SubordinatorKind kind = SubordinatorKind::CompoundPoissonExp;
    double jump_rate = 1.0;  ///< compound Poisson: jumps per unit time (eta)
    double jump_theta = 1.0; ///< compound Poisson: exponential jump sizes with mean 1/theta
    double shape = 1.0;      ///< gamma: L(1) ~ Gamma(shape, rate)
    double rate = 1.0;
};

/// V(t) = int_{-inf}^t e^{-lambda(t-s)} dL(lambda s)
struct BnsSpec {
    SubordinatorSpec subordinator;
    double lambda = 1.0;
    /// Stationary start integrates over [-window, 0]; 0 selects 20 / lambda.
    double window = 0.0;

    double effective_window() const noexcept { return window > 0.0 ? window : 20.0 / lambda; }
};

/// Continuous-time Markov chain with per-state volatility levels.
struct CtmcSpec {
    std::vector<std::vector<double>> generator;
    std::vector<double> sigma;
    std::size_t initial_state = 0;

    std::size_t n_states() const noexcept { return sigma.size(); }
};

void validate(const SubordinatorSpec& spec);
void validate(const BnsSpec& spec);
void validate(const CtmcSpec& spec);

struct JumpEvent {
    double time;
    double size;
};

Path gen_subordinator(const TimeGrid& grid, const SubordinatorSpec& spec, RngStream& rng);

/// Jumps of s -> L(lambda s) on (t_from, t_to], sorted by time. Compound Poisson jumps are exact;
/// gamma increments are drawn per cell of width `cell` and placed at a uniform time inside it.
std::vector<JumpEvent> sample_bns_jumps(double t_from, double t_to, const BnsSpec& spec, double cell,
                                        RngStream& rng);

/// Draw of V(0) from the stationary law, truncated to the window [-M, 0].
double sample_bns_stationary(const BnsSpec& spec, double cell, RngStream& rng);

/// V on the grid from V(t_0) = v_start and the jumps after t_0:
///   V(t_i) = e^{-lambda (t_i - t_0)} v_start + sum_{s_k <= t_i} J_k e^{-lambda (t_i - s_k)}.
/// The decay term is evaluated directly so V(t) >= e^{-lambda (t - t_0)} v_start holds exactly.
void bns_from_jumps(const TimeGrid& grid, double lambda, double v_start, std::span<const JumpEvent> jumps,
                    std::span<double> out);
Path bns_from_jumps(const TimeGrid& grid, double lambda, double v_start, std::span<const JumpEvent> jumps);

Path gen_bns_vol(const TimeGrid& grid, const BnsSpec& spec, RngStream& rng);

/// Chain state at every node with exact exponential holding times.
void gen_ctmc_states(const TimeGrid& grid, const CtmcSpec& spec, std::size_t start_state, RngStream& rng,
                     std::span<std::size_t> out);
Path gen_ctmc_vol(const TimeGrid& grid, const CtmcSpec& spec, RngStream& rng);

} // namespace cfs
