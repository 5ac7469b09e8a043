#pragma once

#include "cfs/core.hpp"
#include "cfs/models.hpp"
#include "cfs/rng.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cfs {

/// Tube around f on [t_restart, T]: sup |Z(t) - Z(t_restart) - f(t)| < epsilon.
struct SmallBallQuery {
    std::size_t node = 0; ///< restart node on the model grid
    Path target;          ///< f on the tail grid, f(t_restart) = 0
    double epsilon = 1.0;
    ConditioningMode mode = ConditioningMode::Hold;
};

/// Throws BadQuery unless epsilon > 0, f(t_restart) = 0 and the target lives on the context's tail grid.
void check_query(const ConditioningContext& ctx, const SmallBallQuery& q);

struct EstimatorOptions {
    unsigned workers = 1;
    /// Between nodes, treat Z as a Brownian bridge with the cell's local scale and count a
    /// replication only if that bridge also stays in the tube. Off gives the plain node-wise sup.
    bool bridge_correction = true;
    double z = 1.96;
};

/// Probability that a Brownian bridge with variance `var` over the cell, from d0 to d1, stays in (-eps, eps).
double bridge_stay_probability(double d0, double d1, double eps, double var) noexcept;

/// Node-wise tube test of a relative path against f, plus the per-cell bridge test when cell_sigma
/// is non-empty. Cell i uses the uniform cell_uniforms.uniform_at(i).
bool tube_hit(std::span<const double> rel, std::span<const double> f, double eps, std::span<const double> cell_sigma,
              double dt, const RngStream& cell_uniforms);

enum class ZeroReason { Positivity, EndpointPin };
std::string_view to_string(ZeroReason r);

struct AnalyticZero {
    ZeroReason reason;
    std::string detail;
};

/// A reason when the tube event is empty on every path: positive models whose tube would need
/// Z(t) <= 0, and the bridge model whose endpoint is pinned outside the tube.
std::optional<AnalyticZero> detect_analytic_zero(const ModelSpec& spec, const ConditioningContext& ctx,
                                                 const SmallBallQuery& q);

/// Fraction of continuations from ctx inside the tube. Replication r uses rng.substream(r).
Estimate estimate_smallball(const ModelSpec& spec, const ConditioningContext& ctx, const SmallBallQuery& q,
                            std::uint64_t reps, const RngStream& rng, const EstimatorOptions& opts = {});

/// Several queries sharing one restart node and mode, all evaluated on the same continuations.
std::vector<Estimate> estimate_smallball_batch(const ModelSpec& spec, const ConditioningContext& ctx,
                                               std::span<const SmallBallQuery> queries, std::uint64_t reps,
                                               const RngStream& rng, const EstimatorOptions& opts = {});

/// Fills rel (n_tail + 1 values, rel[0] = 0) and cell_sigma for one replication.
using PathSampler = std::function<void(RngStream&, std::vector<double>& rel, std::vector<double>& cell_sigma)>;

/// Tube estimate for an arbitrary sampler on `grid`.
Estimate estimate_tube(const PathSampler& sampler, const Path& target, double epsilon, std::uint64_t reps,
                       const RngStream& rng, const EstimatorOptions& opts = {});

/// P[sup_{[0,K]} |B| < eps] by the reflection series.
double brownian_smallball_series(double k_total, double eps);

/// Tube probability of int k dW around f through the time change u = g(t): simulate B on [0, K]
/// against f(g^{-1}(u)).
Estimate timechanged_smallball(const Path& k, const Path& f, double eps, std::uint64_t reps, const RngStream& rng,
                               const EstimatorOptions& opts = {});

} // namespace cfs
