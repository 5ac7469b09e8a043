#pragma once

#include "cfs/core.hpp"
#include "cfs/gaussian.hpp"
#include "cfs/jumps.hpp"
#include "cfs/rng.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cfs {

enum class ModelTag {
    MixedFbm,
    WienerIntegral,
    SvPrice,
    BnsPrice,
    ComteRenaultPrice,
    RegimePrice,
    SdePrice,
    DoleansCe,
    BridgeCe,
    ExpDriftPrice,
};

std::string_view to_string(ModelTag tag);
ModelTag parse_model_tag(std::string_view s);
/// All tags in alphabetical order of their names.
std::vector<ModelTag> all_model_tags();

/// Hold keeps the whole (H, k) path of the context and redraws only the integrator;
/// Redraw also resimulates the drivers of (H, k) after the restart time.
enum class ConditioningMode { Hold, Redraw };

std::string_view to_string(ConditioningMode mode);
ConditioningMode parse_conditioning_mode(std::string_view s);

/// Z = fbm_weight * B^h + bm_weight * W with B^h independent of W.
struct MixedFbmParams {
    double hurst = 0.75;
    double fbm_weight = 1.0;
    double bm_weight = 1.0;
};

/// Z = H + int k dW with k(t) = (k_level + k_slope t) exp(k_noise Y(t)), H(t) = h_drift t + h_noise Y(t),
/// Y a Brownian motion independent of W.
struct WienerIntegralParams {
    double k_level = 1.0;
    double k_slope = 0.0;
    double k_noise = 0.0;
    double h_drift = 0.0;
    double h_noise = 0.0;
};

enum class SvVolKind { Constant, Heston };

/// dP = P (mu dt + rho g dB + sqrt(1 - rho^2) g dW), g = sigma or sqrt of a CIR variance driven by B.
struct SvPriceParams {
    double p0 = 1.0;
    double mu = 0.05;
    double rho = -0.5;
    SvVolKind vol = SvVolKind::Heston;
    double sigma = 0.2;
    double kappa = 2.0;
    double theta = 0.04;
    double xi = 0.3;
    double v0 = 0.04;
};

/// dP = P (mu dt + sqrt(V) dW) with V the stationary Levy-driven OU process.
struct BnsPriceParams {
    double p0 = 1.0;
    double mu = 0.05;
    BnsSpec bns{SubordinatorSpec{SubordinatorKind::CompoundPoissonExp, 2.0, 50.0, 1.0, 1.0}, 1.0, 0.0};
};

/// dP = P (mu dt + e^V dW) with V a fractional OU process.
struct ComteRenaultParams {
    double p0 = 1.0;
    double mu = 0.05;
    FouSpec fou{0.75, 1.0, 0.3, -1.6094379124341003};
};

/// dP = P (mu dt + sigma_{state} dW) with a Markov chain state.
struct RegimePriceParams {
    double p0 = 1.0;
    double mu = 0.05;
    CtmcSpec chain{{{-1.0, 1.0}, {1.0, -1.0}}, {0.1, 0.3}, 0};
};

/// dP = mu P dt + s(P) P dW, s(x) = sigma_lo + (sigma_hi - sigma_lo) x / (x + p0).
/// Bounds |mu(t,x)| <= mu_bar x and x / sigma_bar <= |sigma(t,x)| <= sigma_bar x;
/// a bound of 0 is derived from the coefficients.
struct SdePriceParams {
    double p0 = 1.0;
    double mu = 0.05;
    double sigma_lo = 0.2;
    double sigma_hi = 0.4;
    double mu_bar = 0.0;
    double sigma_bar = 0.0;

    double effective_mu_bar() const noexcept;
    double effective_sigma_bar() const noexcept;
};

/// Z = exp(W - t/2).
struct DoleansParams {};

/// Z = B, written as W + int (B_T - Z_s) / (T - s) ds in the filtration enlarged by B_T.
struct BridgeParams {};

/// Z = exp(f(t) + int g dW), f(t) = f_slope t + f_curv t^2, g = g_sigma exp(g_noise Y), Y independent.
struct ExpDriftParams {
    double f_slope = 0.0;
    double f_curv = 0.0;
    double g_sigma = 1.0;
    double g_noise = 0.0;
};

/// Alternatives in ModelTag order.
using ModelParams = std::variant<MixedFbmParams, WienerIntegralParams, SvPriceParams, BnsPriceParams,
                                 ComteRenaultParams, RegimePriceParams, SdePriceParams, DoleansParams, BridgeParams,
                                 ExpDriftParams>;

struct ModelSpec {
    ModelParams params;
    /// Price models only: Z is log P when set, P otherwise.
    bool log_space = false;
    /// Display name; empty means the tag name.
    std::string name;

    ModelTag tag() const noexcept { return static_cast<ModelTag>(params.index()); }
    std::string label() const;

    static ModelSpec defaults(ModelTag tag);
};

bool is_price_model(ModelTag tag) noexcept;
/// Independent-integrand models, Z = H + int k dW with (H, k) independent of W.
bool is_affine_model(ModelTag tag) noexcept;
/// Z > 0 on every path.
bool is_positive_model(const ModelSpec& spec) noexcept;

/// Throws BadParams (or HurstOutOfRange / BadGenerator) when the parameters are outside the model's domain.
void validate(const ModelSpec& spec);

/// Names and current values of the settable parameters, in declaration order.
std::vector<std::pair<std::string, std::string>> param_values(const ModelSpec& spec);
/// Sets one parameter from its text form. Throws BadConfig for unknown names or malformed values.
void set_param(ModelSpec& spec, std::string_view key, std::string_view value);
/// Parses "TAG" or "TAG(key=value; key=value)"; ',' also separates parameters.
ModelSpec parse_model(std::string_view text);

/// Text of the CIR Feller condition failure, if 2 kappa theta < xi^2.
std::optional<std::string> feller_warning(const ModelSpec& spec);

struct Simulation;
struct ConditioningContext;

/// Z and every driving path on one grid.
///
/// Affine models store the per-cell decomposition dZ_i = drift[i] + vol[i] dW_i in working space
/// (log price for price models). Vectors that a model does not use stay empty.
struct Simulation {
    ModelSpec spec;
    TimeGrid grid;
    Path z;
    std::vector<double> x;     ///< log price for price models; equals z otherwise
    std::vector<double> w;     ///< integrator Brownian motion
    std::vector<double> drift; ///< per cell, affine models
    std::vector<double> vol;   ///< per cell, affine models (k, or sqrt(1-rho^2) g)
    std::vector<double> b;     ///< second Brownian motion (SV price, bridge)
    std::vector<double> v;     ///< volatility factor (CIR variance, BNS V, fOU V)
    std::vector<double> y;     ///< auxiliary Brownian motion driving (H, k)
    std::vector<double> fbm;
    std::vector<double> xi;     ///< fBm innovations, xi[l] enters nodes > l
    std::vector<double> smooth; ///< fOU smoothing integral per node
    std::vector<std::size_t> states;
    double terminal = 0.0; ///< B_T for the bridge model
    std::vector<std::string> warnings;
    std::shared_ptr<const FbmGenerator> fbm_generator;

    ConditioningContext context_at(std::size_t node) const;
};

/// Information at the restart node: the history of every driving path, the restart state,
/// and for affine models the held future of (H, k) as per-cell drift and vol.
struct ConditioningContext {
    ModelSpec spec;
    TimeGrid grid{0.0, 1.0, 1};
    std::size_t node = 0;
    double z_start = 0.0;
    double x_start = 0.0;
    std::vector<double> w_history;
    std::vector<double> held_drift;
    std::vector<double> held_vol;
    double b_state = 0.0;
    double v_state = 0.0;
    double y_state = 0.0;
    double fbm_state = 0.0;
    double smooth_state = 0.0;
    std::size_t chain_state = 0;
    std::vector<double> xi_history;
    double terminal = 0.0;
    std::shared_ptr<const FbmGenerator> fbm_generator;

    double t_restart() const noexcept { return grid.node(node); }
    TimeGrid tail_grid() const { return grid.tail(node); }
};

/// Continuation of Z on the tail grid, stored relative to Z at the restart time.
struct Continuation {
    double base = 0.0;
    std::vector<double> rel;        ///< Z(t_j) - Z(t_restart), j = 0..n_tail
    std::vector<double> cell_sigma; ///< local diffusion scale of Z per cell

    Path to_path(const TimeGrid& tail) const;
};

/// Simulation engine for one (spec, grid) pair. Holds the fBm factorisation when the model needs it.
class Model {
public:
    Model(ModelSpec spec, TimeGrid grid);

    const ModelSpec& spec() const noexcept { return spec_; }
    const TimeGrid& grid() const noexcept { return grid_; }

    Simulation simulate(RngStream& rng) const;

private:
    ModelSpec spec_;
    TimeGrid grid_;
    std::shared_ptr<const FbmGenerator> fbm_;
};

Simulation simulate(const ModelSpec& spec, const TimeGrid& grid, RngStream& rng);

/// Throws IncompatibleContext unless ctx was produced for this model tag.
void check_context(const ModelSpec& spec, const ConditioningContext& ctx);

/// One continuation into a reusable buffer.
void continue_into(const ConditioningContext& ctx, ConditioningMode mode, RngStream& rng, Continuation& out);

Path continue_conditional(const ModelSpec& spec, const ConditioningContext& ctx, const TimeGrid& grid_tail,
                          RngStream& rng, ConditioningMode mode = ConditioningMode::Hold);

enum class CheckStatus { Pass, Fail, Uncheckable };
std::string_view to_string(CheckStatus s);

struct SpecCheck {
    std::string name;
    CheckStatus status;
    std::string detail;
};

struct SpecReport {
    ModelTag tag;
    std::vector<SpecCheck> checks;
    std::string note;

    bool all_pass() const noexcept;
};

/// Checklist of the model's hypotheses on 100 sampled paths.
SpecReport validate_spec(const ModelSpec& spec);
SpecReport validate_spec(const ModelSpec& spec, const TimeGrid& grid, std::uint64_t seed);

} // namespace cfs
