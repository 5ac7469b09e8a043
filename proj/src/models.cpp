#include "cfs/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cfs {

namespace {

template <class... Ts> struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::string_view kTagNames[] = {
    "MIXED_FBM",  "WIENER_INTEGRAL", "SV_PRICE",   "BNS_PRICE",  "COMTE_RENAULT_PRICE",
    "REGIME_PRICE", "SDE_PRICE",     "DOLEANS_CE", "BRIDGE_CE",  "EXP_DRIFT_PRICE",
};

struct Field {
    const char* name;
    double* value;
};

std::vector<Field> numeric_fields(ModelParams& params)
{
    return std::visit(
        overloaded{
            [](MixedFbmParams& p) -> std::vector<Field> {
                return {{"hurst", &p.hurst}, {"fbm_weight", &p.fbm_weight}, {"bm_weight", &p.bm_weight}};
            },
            [](WienerIntegralParams& p) -> std::vector<Field> {
                return {{"k_level", &p.k_level},
                        {"k_slope", &p.k_slope},
                        {"k_noise", &p.k_noise},
                        {"h_drift", &p.h_drift},
                        {"h_noise", &p.h_noise}};
            },
            [](SvPriceParams& p) -> std::vector<Field> {
                return {{"p0", &p.p0},       {"mu", &p.mu},       {"rho", &p.rho}, {"sigma", &p.sigma},
                        {"kappa", &p.kappa}, {"theta", &p.theta}, {"xi", &p.xi},   {"v0", &p.v0}};
            },
            [](BnsPriceParams& p) -> std::vector<Field> {
                auto& sub = p.bns.subordinator;
                return {{"p0", &p.p0},
                        {"mu", &p.mu},
                        {"lambda", &p.bns.lambda},
                        {"window", &p.bns.window},
                        {"jump_rate", &sub.jump_rate},
                        {"jump_theta", &sub.jump_theta},
                        {"shape", &sub.shape},
                        {"rate", &sub.rate}};
            },
            [](ComteRenaultParams& p) -> std::vector<Field> {
                return {{"p0", &p.p0},           {"mu", &p.mu},           {"hurst", &p.fou.hurst},
                        {"alpha", &p.fou.alpha}, {"sigma", &p.fou.sigma}, {"v0", &p.fou.v0}};
            },
            [](RegimePriceParams& p) -> std::vector<Field> { return {{"p0", &p.p0}, {"mu", &p.mu}}; },
            [](SdePriceParams& p) -> std::vector<Field> {
                return {{"p0", &p.p0},
                        {"mu", &p.mu},
                        {"sigma_lo", &p.sigma_lo},
                        {"sigma_hi", &p.sigma_hi},
                        {"mu_bar", &p.mu_bar},
                        {"sigma_bar", &p.sigma_bar}};
            },
            [](DoleansParams&) -> std::vector<Field> { return {}; },
            [](BridgeParams&) -> std::vector<Field> { return {}; },
            [](ExpDriftParams& p) -> std::vector<Field> {
                return {{"f_slope", &p.f_slope},
                        {"f_curv", &p.f_curv},
                        {"g_sigma", &p.g_sigma},
                        {"g_noise", &p.g_noise}};
            },
        },
        params);
}

std::vector<double> parse_list(std::string_view text, std::string_view what)
{
    std::vector<double> out;
    std::string s(text);
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream is(s);
    std::string tok;
    while (is >> tok)
        out.push_back(parse_real(tok, what));
    return out;
}

std::string join_list(const std::vector<double>& xs, const char* sep)
{
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i)
            out += sep;
        out += format_short(xs[i]);
    }
    return out;
}

bool parse_bool(std::string_view text, std::string_view what)
{
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes")
        return true;
    if (t == "false" || t == "0" || t == "no")
        return false;
    throw Error(ErrorCode::BadConfig, std::string(what) + ": expected true or false, got '" + std::string(t) + "'");
}

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw Error(ErrorCode::BadParams, message);
}

bool all_finite(std::initializer_list<double> xs)
{
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

double sde_sigma(const SdePriceParams& p, double price) noexcept
{
    return p.sigma_lo + (p.sigma_hi - p.sigma_lo) * price / (price + p.p0);
}

double exp_drift_f(const ExpDriftParams& p, double t) noexcept
{
    return p.f_slope * t + p.f_curv * t * t;
}

/// Per-worker buffers for redrawn drivers.
struct Scratch {
    std::vector<double> drift, vol, a, b, c;
    std::vector<std::size_t> states;
};

Scratch& scratch()
{
    thread_local Scratch s;
    return s;
}

void fill_normals(RngStream& rng, double sd, std::span<double> out)
{
    for (double& d : out)
        d = sd * rng.normal();
}

// drift/vol of the price models for a volatility level g over one cell.
inline void price_cell(double mu, double rho, double g, double dt, double db, double& drift, double& vol) noexcept
{
    drift = (mu - 0.5 * g * g) * dt + rho * g * db;
    vol = std::sqrt(1.0 - rho * rho) * g;
}

inline double cir_step(const SvPriceParams& p, double v, double dt, double db) noexcept
{
    const double vp = std::max(v, 0.0);
    return v + p.kappa * (p.theta - vp) * dt + p.xi * std::sqrt(vp) * db;
}

/// drift/vol of an affine model on cells [first, n) from its driver paths; `first` lets the
/// redraw path reuse the same code on the tail.
struct AffineDrivers {
    const TimeGrid& grid;
    std::size_t first;
    std::span<const double> fbm;  // nodes first..n
    std::span<const double> y;    // nodes first..n
    std::span<const double> db;   // cells first..n-1
    std::span<const double> v;    // nodes first..n
    std::span<const std::size_t> states;
};

void affine_coefficients(const ModelSpec& spec, const AffineDrivers& d, std::span<double> drift,
                         std::span<double> vol)
{
    const TimeGrid& grid = d.grid;
    const double dt = grid.dt();
    const std::size_t cells = grid.n_steps() - d.first;
    std::visit(overloaded{
                   [&](const MixedFbmParams& p) {
                       for (std::size_t i = 0; i < cells; ++i) {
                           drift[i] = p.fbm_weight == 0.0 ? 0.0 : p.fbm_weight * (d.fbm[i + 1] - d.fbm[i]);
                           vol[i] = p.bm_weight;
                       }
                   },
                   [&](const WienerIntegralParams& p) {
                       auto h = [&](std::size_t i) {
                           return p.h_drift * grid.node(d.first + i) + p.h_noise * d.y[i];
                       };
                       for (std::size_t i = 0; i < cells; ++i) {
                           const double t = grid.node(d.first + i);
                           drift[i] = h(i + 1) - h(i);
                           vol[i] = (p.k_level + p.k_slope * t) * std::exp(p.k_noise * d.y[i]);
                       }
                   },
                   [&](const SvPriceParams& p) {
                       for (std::size_t i = 0; i < cells; ++i) {
                           const double g = p.vol == SvVolKind::Constant ? p.sigma : std::sqrt(std::max(d.v[i], 0.0));
                           price_cell(p.mu, p.rho, g, dt, d.db[i], drift[i], vol[i]);
                       }
                   },
                   [&](const BnsPriceParams& p) {
                       for (std::size_t i = 0; i < cells; ++i)
                           price_cell(p.mu, 0.0, std::sqrt(d.v[i]), dt, 0.0, drift[i], vol[i]);
                   },
                   [&](const ComteRenaultParams& p) {
                       for (std::size_t i = 0; i < cells; ++i)
                           price_cell(p.mu, 0.0, std::exp(d.v[i]), dt, 0.0, drift[i], vol[i]);
                   },
                   [&](const RegimePriceParams& p) {
                       for (std::size_t i = 0; i < cells; ++i)
                           price_cell(p.mu, 0.0, p.chain.sigma[d.states[i]], dt, 0.0, drift[i], vol[i]);
                   },
                   [&](const ExpDriftParams& p) {
                       for (std::size_t i = 0; i < cells; ++i) {
                           drift[i] = exp_drift_f(p, grid.node(d.first + i + 1)) - exp_drift_f(p, grid.node(d.first + i));
                           vol[i] = p.g_sigma * std::exp(p.g_noise * d.y[i]);
                       }
                   },
                   [](const auto&) {},
               },
               spec.params);
}

bool uses_fbm(const ModelSpec& spec) noexcept
{
    if (const auto* p = std::get_if<MixedFbmParams>(&spec.params))
        return p->fbm_weight != 0.0;
    return spec.tag() == ModelTag::ComteRenaultPrice;
}

double fbm_hurst(const ModelSpec& spec) noexcept
{
    if (const auto* p = std::get_if<MixedFbmParams>(&spec.params))
        return p->hurst;
    return std::get<ComteRenaultParams>(spec.params).fou.hurst;
}

double initial_log_price(const ModelSpec& spec) noexcept
{
    return std::visit(overloaded{
                          [](const SvPriceParams& p) { return std::log(p.p0); },
                          [](const BnsPriceParams& p) { return std::log(p.p0); },
                          [](const ComteRenaultParams& p) { return std::log(p.p0); },
                          [](const RegimePriceParams& p) { return std::log(p.p0); },
                          [](const SdePriceParams& p) { return std::log(p.p0); },
                          [](const auto&) { return 0.0; },
                      },
                      spec.params);
}

void cumulate(std::span<const double> increments, std::vector<double>& path, double start = 0.0)
{
    path.assign(increments.size() + 1, start);
    for (std::size_t i = 0; i < increments.size(); ++i)
        path[i + 1] = path[i] + increments[i];
}

} // namespace

std::string_view to_string(ModelTag tag)
{
    return kTagNames[static_cast<std::size_t>(tag)];
}

ModelTag parse_model_tag(std::string_view s)
{
    const auto t = trim(s);
    for (std::size_t i = 0; i < std::size(kTagNames); ++i)
        if (kTagNames[i] == t)
            return static_cast<ModelTag>(i);
    throw Error(ErrorCode::BadConfig, "unknown model tag '" + std::string(t) + "'");
}

std::vector<ModelTag> all_model_tags()
{
    std::vector<ModelTag> tags;
    for (std::size_t i = 0; i < std::size(kTagNames); ++i)
        tags.push_back(static_cast<ModelTag>(i));
    std::sort(tags.begin(), tags.end(), [](ModelTag a, ModelTag b) { return to_string(a) < to_string(b); });
    return tags;
}

std::string_view to_string(ConditioningMode mode)
{
    return mode == ConditioningMode::Hold ? "hold" : "redraw";
}

ConditioningMode parse_conditioning_mode(std::string_view s)
{
    const auto t = trim(s);
    if (t == "hold")
        return ConditioningMode::Hold;
    if (t == "redraw")
        return ConditioningMode::Redraw;
    throw Error(ErrorCode::BadConfig, "conditioning mode must be hold or redraw, got '" + std::string(t) + "'");
}

double SdePriceParams::effective_mu_bar() const noexcept
{
    return mu_bar > 0.0 ? mu_bar : std::abs(mu);
}

double SdePriceParams::effective_sigma_bar() const noexcept
{
    if (sigma_bar > 0.0)
        return sigma_bar;
    const double lo = std::min(sigma_lo, sigma_hi);
    const double hi = std::max(sigma_lo, sigma_hi);
    return std::max({hi, 1.0 / lo, 1.0 + 1e-9});
}

std::string ModelSpec::label() const
{
    return name.empty() ? std::string(to_string(tag())) : name;
}

ModelSpec ModelSpec::defaults(ModelTag tag)
{
    ModelSpec spec;
    switch (tag) {
    case ModelTag::MixedFbm: spec.params = MixedFbmParams{}; break;
    case ModelTag::WienerIntegral: spec.params = WienerIntegralParams{}; break;
    case ModelTag::SvPrice: spec.params = SvPriceParams{}; break;
    case ModelTag::BnsPrice: spec.params = BnsPriceParams{}; break;
    case ModelTag::ComteRenaultPrice: spec.params = ComteRenaultParams{}; break;
    case ModelTag::RegimePrice: spec.params = RegimePriceParams{}; break;
    case ModelTag::SdePrice: spec.params = SdePriceParams{}; break;
    case ModelTag::DoleansCe: spec.params = DoleansParams{}; break;
    case ModelTag::BridgeCe: spec.params = BridgeParams{}; break;
    case ModelTag::ExpDriftPrice: spec.params = ExpDriftParams{}; break;
    }
    spec.log_space = is_price_model(tag);
    return spec;
}

bool is_price_model(ModelTag tag) noexcept
{
    switch (tag) {
    case ModelTag::SvPrice:
    case ModelTag::BnsPrice:
    case ModelTag::ComteRenaultPrice:
    case ModelTag::RegimePrice:
    case ModelTag::SdePrice:
    case ModelTag::ExpDriftPrice: return true;
    default: return false;
    }
}

bool is_affine_model(ModelTag tag) noexcept
{
    switch (tag) {
    case ModelTag::SdePrice:
    case ModelTag::DoleansCe:
    case ModelTag::BridgeCe: return false;
    default: return true;
    }
}

bool is_positive_model(const ModelSpec& spec) noexcept
{
    return spec.tag() == ModelTag::DoleansCe || (is_price_model(spec.tag()) && !spec.log_space);
}

void validate(const ModelSpec& spec)
{
    require(!spec.log_space || is_price_model(spec.tag()),
            std::string(to_string(spec.tag())) + " is not a price model; log_space does not apply");
    std::visit(overloaded{
                   [](const MixedFbmParams& p) {
                       if (p.fbm_weight != 0.0)
                           validate(FbmSpec{p.hurst});
                       require(all_finite({p.fbm_weight, p.bm_weight}), "mixed fBm weights must be finite");
                   },
                   [](const WienerIntegralParams& p) {
                       require(all_finite({p.k_level, p.k_slope, p.k_noise, p.h_drift, p.h_noise}),
                               "Wiener integral coefficients must be finite");
                   },
                   [](const SvPriceParams& p) {
                       require(p.p0 > 0.0 && std::isfinite(p.p0), "p0 must be positive");
                       require(std::isfinite(p.mu), "mu must be finite");
                       require(p.rho > -1.0 && p.rho < 1.0, "rho must lie in (-1, 1)");
                       if (p.vol == SvVolKind::Constant)
                           require(p.sigma > 0.0 && std::isfinite(p.sigma), "constant volatility must be positive");
                       else
                           require(p.kappa > 0.0 && p.theta > 0.0 && p.xi > 0.0 && p.v0 >= 0.0 &&
                                       all_finite({p.kappa, p.theta, p.xi, p.v0}),
                                   "Heston needs kappa, theta, xi > 0 and v0 >= 0");
                   },
                   [](const BnsPriceParams& p) {
                       require(p.p0 > 0.0 && std::isfinite(p.p0), "p0 must be positive");
                       require(std::isfinite(p.mu), "mu must be finite");
                       validate(p.bns);
                   },
                   [](const ComteRenaultParams& p) {
                       require(p.p0 > 0.0 && std::isfinite(p.p0), "p0 must be positive");
                       require(std::isfinite(p.mu), "mu must be finite");
                       validate(p.fou);
                   },
                   [](const RegimePriceParams& p) {
                       require(p.p0 > 0.0 && std::isfinite(p.p0), "p0 must be positive");
                       require(std::isfinite(p.mu), "mu must be finite");
                       validate(p.chain);
                   },
                   [](const SdePriceParams& p) {
                       require(p.p0 > 0.0 && std::isfinite(p.p0), "p0 must be positive");
                       require(std::isfinite(p.mu), "mu must be finite");
                       require(p.sigma_lo > 0.0 && p.sigma_hi > 0.0 && all_finite({p.sigma_lo, p.sigma_hi}),
                               "sigma_lo and sigma_hi must be positive");
                       require(p.mu_bar >= 0.0 && p.sigma_bar >= 0.0, "bounds must be non-negative");
                   },
                   [](const DoleansParams&) {},
                   [](const BridgeParams&) {},
                   [](const ExpDriftParams& p) {
                       require(all_finite({p.f_slope, p.f_curv, p.g_noise}), "f and g coefficients must be finite");
                       require(p.g_sigma > 0.0 && std::isfinite(p.g_sigma), "g_sigma must be positive");
                   },
               },
               spec.params);
}

std::vector<std::pair<std::string, std::string>> param_values(const ModelSpec& spec)
{
    ModelSpec copy = spec;
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : numeric_fields(copy.params))
        out.emplace_back(f.name, format_short(*f.value));
    if (const auto* p = std::get_if<SvPriceParams>(&spec.params))
        out.emplace_back("vol", p->vol == SvVolKind::Heston ? "heston" : "constant");
    if (const auto* p = std::get_if<BnsPriceParams>(&spec.params))
        out.emplace_back("subordinator",
                         p->bns.subordinator.kind == SubordinatorKind::Gamma ? "gamma" : "compound_poisson");
    if (const auto* p = std::get_if<RegimePriceParams>(&spec.params)) {
        std::string q;
        for (std::size_t i = 0; i < p->chain.generator.size(); ++i)
            q += (i ? "; " : "") + join_list(p->chain.generator[i], " ");
        out.emplace_back("generator", q);
        out.emplace_back("sigmas", join_list(p->chain.sigma, " "));
        out.emplace_back("initial_state", std::to_string(p->chain.initial_state));
    }
    if (is_price_model(spec.tag()))
        out.emplace_back("log_space", spec.log_space ? "true" : "false");
    return out;
}

void set_param(ModelSpec& spec, std::string_view key, std::string_view value)
{
    const auto k = trim(key);
    const auto what = std::string(to_string(spec.tag())) + "." + std::string(k);
    for (const auto& f : numeric_fields(spec.params))
        if (k == f.name) {
            *f.value = parse_real(value, what);
            return;
        }
    if (k == "log_space" && is_price_model(spec.tag())) {
        spec.log_space = parse_bool(value, what);
        return;
    }
    if (auto* p = std::get_if<SvPriceParams>(&spec.params); p && k == "vol") {
        const auto v = trim(value);
        if (v == "heston")
            p->vol = SvVolKind::Heston;
        else if (v == "constant")
            p->vol = SvVolKind::Constant;
        else
            throw Error(ErrorCode::BadConfig, what + ": expected heston or constant");
        return;
    }
    if (auto* p = std::get_if<BnsPriceParams>(&spec.params); p && k == "subordinator") {
        const auto v = trim(value);
        if (v == "compound_poisson" || v == "cp")
            p->bns.subordinator.kind = SubordinatorKind::CompoundPoissonExp;
        else if (v == "gamma")
            p->bns.subordinator.kind = SubordinatorKind::Gamma;
        else
            throw Error(ErrorCode::BadConfig, what + ": expected compound_poisson or gamma");
        return;
    }
    if (auto* p = std::get_if<RegimePriceParams>(&spec.params)) {
        if (k == "generator") {
            p->chain.generator.clear();
            std::string_view rest = value;
            while (!rest.empty()) {
                const auto pos = rest.find(';');
                p->chain.generator.push_back(parse_list(rest.substr(0, pos), what));
                rest = pos == std::string_view::npos ? std::string_view{} : rest.substr(pos + 1);
            }
            return;
        }
        if (k == "sigmas") {
            p->chain.sigma = parse_list(value, what);
            return;
        }
        if (k == "initial_state") {
            p->chain.initial_state = parse_count(value, what);
            return;
        }
    }
    throw Error(ErrorCode::BadConfig, "unknown parameter '" + std::string(k) + "' for " +
                                          std::string(to_string(spec.tag())));
}

ModelSpec parse_model(std::string_view text)
{
    const auto t = trim(text);
    const auto open = t.find('(');
    ModelSpec spec = ModelSpec::defaults(parse_model_tag(t.substr(0, open)));
    if (open == std::string_view::npos)
        return spec;
    if (t.back() != ')')
        throw Error(ErrorCode::BadConfig, "model '" + std::string(t) + "': missing ')'");
    const auto body = t.substr(open + 1, t.size() - open - 2);
    // Parameters separate on ';' or ','; regime generator rows are written with '|' here.
    std::string normalized;
    std::vector<std::string> parts;
    std::string current;
    for (char c : body) {
        if (c == ';' || c == ',') {
            parts.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    parts.push_back(current);
    for (const auto& part : parts) {
        const auto pt = trim(part);
        if (pt.empty())
            continue;
        const auto eq = pt.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorCode::BadConfig, "model parameter '" + std::string(pt) + "' needs key=value");
        std::string value(trim(pt.substr(eq + 1)));
        std::replace(value.begin(), value.end(), '|', ';');
        set_param(spec, pt.substr(0, eq), value);
        if (!normalized.empty())
            normalized += ';';
        normalized += std::string(trim(pt.substr(0, eq))) + "=" + std::string(trim(pt.substr(eq + 1)));
    }
    spec.name = std::string(to_string(spec.tag())) + "(" + normalized + ")";
    return spec;
}

std::optional<std::string> feller_warning(const ModelSpec& spec)
{
    const auto* p = std::get_if<SvPriceParams>(&spec.params);
    if (!p || p->vol != SvVolKind::Heston)
        return std::nullopt;
    if (2.0 * p->kappa * p->theta >= p->xi * p->xi)
        return std::nullopt;
    std::ostringstream os;
    os << "FellerWarning: 2 kappa theta = " << 2.0 * p->kappa * p->theta << " < xi^2 = " << p->xi * p->xi
       << "; the CIR variance reaches 0 and full truncation sets g = 0 there";
    return os.str();
}

Path Continuation::to_path(const TimeGrid& tail) const
{
    std::vector<double> values(rel.size());
    for (std::size_t i = 0; i < rel.size(); ++i)
        values[i] = base + rel[i];
    return Path(tail, std::move(values));
}

Model::Model(ModelSpec spec, TimeGrid grid) : spec_(std::move(spec)), grid_(grid)
{
    validate(spec_);
    if (grid_.t_start() != 0.0)
        throw Error(ErrorCode::BadParams, "model grids must start at 0");
    if (uses_fbm(spec_))
        fbm_ = std::make_shared<const FbmGenerator>(grid_, FbmSpec{fbm_hurst(spec_)});
}

Simulation Model::simulate(RngStream& rng) const
{
    const std::size_t n = grid_.n_steps();
    const double dt = grid_.dt();
    const double sd = std::sqrt(dt);
    RngStream rw = rng.substream(0);
    RngStream rd = rng.substream(1);
    RngStream ry = rng.substream(2);

    Simulation s{spec_, grid_, Path::constant(grid_, 0.0)};
    s.fbm_generator = fbm_;
    if (auto warn = feller_warning(spec_))
        s.warnings.push_back(*warn);

    std::vector<double> dw(n);
    fill_normals(rw, sd, dw);
    cumulate(dw, s.w);

    const ModelTag tag = spec_.tag();
    if (is_affine_model(tag)) {
        std::vector<double> db;
        if (fbm_) {
            s.xi.resize(fbm_->dimension());
            fbm_->draw_innovations(rd, s.xi);
            s.fbm.resize(grid_.size());
            fbm_->fill(s.xi, s.fbm);
        }
        if (tag == ModelTag::WienerIntegral || tag == ModelTag::ExpDriftPrice) {
            std::vector<double> dy(n);
            fill_normals(ry, sd, dy);
            cumulate(dy, s.y);
        }
        if (const auto* p = std::get_if<SvPriceParams>(&spec_.params)) {
            db.resize(n);
            fill_normals(rd, sd, db);
            cumulate(db, s.b);
            if (p->vol == SvVolKind::Heston) {
                s.v.assign(grid_.size(), p->v0);
                for (std::size_t i = 0; i < n; ++i)
                    s.v[i + 1] = cir_step(*p, s.v[i], dt, db[i]);
            }
        }
        if (const auto* p = std::get_if<BnsPriceParams>(&spec_.params)) {
            const double v0 = sample_bns_stationary(p->bns, dt, rd);
            const auto jumps = sample_bns_jumps(0.0, grid_.t_end(), p->bns, dt, rd);
            s.v.resize(grid_.size());
            bns_from_jumps(grid_, p->bns.lambda, v0, jumps, s.v);
        }
        if (const auto* p = std::get_if<ComteRenaultParams>(&spec_.params)) {
            s.v.resize(grid_.size());
            s.smooth.assign(grid_.size(), 0.0);
            s.v[0] = p->fou.v0;
            for (std::size_t j = 1; j < grid_.size(); ++j) {
                s.smooth[j] = s.smooth[j - 1];
                s.v[j] = fou_advance(p->fou, dt, grid_.node(j), s.fbm[j - 1], s.fbm[j], s.smooth[j]);
            }
        }
        if (const auto* p = std::get_if<RegimePriceParams>(&spec_.params)) {
            s.states.resize(grid_.size());
            gen_ctmc_states(grid_, p->chain, p->chain.initial_state, rd, s.states);
        }

        s.drift.resize(n);
        s.vol.resize(n);
        affine_coefficients(spec_, AffineDrivers{grid_, 0, s.fbm, s.y, db, s.v, s.states}, s.drift, s.vol);
        s.x.assign(grid_.size(), initial_log_price(spec_));
        for (std::size_t i = 0; i < n; ++i)
            s.x[i + 1] = s.x[i] + s.drift[i] + s.vol[i] * dw[i];
    } else if (const auto* p = std::get_if<SdePriceParams>(&spec_.params)) {
        s.x.assign(grid_.size(), std::log(p->p0));
        for (std::size_t i = 0; i < n; ++i) {
            const double sig = sde_sigma(*p, std::exp(s.x[i]));
            s.x[i + 1] = s.x[i] + (p->mu - 0.5 * sig * sig) * dt + sig * dw[i];
        }
    } else if (tag == ModelTag::DoleansCe) {
        s.x.resize(grid_.size());
        for (std::size_t i = 0; i < grid_.size(); ++i)
            s.x[i] = std::exp(s.w[i] - 0.5 * grid_.node(i));
    } else {
        // Bridge: B first, then the innovation W of the enlarged filtration, then Z from W.
        std::vector<double> db(n);
        fill_normals(rd, sd, db);
        cumulate(db, s.b);
        const double bt = s.b[n];
        s.terminal = bt;
        // Over cell j, with B linear in the cell and tau_j = T - t_j,
        //   int (B_T - B_s) / (T - s) ds = A_j c_j + dB_j,
        //   A_j = (B_T - B_j) - dB_j tau_j / dt,  c_j = log(tau_j / tau_{j+1}),
        // so dW_j = -A_j c_j; the last cell has A = 0.
        auto cell_log = [n](std::size_t j) { return std::log1p(1.0 / static_cast<double>(n - j - 1)); };
        std::vector<double> dwb(n, 0.0);
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double tau = static_cast<double>(n - j) * dt;
            const double a = (bt - s.b[j]) - db[j] * tau / dt;
            dwb[j] = -a * cell_log(j);
        }
        cumulate(dwb, s.w);
        // Z_{j+1} = Z_j + (B_T - Z_j) c_j + dW_j with the numerator frozen at the left node;
        // the final node is pinned to B_T.
        s.x.assign(grid_.size(), 0.0);
        for (std::size_t j = 0; j + 1 < n; ++j)
            s.x[j + 1] = s.x[j] + (bt - s.x[j]) * cell_log(j) + dwb[j];
        s.x[n] = bt;
    }

    std::vector<double> z = s.x;
    if (is_price_model(tag) && !spec_.log_space)
        for (double& v : z)
            v = std::exp(v);
    s.z = Path(grid_, std::move(z));
    return s;
}

Simulation simulate(const ModelSpec& spec, const TimeGrid& grid, RngStream& rng)
{
    return Model(spec, grid).simulate(rng);
}

ConditioningContext Simulation::context_at(std::size_t node) const
{
    if (node >= grid.n_steps())
        throw Error(ErrorCode::BadQuery, "restart node must lie before T");
    ConditioningContext ctx;
    ctx.spec = spec;
    ctx.grid = grid;
    ctx.node = node;
    ctx.z_start = z[node];
    ctx.x_start = x[node];
    ctx.w_history.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(node) + 1);
    if (!drift.empty()) {
        ctx.held_drift.assign(drift.begin() + static_cast<std::ptrdiff_t>(node), drift.end());
        ctx.held_vol.assign(vol.begin() + static_cast<std::ptrdiff_t>(node), vol.end());
    }
    if (!b.empty())
        ctx.b_state = b[node];
    if (!v.empty())
        ctx.v_state = v[node];
    if (!y.empty())
        ctx.y_state = y[node];
    if (!fbm.empty())
        ctx.fbm_state = fbm[node];
    if (!smooth.empty())
        ctx.smooth_state = smooth[node];
    if (!states.empty())
        ctx.chain_state = states[node];
    if (!xi.empty())
        ctx.xi_history.assign(xi.begin(), xi.begin() + static_cast<std::ptrdiff_t>(node));
    ctx.terminal = terminal;
    ctx.fbm_generator = fbm_generator;
    return ctx;
}

void check_context(const ModelSpec& spec, const ConditioningContext& ctx)
{
    if (spec.tag() != ctx.spec.tag()) {
        std::ostringstream os;
        os << "context was simulated for " << to_string(ctx.spec.tag()) << ", not " << to_string(spec.tag());
        throw Error(ErrorCode::IncompatibleContext, os.str());
    }
}

namespace {

/// Redraws the drivers of (H, k) after the restart node and writes tail drift/vol.
void redraw_coefficients(const ConditioningContext& ctx, RngStream& rng, std::vector<double>& drift,
                         std::vector<double>& vol)
{
    const TimeGrid& grid = ctx.grid;
    const std::size_t m = ctx.node;
    const std::size_t n = grid.n_steps();
    const std::size_t cells = n - m;
    const double dt = grid.dt();
    const double sd = std::sqrt(dt);
    Scratch& sc = scratch();
    drift.resize(cells);
    vol.resize(cells);

    AffineDrivers d{grid, m, {}, {}, {}, {}, {}};
    std::vector<double>& a = sc.a;
    std::vector<double>& b = sc.b;

    auto redraw_fbm = [&]() {
        const FbmGenerator& gen = *ctx.fbm_generator;
        b.resize(gen.dimension());
        std::copy(ctx.xi_history.begin(), ctx.xi_history.end(), b.begin());
        gen.draw_innovations(rng, std::span<double>(b).subspan(m));
        a.resize(grid.size());
        gen.fill(b, a, m + 1);
        a[m] = ctx.fbm_state;
        return std::span<const double>(a).subspan(m);
    };

    switch (ctx.spec.tag()) {
    case ModelTag::MixedFbm:
        if (ctx.fbm_generator)
            d.fbm = redraw_fbm();
        break;
    case ModelTag::WienerIntegral:
    case ModelTag::ExpDriftPrice:
        a.resize(cells + 1);
        a[0] = ctx.y_state;
        for (std::size_t i = 0; i < cells; ++i)
            a[i + 1] = a[i] + sd * rng.normal();
        d.y = a;
        break;
    case ModelTag::SvPrice: {
        const auto& p = std::get<SvPriceParams>(ctx.spec.params);
        b.resize(cells);
        fill_normals(rng, sd, b);
        d.db = b;
        if (p.vol == SvVolKind::Heston) {
            a.resize(cells + 1);
            a[0] = ctx.v_state;
            for (std::size_t i = 0; i < cells; ++i)
                a[i + 1] = cir_step(p, a[i], dt, b[i]);
            d.v = a;
        }
        break;
    }
    case ModelTag::BnsPrice: {
        const auto& p = std::get<BnsPriceParams>(ctx.spec.params);
        const auto jumps = sample_bns_jumps(ctx.t_restart(), grid.t_end(), p.bns, dt, rng);
        b.resize(cells + 1);
        bns_from_jumps(ctx.tail_grid(), p.bns.lambda, ctx.v_state, jumps, b);
        d.v = b;
        break;
    }
    case ModelTag::ComteRenaultPrice: {
        const auto& p = std::get<ComteRenaultParams>(ctx.spec.params);
        const auto fbm = redraw_fbm();
        sc.c.resize(cells + 1);
        auto& v = sc.c;
        v[0] = ctx.v_state;
        double smoothed = ctx.smooth_state;
        for (std::size_t i = 0; i < cells; ++i)
            v[i + 1] = fou_advance(p.fou, dt, grid.node(m + i + 1), fbm[i], fbm[i + 1], smoothed);
        d.v = v;
        break;
    }
    case ModelTag::RegimePrice: {
        const auto& p = std::get<RegimePriceParams>(ctx.spec.params);
        sc.states.resize(cells + 1);
        gen_ctmc_states(ctx.tail_grid(), p.chain, ctx.chain_state, rng, sc.states);
        d.states = sc.states;
        break;
    }
    default: break;
    }
    affine_coefficients(ctx.spec, d, drift, vol);
}

} // namespace

void continue_into(const ConditioningContext& ctx, ConditioningMode mode, RngStream& rng, Continuation& out)
{
    const TimeGrid& grid = ctx.grid;
    const std::size_t m = ctx.node;
    const std::size_t cells = grid.n_steps() - m;
    const double dt = grid.dt();
    const double sd = std::sqrt(dt);
    const ModelSpec& spec = ctx.spec;
    const ModelTag tag = spec.tag();
    const bool natural_price = is_price_model(tag) && !spec.log_space;

    out.base = ctx.z_start;
    out.rel.resize(cells + 1);
    out.cell_sigma.resize(cells);
    auto& rel = out.rel;
    auto& sig = out.cell_sigma;
    rel[0] = 0.0;

    if (is_affine_model(tag)) {
        std::span<const double> drift = ctx.held_drift;
        std::span<const double> vol = ctx.held_vol;
        if (mode == ConditioningMode::Redraw) {
            Scratch& sc = scratch();
            redraw_coefficients(ctx, rng, sc.drift, sc.vol);
            drift = sc.drift;
            vol = sc.vol;
        }
        for (std::size_t i = 0; i < cells; ++i) {
            rel[i + 1] = rel[i] + drift[i] + vol[i] * (sd * rng.normal());
            sig[i] = std::abs(vol[i]);
        }
    } else if (tag == ModelTag::SdePrice) {
        const auto& p = std::get<SdePriceParams>(spec.params);
        for (std::size_t i = 0; i < cells; ++i) {
            const double s = sde_sigma(p, std::exp(ctx.x_start + rel[i]));
            rel[i + 1] = rel[i] + (p.mu - 0.5 * s * s) * dt + s * (sd * rng.normal());
            sig[i] = s;
        }
    } else if (tag == ModelTag::DoleansCe) {
        double w = 0.0;
        double level = 1.0;
        for (std::size_t i = 0; i < cells; ++i) {
            sig[i] = ctx.z_start * level;
            w += sd * rng.normal();
            const double e = w - 0.5 * static_cast<double>(i + 1) * dt;
            rel[i + 1] = ctx.z_start * std::expm1(e);
            level = std::exp(e);
        }
        return;
    } else {
        fill_bridge(ctx.tail_grid(), 0.0, ctx.terminal - ctx.b_state, rng, rel);
        std::fill(sig.begin(), sig.end(), 1.0);
        return;
    }

    if (natural_price) {
        const double p0 = ctx.z_start;
        for (std::size_t i = 0; i < cells; ++i)
            sig[i] *= p0 * std::exp(rel[i]);
        for (double& r : rel)
            r = p0 * std::expm1(r);
    }
}

Path continue_conditional(const ModelSpec& spec, const ConditioningContext& ctx, const TimeGrid& grid_tail,
                          RngStream& rng, ConditioningMode mode)
{
    check_context(spec, ctx);
    if (!grid_tail.matches(ctx.tail_grid()))
        throw Error(ErrorCode::IncompatibleContext, "continuation grid does not match the context's tail");
    Continuation c;
    continue_into(ctx, mode, rng, c);
    return c.to_path(grid_tail);
}

std::string_view to_string(CheckStatus s)
{
    switch (s) {
    case CheckStatus::Pass: return "PASS";
    case CheckStatus::Fail: return "FAIL";
    case CheckStatus::Uncheckable: return "UNCHECKABLE";
    }
    return "UNKNOWN";
}

bool SpecReport::all_pass() const noexcept
{
    return std::none_of(checks.begin(), checks.end(), [](const SpecCheck& c) { return c.status == CheckStatus::Fail; });
}

SpecReport validate_spec(const ModelSpec& spec)
{
    return validate_spec(spec, make_grid(0.0, 1.0, 256), 0);
}

SpecReport validate_spec(const ModelSpec& spec, const TimeGrid& grid, std::uint64_t seed)
{
    SpecReport r{spec.tag(), {}, {}};
    auto add = [&](std::string name, bool ok, std::string detail) {
        r.checks.push_back({std::move(name), ok ? CheckStatus::Pass : CheckStatus::Fail, std::move(detail)});
    };
    try {
        validate(spec);
    } catch (const Error& e) {
        add("parameters", false, e.what());
        return r;
    }
    add("parameters", true, "within the model's domain");

    constexpr std::size_t kPaths = 100;
    const Model model(spec, grid);
    std::vector<Simulation> sims;
    sims.reserve(kPaths);
    for (std::size_t i = 0; i < kPaths; ++i) {
        RngStream rng(seed, i);
        sims.push_back(model.simulate(rng));
    }

    const ModelTag tag = spec.tag();
    if (is_affine_model(tag)) {
        bool nonzero = true;
        double inf_k = INFINITY;
        for (const auto& s : sims)
            for (double k : s.vol) {
                nonzero = nonzero && k != 0.0;
                inf_k = std::min(inf_k, std::abs(k));
            }
        add("k zero set empty on the grid", nonzero, "k = 0 on no cell of the sampled paths");
        add("inf |k| > 0", inf_k > 0.0, "inf |k| = " + format_short(inf_k));
        add("(H, k) independent of W", true, "by construction: drivers use separate streams");
        if (const auto* p = std::get_if<MixedFbmParams>(&spec.params); p && p->bm_weight == 0.0)
            r.checks.push_back({"independent Brownian part", CheckStatus::Uncheckable,
                                "pure fBm: support rests on the fBm itself"});
    }
    if (auto warn = feller_warning(spec))
        add("Feller condition", false, *warn);
    if (const auto* p = std::get_if<BnsPriceParams>(&spec.params)) {
        bool ok = true;
        const double floor = std::exp(-p->bns.lambda * grid.t_end());
        for (const auto& s : sims)
            for (double v : s.v)
                ok = ok && v >= floor * s.v[0] && v > 0.0;
        add("V(t) >= exp(-lambda T) V(0) > 0", ok, "on every sampled node");
    }
    if (const auto* p = std::get_if<SdePriceParams>(&spec.params)) {
        const double mb = p->effective_mu_bar();
        const double sb = p->effective_sigma_bar();
        constexpr double tol = 1e-12;
        bool mu_ok = true;
        bool sigma_ok = true;
        for (const auto& s : sims)
            for (double x : s.x) {
                const double price = std::exp(x);
                const double mu = p->mu * price;
                const double sigma = sde_sigma(*p, price) * price;
                mu_ok = mu_ok && std::abs(mu) <= mb * price * (1.0 + tol);
                sigma_ok = sigma_ok && sigma >= price / sb * (1.0 - tol) && sigma <= sb * price * (1.0 + tol);
            }
        add("|mu(t,x)| <= mu_bar x", mu_ok, "mu_bar = " + format_short(mb));
        add("x / sigma_bar <= |sigma(t,x)| <= sigma_bar x", sigma_ok, "sigma_bar = " + format_short(sb));
        add("sigma_bar > 1", sb > 1.0, "sigma_bar = " + format_short(sb));
    }
    if (is_price_model(tag)) {
        bool positive = true;
        for (const auto& s : sims)
            for (double x : s.x)
                positive = positive && std::isfinite(std::exp(x)) && std::exp(x) > 0.0;
        add("P > 0", positive, "log-space construction");
    }
    if (tag == ModelTag::DoleansCe) {
        bool positive = true;
        for (const auto& s : sims)
            for (double z : s.z.values())
                positive = positive && z > 0.0;
        add("Z > 0", positive, "on every sampled node");
        add("full support in R", false, "Z never leaves (0, inf)");
        r.note = "Z strictly positive; CFS in R impossible";
    }
    if (tag == ModelTag::BridgeCe) {
        add("Z(T) unknown at restart", false, "Z(T) = B_T is measurable at time 0 in the enlarged filtration");
        r.note = "Z = B pinned to B_T; CFS fails in the filtration enlarged by B_T";
    }
    return r;
}

} // namespace cfs
