#include "cfs/cli.hpp"

#include "cfs/models.hpp"
#include "cfs/smallball.hpp"
#include "cfs/suite.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace cfs {

bool RunConfig::has(std::string_view key) const
{
    return values.find(std::string(key)) != values.end();
}

const std::string& RunConfig::require(std::string_view key) const
{
    auto it = values.find(std::string(key));
    if (it == values.end())
        throw Error(ErrorCode::BadConfig, "missing required key '" + std::string(key) + "'");
    return it->second;
}

std::string RunConfig::get(std::string_view key, std::string_view fallback) const
{
    auto it = values.find(std::string(key));
    return it == values.end() ? std::string(fallback) : it->second;
}

RunConfig parse_config_text(std::string_view text)
{
    RunConfig cfg;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        const auto key = eq == std::string_view::npos ? std::string_view{} : trim(line.substr(0, eq));
        if (key.empty())
            throw Error(ErrorCode::BadConfig, "line " + std::to_string(line_no) + ": expected 'key = value'");
        if (!cfg.values.emplace(std::string(key), std::string(trim(line.substr(eq + 1)))).second)
            throw Error(ErrorCode::BadConfig, "line " + std::to_string(line_no) + ": key '" + std::string(key) +
                                                  "' given twice");
    }
    return cfg;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::BadConfig, "cannot read config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void reject_unknown_keys(const RunConfig& cfg, const std::vector<std::string_view>& allowed)
{
    for (const auto& [key, value] : cfg.values) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw Error(ErrorCode::BadConfig, "unknown key '" + key + "'");
    }
}

namespace {

constexpr std::string_view kCommonKeys[] = {"seed",    "reps",         "workers",     "out",
                                            "format",  "t_end",        "n_steps",     "conditioning",
                                            "bridge_correction"};

std::vector<std::string_view> keys_with(std::initializer_list<std::string_view> extra)
{
    std::vector<std::string_view> keys(std::begin(kCommonKeys), std::end(kCommonKeys));
    keys.insert(keys.end(), extra);
    return keys;
}

bool parse_flag(std::string_view text, std::string_view what)
{
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on")
        return true;
    if (t == "false" || t == "0" || t == "no" || t == "off")
        return false;
    throw Error(ErrorCode::BadConfig, std::string(what) + ": expected true or false, got '" + std::string(t) + "'");
}

std::vector<double> parse_list(std::string_view text, std::string_view what)
{
    std::vector<double> out;
    while (true) {
        const auto comma = text.find(',');
        out.push_back(parse_real(text.substr(0, comma), what));
        if (comma == std::string_view::npos)
            break;
        text = text.substr(comma + 1);
    }
    return out;
}

/// Split on commas outside parentheses, so model parameters may use either separator.
std::vector<std::string> split_models(std::string_view text)
{
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char c : text) {
        if (c == '(')
            ++depth;
        if (c == ')')
            --depth;
        if (c == ',' && depth == 0) {
            out.emplace_back(trim(cur));
            cur.clear();
            continue;
        }
        cur += c;
    }
    out.emplace_back(trim(cur));
    for (const auto& m : out)
        if (m.empty())
            throw Error(ErrorCode::BadConfig, "models: empty entry in '" + std::string(text) + "'");
    return out;
}

struct Common {
    std::uint64_t seed;
    std::uint64_t reps;
    TimeGrid grid;
    ReportFormat format;
    std::filesystem::path out;
    ConditioningMode mode;
    EstimatorOptions estimator;
};

Common read_common(const RunConfig& cfg)
{
    const std::uint64_t seed = parse_count(cfg.require("seed"), "seed");
    const std::uint64_t reps = parse_count(cfg.require("reps"), "reps");
    const double t_end = parse_real(cfg.get("t_end", "1"), "t_end");
    const std::uint64_t n_steps = parse_count(cfg.get("n_steps", "2048"), "n_steps");
    if (!(t_end > 0.0) || n_steps == 0)
        throw Error(ErrorCode::BadConfig, "t_end must be positive and n_steps at least 1");
    EstimatorOptions est;
    const std::uint64_t workers = parse_count(cfg.get("workers", "1"), "workers");
    if (workers == 0 || workers > 1024)
        throw Error(ErrorCode::BadConfig, "workers must be between 1 and 1024");
    est.workers = static_cast<unsigned>(workers);
    est.bridge_correction = parse_flag(cfg.get("bridge_correction", "true"), "bridge_correction");
    std::filesystem::path out(cfg.get("out", "."));
    if (!std::filesystem::is_directory(out))
        throw Error(ErrorCode::Io, "output directory '" + out.string() + "' does not exist");
    return {seed,
            reps,
            TimeGrid(0.0, t_end, n_steps),
            parse_report_format(cfg.get("format", "csv")),
            out,
            parse_conditioning_mode(cfg.get("conditioning", "hold")),
            est};
}

std::filesystem::path write_report(const std::filesystem::path& dir, std::string_view name, std::string_view command,
                                   std::uint64_t seed, ReportFormat format, const std::string& bytes)
{
    const auto path = dir / (std::string(name) + "_" + std::string(command) + "_" + std::to_string(seed) + "." +
                             std::string(extension(format)));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << bytes;
    f.close();
    if (!f)
        throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    return path;
}

std::string_view anchor(ModelTag tag)
{
    switch (tag) {
    case ModelTag::MixedFbm: return "Z = a B^h + b W, fBm independent of W";
    case ModelTag::WienerIntegral: return "Z = H + int k dW, (H, k) independent of W";
    case ModelTag::SvPrice: return "dP = P (mu dt + g (rho dB + sqrt(1-rho^2) dW)), g constant or Heston";
    case ModelTag::BnsPrice: return "dP = P (mu dt + sqrt(V) dW), dV = -lambda V dt + dL(lambda t)";
    case ModelTag::ComteRenaultPrice: return "dP = P (mu dt + exp(V) dW), V fractional OU";
    case ModelTag::RegimePrice: return "dP = P (mu dt + sigma(X) dW), X a finite Markov chain";
    case ModelTag::SdePrice: return "dP = mu P dt + s(P) P dW, s bounded above and below";
    case ModelTag::DoleansCe: return "Z = exp(W - t/2), strictly positive";
    case ModelTag::BridgeCe: return "Z = B in the filtration enlarged by B_T";
    case ModelTag::ExpDriftPrice: return "Z = exp(f(t) + int g dW)";
    }
    return "";
}

} // namespace

std::string cmd_models()
{
    std::ostringstream os;
    for (ModelTag tag : all_model_tags()) {
        const auto spec = ModelSpec::defaults(tag);
        os << std::left << std::setw(20) << to_string(tag) << anchor(tag) << "\n    ";
        const auto params = param_values(spec);
        if (params.empty())
            os << "(no parameters)";
        for (std::size_t i = 0; i < params.size(); ++i)
            os << (i ? " " : "") << params[i].first << '=' << params[i].second;
        os << '\n';
    }
    return os.str();
}

int cmd_smallball(const RunConfig& cfg, std::ostream& out, std::ostream&)
{
    reject_unknown_keys(cfg, keys_with({"model", "epsilon", "t_frac", "target", "amplitude", "n_segments"}));
    const ModelSpec spec = parse_model(cfg.require("model"));
    const double eps = parse_real(cfg.require("epsilon"), "epsilon");
    const Common c = read_common(cfg);
    const double t_frac = parse_real(cfg.get("t_frac", "0"), "t_frac");
    if (!(t_frac >= 0.0 && t_frac < 1.0))
        throw Error(ErrorCode::BadConfig, "t_frac must lie in [0, 1)");
    const TargetStyle style = parse_target_style(cfg.get("target", "flat"));
    const double amplitude = parse_real(cfg.get("amplitude", "1"), "amplitude");
    const std::uint64_t n_segments = parse_count(cfg.get("n_segments", "4"), "n_segments");

    const Model model(spec, c.grid);
    RngStream history(c.seed, mix64(1));
    const Simulation sim = model.simulate(history);
    const std::size_t node = std::min(c.grid.index_of(t_frac * c.grid.t_end()), c.grid.n_steps() - 1);
    const ConditioningContext ctx = sim.context_at(node);
    const SmallBallQuery q{node, make_target(ctx.tail_grid(), style, amplitude, n_segments), eps, c.mode};
    const Estimate e = estimate_smallball(spec, ctx, q, c.reps, RngStream(c.seed, mix64(3)), c.estimator);

    BatteryReport report;
    report.seed = c.seed;
    report.reps = c.reps;
    report.t_end = c.grid.t_end();
    report.n_steps = c.grid.n_steps();
    report.total_replications = c.reps;
    report.warnings = sim.warnings;
    report.rows.push_back({spec.label(), t_frac, style, amplitude, eps, e, c.seed});
    report.summaries.push_back({spec.label(), summarize(report.rows),
                                e.classification == Classification::Positive ? 1u : 0u,
                                e.classification == Classification::ZeroConsistent ? 1u : 0u,
                                e.classification == Classification::AnalyticZero ? 1u : 0u});

    const auto path = write_report(c.out, to_string(spec.tag()), "smallball", c.seed, c.format,
                                   render_report(report, c.format));
    out << kCsvHeader << '\n' << render_csv_row(report.rows.front()) << '\n';
    if (!e.reason.empty())
        out << "reason: " << e.reason << '\n';
    out << "wrote " << path.string() << '\n';
    return kExitOk;
}

int cmd_battery(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    reject_unknown_keys(cfg, keys_with({"models", "t_fracs", "eps_factors", "amplitude", "pilot_reps", "n_segments"}));
    std::vector<ModelSpec> specs;
    for (const auto& m : split_models(cfg.require("models")))
        specs.push_back(parse_model(m));
    const Common c = read_common(cfg);

    QueryTemplate tmpl;
    tmpl.mode = c.mode;
    if (cfg.has("t_fracs"))
        tmpl.t_fracs = parse_list(cfg.require("t_fracs"), "t_fracs");
    if (cfg.has("eps_factors"))
        tmpl.eps_factors = parse_list(cfg.require("eps_factors"), "eps_factors");
    if (const auto a = cfg.get("amplitude", "pilot"); trim(a) != "pilot")
        tmpl.amplitude = parse_real(a, "amplitude");
    tmpl.pilot_reps = parse_count(cfg.get("pilot_reps", "1000"), "pilot_reps");
    tmpl.n_segments = parse_count(cfg.get("n_segments", "4"), "n_segments");

    const BatteryReport report = run_battery(specs, tmpl, c.reps, c.seed, {c.grid, c.estimator});
    const std::string name = specs.size() == 1 ? std::string(to_string(specs.front().tag())) : "battery";

    std::vector<ReportFormat> formats{ReportFormat::Csv, ReportFormat::Json};
    if (c.format == ReportFormat::Plotdata)
        formats.push_back(ReportFormat::Plotdata);
    for (ReportFormat f : formats)
        out << "wrote " << write_report(c.out, name, "battery", c.seed, f, render_report(report, f)).string() << '\n';
    for (const auto& s : report.summaries)
        out << s.model << ' ' << to_string(s.verdict) << " positive=" << s.positive
            << " zero_consistent=" << s.zero_consistent << " analytic_zero=" << s.analytic_zero << '\n';
    for (const auto& w : report.warnings)
        err << "warning: " << w << '\n';
    err << "replications " << report.total_replications << ", wall " << std::fixed << std::setprecision(2)
        << report.wall_seconds << " s\n";
    return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Conditional full support: small-ball probability estimates", "cfs"};
    app.require_subcommand(1);
    auto* models = app.add_subcommand("models", "List the model catalog");

    struct Flags {
        std::optional<std::string> config, seed, reps, workers, out, format;
        std::vector<std::string> set;
    };
    Flags sb_flags, bt_flags;
    auto add_flags = [](CLI::App* sub, Flags& f) {
        sub->add_option("--config", f.config, "Config file (key = value lines)");
        sub->add_option("--seed", f.seed, "Master seed");
        sub->add_option("--reps", f.reps, "Replications per query");
        sub->add_option("--workers", f.workers, "Worker threads");
        sub->add_option("--out", f.out, "Output directory");
        sub->add_option("--format", f.format, "csv, json or plotdata");
        sub->add_option("--set", f.set, "Any config key as key=value");
    };
    auto* smallball = app.add_subcommand("smallball", "Estimate one tube probability");
    add_flags(smallball, sb_flags);
    auto* battery = app.add_subcommand("battery", "Run the target battery over several models");
    add_flags(battery, bt_flags);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (models->parsed()) {
            out << cmd_models();
            return kExitOk;
        }
        const Flags& f = smallball->parsed() ? sb_flags : bt_flags;
        RunConfig cfg = f.config ? load_config(*f.config) : RunConfig{};
        for (const auto& kv : f.set) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorCode::BadConfig, "--set expects key=value, got '" + kv + "'");
            cfg.values[std::string(trim(std::string_view(kv).substr(0, eq)))] =
                std::string(trim(std::string_view(kv).substr(eq + 1)));
        }
        const std::pair<const char*, const std::optional<std::string>*> overrides[] = {
            {"seed", &f.seed}, {"reps", &f.reps}, {"workers", &f.workers}, {"out", &f.out}, {"format", &f.format}};
        for (const auto& [key, value] : overrides)
            if (*value)
                cfg.values[key] = **value;
        return smallball->parsed() ? cmd_smallball(cfg, out, err) : cmd_battery(cfg, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.numerical() ? kExitNumerical : kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}

} // namespace cfs
