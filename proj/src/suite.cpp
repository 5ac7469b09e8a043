#include "cfs/suite.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace cfs {

namespace {

constexpr std::string_view kStyleNames[] = {"flat", "ramp-up", "ramp-down", "zigzag", "spike"};
constexpr TargetStyle kStyles[] = {TargetStyle::Flat, TargetStyle::RampUp, TargetStyle::RampDown, TargetStyle::Zigzag,
                                   TargetStyle::Spike};

std::uint64_t stream_id(std::uint64_t purpose, std::uint64_t model, std::uint64_t frac)
{
    return mix64(mix64(mix64(purpose) + model) + frac);
}

constexpr std::uint64_t kHistory = 1;
constexpr std::uint64_t kPilot = 2;
constexpr std::uint64_t kEstimate = 3;

double pilot_amplitude(const ConditioningContext& ctx, ConditioningMode mode, std::uint64_t reps, const RngStream& rng)
{
    // Running moments of Z(t) - Z(t_restart) at every tail node.
    Continuation c;
    std::vector<double> mean, m2;
    for (std::uint64_t r = 0; r < reps; ++r) {
        RngStream s = rng.substream(r);
        continue_into(ctx, mode, s, c);
        if (r == 0) {
            mean.assign(c.rel.size(), 0.0);
            m2.assign(c.rel.size(), 0.0);
        }
        for (std::size_t i = 0; i < c.rel.size(); ++i) {
            const double delta = c.rel[i] - mean[i];
            mean[i] += delta / static_cast<double>(r + 1);
            m2[i] += delta * (c.rel[i] - mean[i]);
        }
    }
    if (reps < 2)
        return 0.0;
    const double scale = 1.0 / static_cast<double>(reps - 1);
    const double at_end = std::sqrt(m2.back() * scale);
    if (at_end > 0.0)
        return at_end;
    // Pinned endpoint: fall back to the widest spread along the tail.
    return std::sqrt(*std::max_element(m2.begin(), m2.end()) * scale);
}

} // namespace

std::string_view to_string(TargetStyle s)
{
    return kStyleNames[static_cast<std::size_t>(s)];
}

TargetStyle parse_target_style(std::string_view s)
{
    const auto t = trim(s);
    for (std::size_t i = 0; i < std::size(kStyleNames); ++i)
        if (kStyleNames[i] == t)
            return kStyles[i];
    throw Error(ErrorCode::BadConfig, "unknown target style '" + std::string(t) + "'");
}

Path make_target(const TimeGrid& tail, TargetStyle style, double amplitude, std::size_t n_segments)
{
    if (!(amplitude > 0.0) || !std::isfinite(amplitude))
        throw Error(ErrorCode::BadParams, "target amplitude must be positive");
    if (n_segments == 0)
        throw Error(ErrorCode::BadParams, "targets need at least one segment");

    std::vector<double> knots(n_segments + 1, 0.0);
    for (std::size_t k = 1; k <= n_segments; ++k) {
        const double frac = static_cast<double>(k) / static_cast<double>(n_segments);
        switch (style) {
        case TargetStyle::Flat: break;
        case TargetStyle::RampUp: knots[k] = amplitude * frac; break;
        case TargetStyle::RampDown: knots[k] = -amplitude * frac; break;
        case TargetStyle::Zigzag: knots[k] = (k % 2 == 1) ? amplitude : -amplitude; break;
        case TargetStyle::Spike: break;
        }
    }

    std::vector<double> f(tail.size());
    for (std::size_t i = 0; i < tail.size(); ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(tail.n_steps());
        if (style == TargetStyle::Spike) {
            f[i] = amplitude * (1.0 - std::abs(2.0 * s - 1.0));
            continue;
        }
        const double u = s * static_cast<double>(n_segments);
        const auto seg = std::min(static_cast<std::size_t>(u), n_segments - 1);
        const double w = u - static_cast<double>(seg);
        f[i] = knots[seg] + w * (knots[seg + 1] - knots[seg]);
    }
    return Path(tail, std::move(f));
}

TargetFamily build_targets(const TimeGrid& tail, double amplitude, std::size_t n_segments)
{
    TargetFamily family{n_segments, {}};
    for (TargetStyle style : kStyles)
        for (double a : {amplitude, amplitude / 2.0})
            family.members.push_back({style, a, make_target(tail, style, a, n_segments)});
    return family;
}

std::string_view to_string(Verdict v)
{
    switch (v) {
    case Verdict::PositiveAll: return "POSITIVE-ALL";
    case Verdict::ZeroConsistent: return "ZERO-CONSISTENT";
    case Verdict::NotFullSupport: return "NOT-FULL-SUPPORT";
    }
    return "UNKNOWN";
}

Verdict parse_verdict(std::string_view s)
{
    for (Verdict v : {Verdict::PositiveAll, Verdict::ZeroConsistent, Verdict::NotFullSupport})
        if (to_string(v) == s)
            return v;
    throw Error(ErrorCode::BadConfig, "unknown verdict '" + std::string(s) + "'");
}

Verdict summarize(std::span<const BatteryRow> rows)
{
    bool all_positive = true;
    for (const auto& r : rows) {
        if (r.estimate.classification == Classification::AnalyticZero)
            return Verdict::NotFullSupport;
        all_positive = all_positive && r.estimate.classification == Classification::Positive;
    }
    return all_positive ? Verdict::PositiveAll : Verdict::ZeroConsistent;
}

BatteryReport run_battery(std::span<const ModelSpec> models, const QueryTemplate& tmpl, std::uint64_t reps,
                          std::uint64_t seed, const BatteryOptions& opts)
{
    if (models.empty())
        throw Error(ErrorCode::EmptyBattery, "the battery needs at least one model");
    if (reps < 1000)
        throw Error(ErrorCode::BadParams, "the battery needs reps >= 1000");
    if (tmpl.t_fracs.empty() || tmpl.eps_factors.empty())
        throw Error(ErrorCode::BadParams, "the battery needs restart fractions and epsilon factors");
    for (double f : tmpl.t_fracs)
        if (!(f >= 0.0 && f < 1.0))
            throw Error(ErrorCode::BadParams, "restart fractions must lie in [0, 1)");
    for (double e : tmpl.eps_factors)
        if (!(e > 0.0))
            throw Error(ErrorCode::BadParams, "epsilon factors must be positive");
    if (tmpl.amplitude && !(*tmpl.amplitude > 0.0))
        throw Error(ErrorCode::BadParams, "fixed amplitude must be positive");

    const auto started = std::chrono::steady_clock::now();
    const TimeGrid& grid = opts.grid;
    BatteryReport report;
    report.seed = seed;
    report.reps = reps;
    report.t_end = grid.t_end();
    report.n_steps = grid.n_steps();

    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const ModelSpec& spec = models[mi];
        const Model model(spec, grid);
        const std::size_t first_row = report.rows.size();
        auto warn = [&](const std::string& text) {
            const std::string line = spec.label() + ": " + text;
            if (std::find(report.warnings.begin(), report.warnings.end(), line) == report.warnings.end())
                report.warnings.push_back(line);
        };
        if (auto fw = feller_warning(spec))
            warn(*fw);

        for (std::size_t ti = 0; ti < tmpl.t_fracs.size(); ++ti) {
            const double t_frac = tmpl.t_fracs[ti];
            const std::size_t node = std::min(grid.index_of(grid.t_start() + t_frac * grid.span()), grid.n_steps() - 1);
            RngStream history_rng(seed, stream_id(kHistory, mi, ti));
            const Simulation sim = model.simulate(history_rng);
            for (const auto& w : sim.warnings)
                warn(w);
            const ConditioningContext ctx = sim.context_at(node);

            double amplitude = 0.0;
            if (tmpl.amplitude) {
                amplitude = *tmpl.amplitude;
            } else {
                amplitude = pilot_amplitude(ctx, tmpl.mode, tmpl.pilot_reps, RngStream(seed, stream_id(kPilot, mi, ti)));
                report.total_replications += tmpl.pilot_reps;
                if (!(amplitude > 0.0)) {
                    std::ostringstream os;
                    os << spec.label() << ": pilot continuations are deterministic at t_frac = " << t_frac
                       << "; set a fixed amplitude";
                    throw Error(ErrorCode::BadParams, os.str());
                }
            }

            const TargetFamily family = build_targets(ctx.tail_grid(), amplitude, tmpl.n_segments);
            std::vector<SmallBallQuery> queries;
            std::vector<BatteryRow> rows;
            for (const auto& member : family.members)
                for (double factor : tmpl.eps_factors) {
                    const double eps = factor * amplitude;
                    queries.push_back({node, member.f, eps, tmpl.mode});
                    rows.push_back({spec.label(), t_frac, member.style, member.amplitude, eps, {}, seed});
                }
            const auto estimates = estimate_smallball_batch(spec, ctx, queries, reps,
                                                            RngStream(seed, stream_id(kEstimate, mi, ti)), opts.estimator);
            report.total_replications += reps;
            for (std::size_t q = 0; q < rows.size(); ++q) {
                rows[q].estimate = estimates[q];
                report.rows.push_back(std::move(rows[q]));
            }
        }

        const std::span<const BatteryRow> mine(report.rows.data() + first_row, report.rows.size() - first_row);
        ModelSummary summary{spec.label(), summarize(mine)};
        for (const auto& r : mine) {
            switch (r.estimate.classification) {
            case Classification::Positive: ++summary.positive; break;
            case Classification::ZeroConsistent: ++summary.zero_consistent; break;
            case Classification::AnalyticZero: ++summary.analytic_zero; break;
            }
        }
        report.summaries.push_back(summary);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

std::string_view to_string(ReportFormat f)
{
    switch (f) {
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Json: return "json";
    case ReportFormat::Plotdata: return "plotdata";
    }
    return "csv";
}

std::string_view extension(ReportFormat f)
{
    switch (f) {
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Json: return "json";
    case ReportFormat::Plotdata: return "dat";
    }
    return "csv";
}

ReportFormat parse_report_format(std::string_view s)
{
    const auto t = trim(s);
    if (t == "csv")
        return ReportFormat::Csv;
    if (t == "json")
        return ReportFormat::Json;
    if (t == "plotdata")
        return ReportFormat::Plotdata;
    throw Error(ErrorCode::BadConfig, "format must be csv, json or plotdata, got '" + std::string(t) + "'");
}

std::string render_csv_row(const BatteryRow& row)
{
    const Estimate& e = row.estimate;
    std::string out;
    out += row.model + ',' + format_real(row.t_frac) + ',' + std::string(to_string(row.style)) + ',' +
           format_real(row.amplitude) + ',' + format_real(row.epsilon) + ',' + std::to_string(e.reps) + ',' +
           std::to_string(e.hits) + ',' + format_real(e.p_hat) + ',' + format_real(e.ci_low) + ',' +
           format_real(e.ci_high) + ',' + std::string(to_string(e.classification)) + ',' + std::to_string(row.seed);
    return out;
}

namespace {

std::string json_string(std::string_view s)
{
    return nlohmann::json(std::string(s)).dump();
}

std::string render_json(const BatteryReport& r)
{
    // Numbers are written by hand with 17 significant digits so they parse back bit-exactly.
    std::ostringstream os;
    os << "{\n";
    os << "  \"seed\": " << r.seed << ",\n";
    os << "  \"reps\": " << r.reps << ",\n";
    os << "  \"t_end\": " << format_real(r.t_end) << ",\n";
    os << "  \"n_steps\": " << r.n_steps << ",\n";
    os << "  \"total_replications\": " << r.total_replications << ",\n";
    os << "  \"warnings\": [";
    for (std::size_t i = 0; i < r.warnings.size(); ++i)
        os << (i ? ", " : "") << json_string(r.warnings[i]);
    os << "],\n";
    os << "  \"rows\": [";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        const auto& e = row.estimate;
        os << (i ? ",\n" : "\n") << "    {\"model\": " << json_string(row.model)
           << ", \"t_frac\": " << format_real(row.t_frac) << ", \"style\": " << json_string(to_string(row.style))
           << ", \"amplitude\": " << format_real(row.amplitude) << ", \"epsilon\": " << format_real(row.epsilon)
           << ", \"reps\": " << e.reps << ", \"hits\": " << e.hits << ", \"p_hat\": " << format_real(e.p_hat)
           << ", \"ci_low\": " << format_real(e.ci_low) << ", \"ci_high\": " << format_real(e.ci_high)
           << ", \"classification\": " << json_string(to_string(e.classification))
           << ", \"reason\": " << json_string(e.reason) << ", \"seed\": " << row.seed << "}";
    }
    os << (r.rows.empty() ? "],\n" : "\n  ],\n");
    os << "  \"summaries\": [";
    for (std::size_t i = 0; i < r.summaries.size(); ++i) {
        const auto& s = r.summaries[i];
        os << (i ? ",\n" : "\n") << "    {\"model\": " << json_string(s.model)
           << ", \"verdict\": " << json_string(to_string(s.verdict)) << ", \"positive\": " << s.positive
           << ", \"zero_consistent\": " << s.zero_consistent << ", \"analytic_zero\": " << s.analytic_zero << "}";
    }
    os << (r.summaries.empty() ? "]\n" : "\n  ]\n");
    os << "}\n";
    return os.str();
}

std::string render_plotdata(const BatteryReport& r)
{
    std::ostringstream os;
    for (std::size_t mi = 0; mi < r.summaries.size(); ++mi) {
        const auto& s = r.summaries[mi];
        if (mi)
            os << "\n\n";
        os << "# model " << s.model << " verdict " << to_string(s.verdict) << "\n";
        os << "# t_frac style amplitude epsilon p_hat ci_low ci_high hits reps classification\n";
        for (const auto& row : r.rows) {
            if (row.model != s.model)
                continue;
            const auto& e = row.estimate;
            os << format_real(row.t_frac) << ' ' << to_string(row.style) << ' ' << format_real(row.amplitude) << ' '
               << format_real(row.epsilon) << ' ' << format_real(e.p_hat) << ' ' << format_real(e.ci_low) << ' '
               << format_real(e.ci_high) << ' ' << e.hits << ' ' << e.reps << ' ' << to_string(e.classification)
               << '\n';
        }
    }
    return os.str();
}

} // namespace

std::string render_report(const BatteryReport& r, ReportFormat format)
{
    switch (format) {
    case ReportFormat::Json: return render_json(r);
    case ReportFormat::Plotdata: return render_plotdata(r);
    case ReportFormat::Csv: break;
    }
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& row : r.rows) {
        out += render_csv_row(row);
        out += '\n';
    }
    return out;
}

BatteryReport parse_report_json(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("report JSON: ") + e.what());
    }
    try {
        BatteryReport r;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.reps = j.at("reps").get<std::uint64_t>();
        r.t_end = j.at("t_end").get<double>();
        r.n_steps = j.at("n_steps").get<std::size_t>();
        r.total_replications = j.at("total_replications").get<std::uint64_t>();
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        for (const auto& jr : j.at("rows")) {
            BatteryRow row;
            row.model = jr.at("model").get<std::string>();
            row.t_frac = jr.at("t_frac").get<double>();
            row.style = parse_target_style(jr.at("style").get<std::string>());
            row.amplitude = jr.at("amplitude").get<double>();
            row.epsilon = jr.at("epsilon").get<double>();
            row.estimate.reps = jr.at("reps").get<std::uint64_t>();
            row.estimate.hits = jr.at("hits").get<std::uint64_t>();
            row.estimate.p_hat = jr.at("p_hat").get<double>();
            row.estimate.ci_low = jr.at("ci_low").get<double>();
            row.estimate.ci_high = jr.at("ci_high").get<double>();
            row.estimate.classification = parse_classification(jr.at("classification").get<std::string>());
            row.estimate.reason = jr.at("reason").get<std::string>();
            row.seed = jr.at("seed").get<std::uint64_t>();
            r.rows.push_back(std::move(row));
        }
        for (const auto& js : j.at("summaries")) {
            ModelSummary s{js.at("model").get<std::string>(), parse_verdict(js.at("verdict").get<std::string>())};
            s.positive = js.at("positive").get<std::size_t>();
            s.zero_consistent = js.at("zero_consistent").get<std::size_t>();
            s.analytic_zero = js.at("analytic_zero").get<std::size_t>();
            r.summaries.push_back(s);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("report JSON: ") + e.what());
    }
}

} // namespace cfs
