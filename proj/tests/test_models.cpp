#include <doctest.h>

#include "cfs/models.hpp"
#include "stats.hpp"

#include <cfloat>
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

std::vector<double> continuation_ends(const ConditioningContext& ctx, ConditioningMode mode, std::size_t reps,
                                      std::uint64_t seed)
{
    RngStream base(seed, 77);
    Continuation c;
    std::vector<double> out(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        RngStream s = base.substream(r);
        continue_into(ctx, mode, s, c);
        out[r] = c.base + c.rel.back();
    }
    return out;
}

std::vector<double> simulated_ends(const Model& model, std::size_t reps, std::uint64_t seed)
{
    RngStream base(seed, 88);
    std::vector<double> out(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        RngStream s = base.substream(r);
        out[r] = model.simulate(s).z.back();
    }
    return out;
}

} // namespace

TEST_CASE("catalog names and parsing")
{
    const auto tags = all_model_tags();
    CHECK(tags.size() == 10);
    for (std::size_t i = 0; i + 1 < tags.size(); ++i)
        CHECK(to_string(tags[i]) < to_string(tags[i + 1]));
    for (ModelTag t : tags) {
        CHECK(parse_model_tag(to_string(t)) == t);
        const ModelSpec d = ModelSpec::defaults(t);
        CHECK(d.tag() == t);
        CHECK(d.log_space == is_price_model(t));
        validate(d);
    }
    CHECK(code_of([] { parse_model_tag("NOPE"); }) == ErrorCode::BadConfig);
}

TEST_CASE("model strings")
{
    const ModelSpec m = parse_model("MIXED_FBM(hurst=0.25; bm_weight=2)");
    const auto& p = std::get<MixedFbmParams>(m.params);
    CHECK(p.hurst == 0.25);
    CHECK(p.bm_weight == 2.0);
    CHECK(m.label() == "MIXED_FBM(hurst=0.25;bm_weight=2)");
    CHECK(parse_model(m.label()).label() == m.label());

    const ModelSpec r = parse_model("REGIME_PRICE(generator=-2 2|1 -1, sigmas=0.1 0.2)");
    const auto& q = std::get<RegimePriceParams>(r.params);
    CHECK(q.chain.generator[0][1] == 2.0);
    CHECK(q.chain.generator[1][0] == 1.0);

    CHECK(parse_model("SV_PRICE(vol=constant)").tag() == ModelTag::SvPrice);
    CHECK(code_of([] { parse_model("MIXED_FBM(colour=3)"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_model("MIXED_FBM(hurst=abc)"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_model("MIXED_FBM(hurst=0.5"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { validate(parse_model("SV_PRICE(rho=1)")); }) == ErrorCode::BadParams);
    CHECK(code_of([] { validate(parse_model("BNS_PRICE(p0=0)")); }) == ErrorCode::BadParams);
    CHECK(code_of([] { validate(parse_model("MIXED_FBM(hurst=1.5)")); }) == ErrorCode::HurstOutOfRange);
    CHECK(code_of([] { validate(parse_model("REGIME_PRICE(generator=-1 2|1 -1)")); }) == ErrorCode::BadGenerator);
    CHECK(code_of([] { parse_model("DOLEANS_CE(log_space=true)"); }) == ErrorCode::BadConfig);
}

TEST_CASE("simulation is deterministic")
{
    const auto grid = make_grid(0.0, 1.0, 64);
    for (ModelTag t : all_model_tags()) {
        const Model model(ModelSpec::defaults(t), grid);
        RngStream a(3, 4), b(3, 4);
        const Simulation x = model.simulate(a);
        const Simulation y = model.simulate(b);
        CHECK(std::equal(x.z.values().begin(), x.z.values().end(), y.z.values().begin()));
        CHECK(x.z.size() == grid.size());
    }
}

TEST_CASE("model grids start at zero")
{
    CHECK(code_of([] { Model(ModelSpec::defaults(ModelTag::MixedFbm), make_grid(0.5, 1.0, 8)); }) ==
          ErrorCode::BadParams);
}

TEST_CASE("constant-volatility price has the geometric brownian log mean")
{
    ModelSpec spec = parse_model("SV_PRICE(vol=constant; rho=0; sigma=0.3; mu=0.1; p0=2)");
    const Model model(spec, make_grid(0.0, 1.0, 16));
    RngStream base(5, 0);
    std::vector<double> logs(100000);
    for (std::size_t r = 0; r < logs.size(); ++r) {
        RngStream s = base.substream(r);
        logs[r] = model.simulate(s).z.back();
    }
    CHECK(std::abs(mean(logs) - (std::log(2.0) + 0.1 - 0.045)) < 4.0 * std_error(logs));
}

TEST_CASE("positive models stay positive")
{
    const auto grid = make_grid(0.0, 1.0, 128);
    for (ModelTag t : all_model_tags()) {
        if (!is_price_model(t) && t != ModelTag::DoleansCe)
            continue;
        ModelSpec spec = ModelSpec::defaults(t);
        spec.log_space = false;
        const Model model(spec, grid);
        for (std::uint64_t s = 0; s < 200; ++s) {
            RngStream rng(s, 1);
            const Simulation sim = model.simulate(rng);
            for (double z : sim.z.values())
                REQUIRE(z > 0.0);
        }
    }
}

TEST_CASE("bns volatility stays positive in the price model")
{
    const Model model(ModelSpec::defaults(ModelTag::BnsPrice), make_grid(0.0, 1.0, 128));
    for (std::uint64_t s = 0; s < 500; ++s) {
        RngStream rng(s, 2);
        const Simulation sim = model.simulate(rng);
        for (double v : sim.v)
            REQUIRE(std::sqrt(v) > 0.0);
    }
}

TEST_CASE("exponential drift model reduces to the driving brownian motion")
{
    const auto grid = make_grid(0.0, 1.0, 256);
    ModelSpec spec = ModelSpec::defaults(ModelTag::ExpDriftPrice);
    const Model log_model(spec, grid);
    spec.log_space = false;
    const Model nat_model(spec, grid);
    for (std::uint64_t s = 0; s < 50; ++s) {
        RngStream a(s, 3), b(s, 3);
        const Simulation x = log_model.simulate(a);
        const Simulation y = nat_model.simulate(b);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            REQUIRE(x.z[i] - x.w[i] == 0.0);
            REQUIRE(std::abs(std::log(y.z[i]) - y.w[i]) <= 4.0 * DBL_EPSILON * std::max(1.0, std::abs(y.w[i])));
        }
    }
}

TEST_CASE("bridge model reconstructs the driving brownian motion")
{
    double previous = INFINITY;
    for (std::size_t n : {256u, 1024u}) {
        const Model model(ModelSpec::defaults(ModelTag::BridgeCe), make_grid(0.0, 1.0, n));
        std::vector<double> err;
        for (std::uint64_t s = 0; s < 200; ++s) {
            RngStream rng(s, 4);
            const Simulation sim = model.simulate(rng);
            double sup = 0.0;
            for (std::size_t i = 0; i < sim.z.size(); ++i)
                sup = std::max(sup, std::abs(sim.z[i] - sim.b[i]));
            err.push_back(sup);
            REQUIRE(sim.z.back() == sim.terminal);
        }
        const double e = mean(err);
        CHECK((e <= previous || e < 1e-12));
        previous = e;
    }
}

TEST_CASE("bridge continuation is pinned to the terminal value")
{
    const auto grid = make_grid(0.0, 1.0, 128);
    const Model model(ModelSpec::defaults(ModelTag::BridgeCe), grid);
    for (std::uint64_t s = 0; s < 100; ++s) {
        RngStream rng(s, 5);
        const ConditioningContext ctx = model.simulate(rng).context_at(40);
        for (auto mode : {ConditioningMode::Hold, ConditioningMode::Redraw}) {
            Continuation c;
            continue_into(ctx, mode, rng, c);
            REQUIRE(c.rel.back() == ctx.terminal - ctx.b_state);
            REQUIRE(c.rel.front() == 0.0);
        }
    }
}

TEST_CASE("vacuous conditioning at time zero reproduces the model law")
{
    const auto grid = make_grid(0.0, 1.0, 64);
    const std::size_t n = 10000;
    for (ModelTag t : all_model_tags()) {
        if (t == ModelTag::BridgeCe || t == ModelTag::BnsPrice)
            continue;
        ModelSpec spec = ModelSpec::defaults(t);
        if (t == ModelTag::WienerIntegral)
            spec = parse_model("WIENER_INTEGRAL(k_noise=0.5; h_noise=0.3; k_slope=1)");
        const Model model(spec, grid);
        RngStream rng(6, 6);
        const ConditioningContext ctx = model.simulate(rng).context_at(0);
        const auto a = continuation_ends(ctx, ConditioningMode::Redraw, n, 10);
        const auto b = simulated_ends(model, n, 11);
        INFO(to_string(t));
        CHECK(ks_statistic(a, b) < ks_critical_1pct(n, n));
    }
}

TEST_CASE("held mixed fbm continuation has brownian tail variance")
{
    const auto grid = make_grid(0.0, 1.0, 128);
    const Model model(ModelSpec::defaults(ModelTag::MixedFbm), grid);
    RngStream rng(7, 7);
    const ConditioningContext ctx = model.simulate(rng).context_at(32);
    const std::size_t n = 100000;
    const auto held = continuation_ends(ctx, ConditioningMode::Hold, n, 12);
    const double tail = 1.0 - grid.node(32);
    CHECK(std::abs(variance(held) - tail) < 4.0 * tail * std::sqrt(2.0 / n));
    const auto redrawn = continuation_ends(ctx, ConditioningMode::Redraw, 20000, 13);
    CHECK(variance(redrawn) > tail * 1.2);
}

TEST_CASE("continuations start from the restart value")
{
    const auto grid = make_grid(0.0, 1.0, 64);
    for (ModelTag t : all_model_tags()) {
        const Model model(ModelSpec::defaults(t), grid);
        RngStream rng(8, 8);
        const Simulation sim = model.simulate(rng);
        const ConditioningContext ctx = sim.context_at(20);
        const Path tail = continue_conditional(ModelSpec::defaults(t), ctx, ctx.tail_grid(), rng);
        INFO(to_string(t));
        CHECK(tail.front() == doctest::Approx(sim.z[20]).epsilon(1e-12));
        CHECK(tail.size() == 45);
    }
}

TEST_CASE("contexts are checked against the model")
{
    const auto grid = make_grid(0.0, 1.0, 16);
    RngStream rng(1, 1);
    const ConditioningContext ctx = Model(ModelSpec::defaults(ModelTag::MixedFbm), grid).simulate(rng).context_at(4);
    CHECK(code_of([&] { check_context(ModelSpec::defaults(ModelTag::SvPrice), ctx); }) ==
          ErrorCode::IncompatibleContext);
    CHECK(code_of([&] {
              continue_conditional(ModelSpec::defaults(ModelTag::MixedFbm), ctx, grid.tail(5), rng);
          }) == ErrorCode::IncompatibleContext);
    const Simulation sim = Model(ModelSpec::defaults(ModelTag::MixedFbm), grid).simulate(rng);
    CHECK(code_of([&] { sim.context_at(16); }) == ErrorCode::BadQuery);
}

TEST_CASE("feller warning")
{
    CHECK_FALSE(feller_warning(ModelSpec::defaults(ModelTag::SvPrice)).has_value());
    const ModelSpec harsh = parse_model("SV_PRICE(xi=1)");
    CHECK(feller_warning(harsh).has_value());
    RngStream rng(1, 1);
    const Simulation sim = simulate(harsh, make_grid(0.0, 1.0, 16), rng);
    REQUIRE(sim.warnings.size() == 1);
    CHECK(sim.warnings[0].find("FellerWarning") == 0);
}

TEST_CASE("hypothesis checklists")
{
    const auto dol = validate_spec(ModelSpec::defaults(ModelTag::DoleansCe));
    CHECK(dol.note == "Z strictly positive; CFS in R impossible");
    CHECK_FALSE(dol.all_pass());

    const auto sde = validate_spec(parse_model("SDE_PRICE(mu=0.05; sigma_lo=0.3; sigma_hi=0.3; mu_bar=0.05; "
                                               "sigma_bar=3.3333333333333335)"));
    CHECK(sde.all_pass());
    bool saw_bounds = false;
    for (const auto& c : sde.checks)
        if (c.name.find("sigma_bar") != std::string::npos) {
            saw_bounds = true;
            CHECK(c.status == CheckStatus::Pass);
        }
    CHECK(saw_bounds);

    const auto bad = validate_spec(parse_model("SDE_PRICE(mu=0.2; mu_bar=0.05)"));
    CHECK_FALSE(bad.all_pass());

    const auto mixed = validate_spec(ModelSpec::defaults(ModelTag::MixedFbm));
    CHECK(mixed.all_pass());
    CHECK(mixed.checks[1].name == "k zero set empty on the grid");
    CHECK(mixed.checks[1].status == CheckStatus::Pass);

    CHECK(validate_spec(ModelSpec::defaults(ModelTag::BnsPrice)).all_pass());
    CHECK_FALSE(validate_spec(ModelSpec::defaults(ModelTag::BridgeCe)).all_pass());
}
