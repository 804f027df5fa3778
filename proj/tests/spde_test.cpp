#include <aperc/spde.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace aperc;

namespace {

/// Gaussian profile of total mass `mass` and variance v.
std::function<double(double)> gaussian_profile(double mass, double v)
{
    return [=](double x) { return mass * std::exp(-x * x / (2 * v)) / std::sqrt(2 * std::numbers::pi * v); };
}

SpdeConfig small_grid()
{
    SpdeConfig c;
    c.half_width = 4.0;
    c.dx = 0.1;
    c.dt = 1e-3;
    return c;
}

} // namespace

TEST(SpdeConfig, StabilityEnforced)
{
    SpdeConfig c;
    c.dx = 0.01;
    c.dt = 1e-3;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.dt = 3e-4;
    EXPECT_NO_THROW(c.validate());
    EXPECT_GE(recommended_half_width(1.0, 1.0), 4.0 * (1.0 + 6.0 * std::sqrt(1.0 / 3.0)) - 1e-12);
}

TEST(StepDw, ZeroStaysZero)
{
    const auto cfg = small_grid();
    SpdeState s = make_state(cfg, [](double) { return 0.0; });
    Stream rng(1);
    for (int k = 0; k < 100; ++k)
        step_dw(s, cfg, rng);
    for (double v : s.u)
        EXPECT_EQ(v, 0.0);
    EXPECT_THROW(make_state(cfg, [](double) { return -1.0; }), std::invalid_argument);
}

TEST(StepDw, NoiseOffMatchesHeatKernel)
{
    SpdeConfig c;
    c.dx = 0.01;
    c.dt = 2.5e-4;
    c.half_width = recommended_half_width(0.0, 1.0);
    c.noise = NoiseScheme::none;
    const auto u = heat_solve(c, [&](double x) { return std::abs(x) < c.dx / 2 ? 1.0 / c.dx : 0.0; }, 1.0);
    double l1 = 0.0;
    for (std::int64_t i = 0; i < c.nodes(); ++i)
        l1 += std::abs(u[static_cast<std::size_t>(i)] - heat_kernel(1.0, c.x(i))) * c.dx;
    EXPECT_LT(l1, 0.01);
}

TEST(StepDw, StateInvariants)
{
    auto cfg = small_grid();
    cfg.kill = true;
    SpdeState s = make_state(cfg, gaussian_profile(2.0, 0.25));
    Stream rng(2);
    for (int k = 0; k < 200; ++k) {
        const auto before = s.theta;
        step_dw(s, cfg, rng);
        for (std::size_t i = 0; i < s.u.size(); ++i) {
            EXPECT_GE(s.u[i], 0.0);
            EXPECT_GE(s.theta[i], before[i]);
        }
        EXPECT_EQ(s.u.front(), 0.0);
        EXPECT_EQ(s.u.back(), 0.0);
    }
    EXPECT_EQ(s.clamped, 0.0);
}

TEST(StepDw, KillingLowersMeanMass)
{
    auto on = small_grid();
    on.kill = true;
    const auto off = small_grid();
    const auto f = gaussian_profile(2.0, 0.25);
    const auto with = total_mass_moments(on, f, 0.5, 1000, 4);
    const auto without = total_mass_moments(off, f, 0.5, 1000, 4);
    EXPECT_LT(with.mean, without.mean);
}

TEST(FellerTransition, OneStepVarianceMatchesNoiseScaling)
{
    // Var of the cell mass over dt is m dt, i.e. Var u = u dt / dx.
    Stream rng(3);
    const double m = 0.5, dt = 1e-3;
    RunningStats s;
    for (int i = 0; i < 1'000'000; ++i)
        s.add(feller_transition(m, dt, rng));
    EXPECT_LE(std::abs(s.mean() - m), 4 * s.stderr_mean());
    EXPECT_NEAR(s.variance() / (m * dt), 1.0, 0.02);
    EXPECT_EQ(feller_transition(0.0, dt, rng), 0.0);
}

TEST(TotalMass, TimeZero)
{
    const auto cfg = small_grid();
    const auto f = gaussian_profile(2.0, 0.25);
    const auto m = total_mass_moments(cfg, f, 0.0, 10, 1);
    EXPECT_NEAR(m.mean, make_state(cfg, f).total_mass(cfg.dx), 1e-14);
    EXPECT_EQ(m.variance, 0.0);
    EXPECT_THROW(total_mass_moments(cfg, f, 0.0015, 10, 1), std::invalid_argument);
}

TEST(TotalMass, FellerMoments)
{
    const auto cfg = small_grid();
    const auto f = gaussian_profile(2.0, 0.25);
    const double x0 = make_state(cfg, f).total_mass(cfg.dx);
    EXPECT_NEAR(x0, 2.0, 1e-9);
    const auto m = total_mass_moments(cfg, f, 0.5, 4000, 5);
    EXPECT_LE(std::abs(m.mean - x0), 4 * m.mean_se);
    EXPECT_NEAR(m.variance / (x0 * 0.5), 1.0, 0.1);
    EXPECT_EQ(m.max_clamp_rate, 0.0);
}

TEST(TotalMass, OneStepMartingale)
{
    const auto cfg = small_grid();
    const SpdeState init = make_state(cfg, gaussian_profile(2.0, 0.25));
    const double x0 = init.total_mass(cfg.dx);
    RunningStats s;
    for (std::int64_t r = 0; r < 100000; ++r) {
        Stream rng(path_seed(9, r));
        SpdeState st = init;
        step_dw(st, cfg, rng);
        s.add(st.total_mass(cfg.dx) - x0);
    }
    // The heat step leaks a little mass through the Dirichlet walls; at
    // this width the leak is far below the Monte Carlo error.
    EXPECT_LE(std::abs(s.mean()), 4 * s.stderr_mean());
}

TEST(TotalMass, ClampAccounting)
{
    SpdeConfig c;
    c.half_width = 4.0;
    c.dx = 0.02;
    c.dt = 1e-3;
    const auto f = gaussian_profile(2.0, 0.25);
    const auto exact = total_mass_moments(c, f, 0.05, 20, 6);
    EXPECT_EQ(exact.max_clamp_rate, 0.0);
    // Euler-Maruyama clamps heavily in the low-mass tails; the run must be flagged.
    c.noise = NoiseScheme::euler;
    Stream rng(6);
    SpdeState s = make_state(c, f);
    for (int k = 0; k < 50; ++k)
        step_dw(s, c, rng);
    EXPECT_GT(s.clamped, 0.0);
    EXPECT_EQ(s.clamp_flagged(c.dx), s.clamp_rate(c.dx) >= 1e-3);
}

TEST(FellerSup, MaximalInequality)
{
    std::vector<double> levels;
    for (int k = 2; k <= 6; ++k)
        levels.push_back(std::ldexp(1.0, k));
    const auto tail = feller_sup_tail(2.0, levels, 1e-2, 4000, 8);
    for (std::size_t i = 0; i < levels.size(); ++i)
        EXPECT_LE(tail[i].value, 2.0 / levels[i] + 3 * tail[i].stderr_);
}

TEST(Dual, ZeroStaysZero)
{
    const auto u = dual_solve(small_grid(), [](double) { return 0.0; }, 0.5);
    for (double v : u)
        EXPECT_EQ(v, 0.0);
}

TEST(Dual, RiccatiClosedForm)
{
    auto cfg = small_grid();
    cfg.dt = 1e-5;
    const double c0 = 3.0, t = 0.5;
    const auto u = dual_solve(cfg, [&](double) { return c0; }, t, 1.0, false);
    for (double v : u)
        EXPECT_NEAR(v, c0 / (1 + c0 * t), 1e-6);
}

TEST(Dual, BelowLinearHeatFlow)
{
    const auto cfg = small_grid();
    const auto phi = [](double x) { return 2.0 * std::exp(-x * x); };
    const auto dual = dual_solve(cfg, phi, 0.5);
    const auto heat = heat_solve(cfg, phi, 0.5);
    for (std::size_t i = 0; i < dual.size(); ++i)
        EXPECT_LE(dual[i], heat[i] + 1e-15);
}

TEST(Dual, LaplaceDuality)
{
    const auto cfg = small_grid();
    const auto d = duality_check(cfg, gaussian_profile(2.0, 0.25), [](double x) { return std::exp(-x * x); }, 0.25, 4000, 10);
    EXPECT_LE(std::abs(d.monte_carlo.value - d.predicted), 3 * d.monte_carlo.stderr_);
    auto killed = cfg;
    killed.kill = true;
    EXPECT_THROW(duality_check(killed, gaussian_profile(1, 1), [](double) { return 1.0; }, 0.1, 2, 1), std::invalid_argument);
}

TEST(Girsanov, TrivialWeights)
{
    const auto cfg = small_grid();
    PathRecord empty;
    EXPECT_EQ(girsanov_log_weight(empty), 0.0);
    SpdeState s = make_state(cfg, [](double) { return 0.0; });
    Stream rng(1);
    PathRecord rec;
    for (int k = 0; k < 20; ++k)
        step_dw(s, cfg, rng, &rec);
    EXPECT_EQ(girsanov_log_weight(rec), 0.0);
    rec.dm.pop_back();
    EXPECT_THROW(girsanov_log_weight(rec), std::invalid_argument);
}

TEST(Girsanov, ExponentialMeanOne)
{
    SpdeConfig c;
    c.half_width = 3.0;
    c.dx = 0.1;
    c.dt = 1e-3;
    const auto g = girsanov_mean(c, gaussian_profile(2.0, 0.25), 0.1, 3000, 11);
    EXPECT_LE(std::abs(g.value - 1.0), 3 * g.stderr_);
}

TEST(HeatFlat, NoiselessMeetsCalibratedBounds)
{
    SpdeConfig c;
    c.half_width = 4.0;
    c.dx = 0.02;
    c.dt = 1e-4;
    c.kill = true;
    c.noise = NoiseScheme::none;
    const auto h = heat_flat_bound(c, 1.0, 0.5, 1, 1);
    EXPECT_EQ(h.probability.value, 1.0);
    EXPECT_NEAR(h.target, 1 - std::pow(0.5, 3.5), 1e-15);
}

TEST(HeatFlat, EulerReferenceSchemeAtDeltaHalf)
{
    SpdeConfig c;
    c.half_width = 4.0;
    c.dx = 0.02;
    c.dt = 1e-4;
    c.kill = true;
    c.noise = NoiseScheme::euler;
    const auto h = heat_flat_bound(c, 1.0, 0.5, 1000, 7);
    EXPECT_GE(h.probability.value, 0.85);
}

TEST(Plateau, Shape)
{
    const auto p = plateau(1.0, 0.5);
    EXPECT_EQ(p(0.3), 1.0);
    EXPECT_EQ(p(1.0), 1.0);
    EXPECT_NEAR(p(1.25), 0.5, 1e-15);
    EXPECT_EQ(p(-2.0), 0.0);
    EXPECT_NEAR(heat_indicator(0.0, -1, 1, 0.5), 1.0, 0);
}
