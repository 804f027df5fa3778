#include <aperc/true_process.hpp>

#include <gtest/gtest.h>

using namespace aperc;

namespace {
LatticeConfig cfg_n(std::int64_t n, std::uint64_t seed = 1)
{
    LatticeConfig c;
    c.n = n;
    c.seed = seed;
    return c;
}
} // namespace

TEST(StepTrue, SiteNeverReoccupied)
{
    auto cfg = cfg_n(1);
    cfg.p_h_override = 1.0;
    const EnvelopeKernel k(cfg);
    Stream rng(1);
    OccupancyField f = OccupancyField::from_sites({0});
    for (int i = 0; i < 10; ++i) {
        advance_true(f, k, rng);
        EXPECT_FALSE(f.is_occupied(0));
    }
    // With every coin open and N = 1 the front moves out one site per step.
    EXPECT_EQ(f.occupied, (std::vector<std::int64_t>{-10, 10}));
}

TEST(StepTrue, EmptyIsAbsorbing)
{
    const EnvelopeKernel k(cfg_n(8));
    Stream rng(2);
    OccupancyField f;
    for (int i = 0; i < 5; ++i)
        f = step_true(f, k, rng);
    EXPECT_TRUE(f.extinct());
    EXPECT_EQ(f.n, 5);
}

TEST(StepTrue, AttritionInvariants)
{
    const EnvelopeKernel k(cfg_n(8));
    Stream rng(3);
    OccupancyField f = OccupancyField::from_sites({-40, 0, 40});
    for (int i = 0; i < 50 && !f.extinct(); ++i) {
        const auto before = f.visited;
        advance_true(f, k, rng);
        for (auto x : f.occupied) {
            EXPECT_FALSE(before.contains(x));
            EXPECT_TRUE(f.visited.contains(x));
        }
        EXPECT_GE(f.cum_mass(), static_cast<std::int64_t>(before.size()));
    }
}

TEST(StepTrue, KillWindowRespected)
{
    const EnvelopeKernel k(cfg_n(8));
    Stream rng(4);
    OccupancyField f = OccupancyField::from_sites({0, 1, 2, 3});
    f.kill_window = std::pair<std::int64_t, std::int64_t>{-5, 5};
    for (int i = 0; i < 20 && !f.extinct(); ++i) {
        advance_true(f, k, rng);
        for (auto x : f.occupied)
            EXPECT_TRUE(x >= -5 && x <= 5);
    }
}

TEST(StepTrue, SubordinatedVisitsSubsetOfFree)
{
    // Same coins: the killed run is obtained from the free run by deleting
    // births outside the window, so it can only visit fewer sites.
    const EnvelopeKernel k(cfg_n(8));
    for (std::uint64_t s = 0; s < 30; ++s) {
        OccupancyField free = OccupancyField::from_sites({0});
        OccupancyField killed = free;
        killed.kill_window = std::pair<std::int64_t, std::int64_t>{-30, 30};
        // Drive both with one parent-indexed stream: each parent y at step t uses its own child stream.
        for (int t = 0; t < 40; ++t) {
            auto step = [&](OccupancyField& f) {
                std::vector<std::int64_t> born;
                for (auto y : f.occupied) {
                    Stream r(hash_key(s, t, y));
                    k.reproduce(r, [&](std::int64_t o) {
                        if (f.in_window(y + o) && !f.visited.contains(y + o))
                            born.push_back(y + o);
                    });
                }
                std::sort(born.begin(), born.end());
                born.erase(std::unique(born.begin(), born.end()), born.end());
                f.occupied = born;
                f.visited.insert(born.begin(), born.end());
            };
            step(free);
            step(killed);
        }
        for (auto x : killed.visited)
            EXPECT_TRUE(free.visited.contains(x)) << "seed " << s;
    }
}

TEST(Coupling, DominationHoldsPathwise)
{
    const EnvelopeKernel k(cfg_n(16));
    for (std::uint64_t r = 0; r < 100; ++r) {
        Stream rng(replica_seed(11, r));
        const auto s = run_coupled(k, 2000, rng);
        EXPECT_EQ(s.violations, 0);
        EXPECT_TRUE(s.level_order_ok);
        EXPECT_LE(s.max_true_mass, s.max_envelope_mass);
    }
}

TEST(Coupling, DetectsBrokenPrecondition)
{
    const EnvelopeKernel k(cfg_n(4));
    Stream rng(1);
    OccupancyField t = OccupancyField::from_sites({5});
    ParticleField e = ParticleField::point(0);
    EXPECT_THROW(advance_coupled(t, e, k, rng), std::logic_error);
    EXPECT_EQ(domination_violations(t, e), 1);
}

TEST(ClusterSize, AllClosedIsOne)
{
    auto cfg = cfg_n(16);
    cfg.p_h_override = 0.0;
    const auto s = cumulative_cluster_size(cfg, 1000, 20);
    EXPECT_EQ(s.mean, 1.0);
    EXPECT_EQ(s.capped, 0);
    EXPECT_FALSE(s.unreliable());
}

TEST(ClusterSize, CapFlagsUnreliable)
{
    const auto s = cumulative_cluster_size(cfg_n(16), 2, 200);
    EXPECT_GT(s.capped, 2);
    EXPECT_TRUE(s.unreliable());
}

TEST(ClusterSize, NormalizedMeanOfOrderOne)
{
    const auto s = cumulative_cluster_size(cfg_n(50), 10'000'000, 2000);
    EXPECT_EQ(s.capped, 0);
    EXPECT_GT(s.normalized, 0.3);
    EXPECT_LT(s.normalized, 10.0);
}

TEST(MassDecay, DecreasesWithHorizon)
{
    const auto cfg = cfg_n(200, 4);
    const double unit = std::pow(200.0, 0.4);
    double prev = INFINITY;
    for (double m3 : {1.0, 4.0, 16.0}) {
        const auto e = mass_at_step(cfg, static_cast<std::int64_t>(std::ceil(m3 * unit)), 3000);
        EXPECT_LT(e.value, prev);
        prev = e.value;
    }
}

TEST(HittingHat, LevelZeroAndOrdering)
{
    Stream rng(1);
    const auto r = run_hitting_time_hat(cfg_n(16), 0, 10, rng);
    EXPECT_TRUE(r.finite);
    EXPECT_EQ(r.t, 0);
}

TEST(HittingHat, ConditionalRatiosBelowOne)
{
    const auto c = conditional_level_chain(cfg_n(256, 2), 3, 7, 400, 100000);
    EXPECT_GT(c.entry.value, 0.0);
    ASSERT_EQ(c.ratio.size(), 4u);
    for (const auto& r : c.ratio)
        EXPECT_LT(r.value, 1.0);
    EXPECT_LT(c.ratio.back().value, c.ratio.front().value);
}

TEST(AttritionError, ExactAndBounded)
{
    for (std::int64_t n : {4, 32})
        for (std::int64_t m : std::vector<std::int64_t>{0, 1, 3, 10, 2 * n}) {
            const double e = attrition_error(m, n);
            EXPECT_GE(e, -1e-15);
            EXPECT_LE(e, static_cast<double>(m * m) / (4.0 * n * n) + 1e-15);
        }
    EXPECT_NEAR(attrition_error(1, 8), 0.0, 1e-15);
}

// ---------------------------------------------------------------------------
// Good configurations

namespace {
GoodSpec spec_for(std::int64_t n, double a = -1.0, double b = 1.0, double delta = 0.5)
{
    return GoodSpec{a, b, delta, n, 0.2};
}
} // namespace

TEST(Good, RoundTrip)
{
    for (std::int64_t n : {std::int64_t{1} << 20, std::int64_t{10'000'000}, std::int64_t{100'000'000}})
        for (auto [a, b] : {std::pair{-1.0, 1.0}, std::pair{-0.3, 2.2}})
            EXPECT_TRUE(is_good(make_good(spec_for(n, a, b)), spec_for(n, a, b)));
}

TEST(Good, TotalCountMatchesFloorSum)
{
    const auto spec = spec_for(100'000'000);
    const auto f = make_good(spec);
    const auto [lo, hi] = spec.inside_range();
    std::int64_t sum = 0;
    for (auto i = lo; i <= hi; ++i)
        sum += spec.target(i);
    EXPECT_EQ(f.mass(), sum);
    // Every J inside I carries floor(N^{1/10}) sites; (b - a) N^{3/10} of them, up to one at the ends.
    const double per_j = std::floor(std::pow(1e8, 0.1));
    EXPECT_NEAR(static_cast<double>(f.mass()), (spec.b - spec.a) * std::pow(1e8, 0.3) * per_j, per_j);
}

TEST(Good, RemovingASiteBreaksGoodness)
{
    const auto spec = spec_for(10'000'000);
    auto sites = make_good(spec).occupied;
    sites.erase(sites.begin() + static_cast<std::ptrdiff_t>(sites.size() / 2));
    EXPECT_FALSE(is_good(OccupancyField::from_sites(sites), spec));
}

TEST(Good, EmptyAndInfiniteTolerance)
{
    const auto spec = spec_for(10'000'000);
    EXPECT_FALSE(is_good(OccupancyField{}, spec));
    EXPECT_TRUE(is_good_relaxed(OccupancyField{}, spec, INFINITY));
}

TEST(Good, ShiftByOneSite)
{
    // Shifting every site by one moves the last site of some J into the
    // next J, so exact counts break while each J is off by at most one.
    const auto spec = spec_for(10'000'000);
    auto sites = make_good(spec).occupied;
    bool crossed = false;
    for (auto& x : sites) {
        if (spec.index_of(x) != spec.index_of(x - 1))
            crossed = true;
        x -= 1;
    }
    ASSERT_TRUE(crossed);
    const auto shifted = OccupancyField::from_sites(sites);
    EXPECT_FALSE(is_good(shifted, spec));
    EXPECT_TRUE(is_good_relaxed(shifted, spec, 1.0));
}

TEST(Good, SitesOutsideIntervalRejected)
{
    const auto spec = spec_for(10'000'000);
    auto sites = make_good(spec).occupied;
    sites.push_back(static_cast<std::int64_t>(5.0 * spec.scale()));
    EXPECT_FALSE(is_good(OccupancyField::from_sites(sites), spec));
}

TEST(Good, SpecValidation)
{
    EXPECT_THROW(make_good(spec_for(10'000'000, 1.0, -1.0)), std::invalid_argument);
    EXPECT_THROW(make_good(GoodSpec{-1, 1, 0.0, 10'000'000, 0.2}), std::invalid_argument);
    const auto spec = spec_for(1 << 20);
    for (std::int64_t j = -5000; j <= 5000; j += 37) {
        const auto i = spec.index_of(j);
        EXPECT_LE(spec.site_begin(i), j);
        EXPECT_GT(spec.site_begin(i + 1), j);
    }
}

TEST(Thin, KeepsLeftmostAndReportsShortfall)
{
    const auto spec = spec_for(10'000'000);
    const auto good = make_good(spec);
    // Superset: every site of the good field plus neighbours.
    std::vector<std::int64_t> cand;
    for (auto x : good.occupied) {
        cand.push_back(x);
        cand.push_back(x + 1);
    }
    const auto t = thin_to_good(cand, spec);
    ASSERT_TRUE(t.ok);
    EXPECT_TRUE(is_good(t.field, spec));
    EXPECT_EQ(t.filled, t.total);

    std::vector<std::int64_t> half(good.occupied.begin(), good.occupied.begin() + static_cast<std::ptrdiff_t>(good.occupied.size() / 2));
    const auto s = thin_to_good(half, spec);
    EXPECT_FALSE(s.ok);
    EXPECT_LT(s.have, s.need);
    EXPECT_LT(s.filled, s.total);
    EXPECT_GT(s.filled, 0);
}
