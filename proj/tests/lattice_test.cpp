#include <aperc/lattice.hpp>

#include <gtest/gtest.h>

#include <map>
#include <numeric>

using namespace aperc;

namespace {

LatticeConfig small(std::int64_t n, std::uint64_t seed)
{
    LatticeConfig c;
    c.n = n;
    c.seed = seed;
    return c;
}

/// Union-find over all edges of the box [-w, w] x [0, layers-1].
struct BoxComponents {
    std::int64_t w, layers;
    std::vector<std::int64_t> parent;
    std::int64_t id(std::int64_t x, std::int64_t l) const { return l * (2 * w + 1) + (x + w); }
    std::int64_t find(std::int64_t a)
    {
        while (parent[a] != a)
            a = parent[a] = parent[parent[a]];
        return a;
    }
    BoxComponents(const LatticeConfig& cfg, std::int64_t w_, std::int64_t layers_) : w(w_), layers(layers_)
    {
        parent.resize(static_cast<std::size_t>((2 * w + 1) * layers));
        std::iota(parent.begin(), parent.end(), 0);
        for (std::int64_t l = 0; l < layers; ++l)
            for (std::int64_t x = -w; x <= w; ++x) {
                for (std::int64_t d = 1; d <= cfg.n && x + d <= w; ++d)
                    if (edge_is_open(cfg, EdgeId::between({x, l}, {x + d, l}, cfg.n)))
                        parent[find(id(x, l))] = find(id(x + d, l));
                if (l + 1 < layers && edge_is_open(cfg, EdgeId::between({x, l}, {x, l + 1}, cfg.n)))
                    parent[find(id(x, l))] = find(id(x, l + 1));
            }
    }
};

} // namespace

TEST(EdgeId, OrientationIndependentAndValidated)
{
    const Site u{3, 1}, v{5, 1};
    EXPECT_EQ(EdgeId::between(u, v, 4), EdgeId::between(v, u, 4));
    EXPECT_EQ(EdgeId::between({0, 0}, {0, 1}, 4).kind(), EdgeKind::vertical);
    EXPECT_THROW(EdgeId::between({0, 0}, {5, 0}, 4), std::invalid_argument);
    EXPECT_THROW(EdgeId::between({0, 0}, {0, 0}, 4), std::invalid_argument);
    EXPECT_THROW(EdgeId::between({0, 0}, {1, 1}, 4), std::invalid_argument);
    EXPECT_THROW(EdgeId::between({0, 0}, {0, 2}, 4), std::invalid_argument);
}

TEST(EdgeIsOpen, DeterministicAndSymmetric)
{
    const auto cfg = small(8, 99);
    for (std::int64_t x = -20; x <= 20; ++x)
        for (std::int64_t d = 1; d <= 8; ++d) {
            const auto e = EdgeId::between({x, 2}, {x + d, 2}, 8);
            EXPECT_EQ(edge_is_open(cfg, e), edge_is_open(cfg, e));
            EXPECT_EQ(edge_is_open(cfg, e), edge_is_open(cfg, EdgeId::between({x + d, 2}, {x, 2}, 8)));
        }
}

TEST(EdgeIsOpen, KappaZeroClosesEveryVerticalEdge)
{
    auto cfg = small(8, 1);
    cfg.kappa = 0.0;
    for (std::int64_t x = -100; x <= 100; ++x)
        EXPECT_FALSE(edge_is_open(cfg, EdgeId::between({x, 0}, {x, 1}, 8)));
}

TEST(EdgeIsOpen, NOneOpenFractionIsHalf)
{
    std::int64_t open = 0;
    const std::int64_t total = 1'000'000;
    for (std::int64_t i = 0; i < total; ++i) {
        const auto cfg = small(1, static_cast<std::uint64_t>(i % 1000));
        open += edge_is_open(cfg, EdgeId::between({i / 1000, 0}, {i / 1000 + 1, 0}, 1)) ? 1 : 0;
    }
    EXPECT_NEAR(static_cast<double>(open) / total, 0.5, 0.002);
}

TEST(EdgeIsOpen, HorizontalDegreeIsBinomial)
{
    const std::int64_t n = 8;
    BinomialTable law(2 * n, 1.0 / (2.0 * n));
    std::vector<std::int64_t> counts(law.pmf().size(), 0);
    for (std::int64_t i = 0; i < 100000; ++i) {
        const auto cfg = small(n, static_cast<std::uint64_t>(i));
        std::int64_t deg = 0;
        for (std::int64_t d = 1; d <= n; ++d) {
            deg += edge_is_open(cfg, EdgeId::between({0, 0}, {d, 0}, n)) ? 1 : 0;
            deg += edge_is_open(cfg, EdgeId::between({0, 0}, {-d, 0}, n)) ? 1 : 0;
        }
        ++counts[static_cast<std::size_t>(std::min<std::int64_t>(deg, static_cast<std::int64_t>(counts.size()) - 1))];
    }
    EXPECT_GT(chi_square_gof(counts, law.pmf()).p_value, 0.01);
}

TEST(ExploreCluster, AllCoinsClosedGivesOrigin)
{
    auto cfg = small(4, 1);
    cfg.p_h_override = 0.0;
    cfg.p_v_override = 0.0;
    const auto c = explore_cluster(cfg, {5, 3});
    EXPECT_EQ(c.size(), 1);
    EXPECT_EQ(c.generation.at({5, 3}), 0);
    EXPECT_FALSE(c.truncated);
}

TEST(ExploreCluster, KappaZeroStaysOnLayer)
{
    for (std::uint64_t s = 0; s < 50; ++s) {
        auto cfg = small(16, s);
        cfg.kappa = 0.0;
        const auto c = explore_cluster(cfg, {0, 7});
        for (const auto& [site, g] : c.generation)
            EXPECT_EQ(site.layer, 7);
    }
}

TEST(ExploreCluster, GenerationsFormBfsTree)
{
    auto cfg = small(4, 17);
    cfg.p_v_override = 0.3;
    cfg.caps.layer_window = std::pair<std::int64_t, std::int64_t>{0, 3};
    const auto c = explore_cluster(cfg, {0, 0});
    for (const auto& [s, g] : c.generation) {
        if (g == 0)
            continue;
        bool has_parent = false;
        auto check = [&](const Site& t) {
            const auto it = c.generation.find(t);
            if (it == c.generation.end() || it->second != g - 1)
                return;
            if (edge_is_open(cfg, EdgeId::between(s, t, cfg.n)))
                has_parent = true;
        };
        for (std::int64_t d = 1; d <= cfg.n; ++d) {
            check({s.x - d, s.layer});
            check({s.x + d, s.layer});
        }
        check({s.x, s.layer - 1});
        check({s.x, s.layer + 1});
        EXPECT_TRUE(has_parent);
    }
}

TEST(ExploreCluster, MatchesUnionFindInBox)
{
    // N = 2, three layers; the brute force works on a box wide enough that
    // seeds whose cluster stays away from the walls are exact comparisons.
    const std::int64_t w = 60;
    int compared = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        auto cfg = small(2, s);
        cfg.p_v_override = 0.3;
        cfg.caps.layer_window = std::pair<std::int64_t, std::int64_t>{0, 2};
        const auto c = explore_cluster(cfg, {0, 1});
        bool inside = !c.truncated;
        for (const auto& [site, g] : c.generation)
            inside = inside && std::abs(site.x) <= w - 2 * cfg.n;
        if (!inside)
            continue;
        ++compared;
        BoxComponents uf(cfg, w, 3);
        const auto root = uf.find(uf.id(0, 1));
        std::int64_t size = 0;
        for (std::int64_t l = 0; l < 3; ++l)
            for (std::int64_t x = -w; x <= w; ++x)
                if (uf.find(uf.id(x, l)) == root) {
                    ++size;
                    EXPECT_TRUE(c.contains({x, l})) << "seed " << s;
                }
        EXPECT_EQ(size, c.size()) << "seed " << s;
    }
    EXPECT_GE(compared, 100);
}

TEST(ExploreCluster, SameClusterFromAnyMember)
{
    auto cfg = small(8, 5);
    cfg.caps.layer_window = std::pair<std::int64_t, std::int64_t>{-2, 2};
    const auto a = explore_cluster(cfg, {0, 0});
    ASSERT_FALSE(a.truncated);
    const Site other = std::max_element(a.generation.begin(), a.generation.end(),
        [](const auto& p, const auto& q) { return p.second < q.second; })->first;
    const auto b = explore_cluster(cfg, other);
    EXPECT_EQ(a.size(), b.size());
    for (const auto& [s, g] : a.generation)
        EXPECT_TRUE(b.contains(s));
}

TEST(ExploreCluster, MonotoneInKappa)
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto lo = small(8, s), hi = small(8, s);
        lo.kappa = 0.2;
        hi.kappa = 0.8;
        lo.caps.layer_window = hi.caps.layer_window = std::pair<std::int64_t, std::int64_t>{-3, 3};
        const auto a = explore_cluster(lo, {0, 0});
        const auto b = explore_cluster(hi, {0, 0});
        ASSERT_FALSE(b.truncated);
        for (const auto& [site, g] : a.generation)
            EXPECT_TRUE(b.contains(site));
    }
}

TEST(ExploreCluster, CapsTruncate)
{
    auto cfg = small(4, 2);
    cfg.p_h_override = 1.0;
    cfg.caps.max_sites = 50;
    cfg.caps.layer_window = std::pair<std::int64_t, std::int64_t>{0, 0};
    const auto c = explore_cluster(cfg, {0, 0});
    EXPECT_TRUE(c.truncated);
    EXPECT_LE(c.size(), 50);
    cfg.caps.max_sites = 1'000'000;
    cfg.caps.max_generation = 3;
    const auto g = explore_cluster(cfg, {0, 0});
    EXPECT_TRUE(g.truncated);
    EXPECT_EQ(g.size(), 2 * 3 * 4 + 1);
}

TEST(Crossing, AllOpenCrossesAlways)
{
    auto cfg = small(4, 1);
    cfg.p_h_override = 1.0;
    cfg.p_v_override = 1.0;
    const auto e = crossing_probability(cfg, CrossingBox{8, 5, {}}, 20);
    EXPECT_EQ(e.value, 1.0);
}

TEST(Crossing, KappaZeroNeverCrosses)
{
    auto cfg = small(8, 1);
    cfg.kappa = 0.0;
    const auto e = crossing_probability(cfg, CrossingBox{40, 3, {}}, 50);
    EXPECT_EQ(e.value, 0.0);
    EXPECT_EQ(e.reps, 50);
}

TEST(Crossing, RejectsBadInput)
{
    const auto cfg = small(8, 1);
    EXPECT_THROW(crossing_probability(cfg, CrossingBox{40, 3, {}}, 0), std::invalid_argument);
    EXPECT_THROW(crossing_probability(cfg, CrossingBox{10, 3, {}}, 5), std::invalid_argument);
    EXPECT_THROW(crossing_probability(cfg, CrossingBox{40, 0, {}}, 5), std::invalid_argument);
}

TEST(Crossing, MonotoneInKappaAtN64)
{
    const CrossingBox box{static_cast<std::int64_t>(2 * std::pow(64.0, 1.2)), 6, {}};
    double prev = -1.0;
    for (double kappa : {0.1, 1.0, 10.0}) {
        auto cfg = small(64, 3);
        cfg.kappa = kappa;
        const auto e = crossing_probability(cfg, box, 40);
        EXPECT_GE(e.value, prev);
        prev = e.value;
    }
}

TEST(Crossing, ThresholdAgreesWithDirectCrossing)
{
    const CrossingBox box{40, 4, {}};
    for (std::uint64_t s = 0; s < 30; ++s) {
        auto cfg = small(8, s);
        const double th = crossing_threshold(cfg, box);
        for (double pv : {0.05, 0.2, 0.5, 0.9}) {
            cfg.p_v_override = pv;
            EXPECT_EQ(crosses(cfg, box), th < pv) << "seed " << s << " pv " << pv;
        }
    }
}

TEST(Crossing, DefaultInitialSet)
{
    auto cfg = small(32, 0);
    const auto xs = equally_spaced_initial(cfg);
    const auto radius = static_cast<std::int64_t>(std::floor(cfg.space_scale()));
    EXPECT_EQ(static_cast<std::int64_t>(xs.size()), 2 * static_cast<std::int64_t>(std::floor(cfg.time_scale())));
    EXPECT_TRUE(std::is_sorted(xs.begin(), xs.end()));
    EXPECT_GE(xs.front(), -radius);
    EXPECT_LE(xs.back(), radius);
}
