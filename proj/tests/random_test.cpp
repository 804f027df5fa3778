#include <aperc/random.hpp>
#include <aperc/stats.hpp>

#include <boost/math/distributions/binomial.hpp>
#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace aperc;

TEST(Hash, DeterministicAndFieldOrderSensitive)
{
    EXPECT_EQ(hash_key(7, 1, 2, 3), hash_key(7, 1, 2, 3));
    EXPECT_NE(hash_key(7, 1, 2, 3), hash_key(7, 3, 2, 1));
    EXPECT_NE(hash_key(7, 1, 2), hash_key(8, 1, 2));
}

TEST(Hash, UnitIntervalBounds)
{
    EXPECT_EQ(to_unit(0), 0.0);
    EXPECT_LT(to_unit(~0ULL), 1.0);
}

TEST(Stream, ReproducibleAndSplitsDiffer)
{
    Stream a(42), b(42);
    for (int i = 0; i < 100; ++i)
        ASSERT_EQ(a(), b());
    Stream c = a.split(0), d = a.split(1);
    EXPECT_NE(c(), d());
}

TEST(Stream, BelowStaysInRangeAndIsRoughlyUniform)
{
    Stream rng(3);
    std::vector<std::int64_t> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++counts[v];
    }
    std::vector<double> pmf(7, 1.0 / 7.0);
    EXPECT_GT(chi_square_gof(counts, pmf).p_value, 1e-3);
}

TEST(Stream, WorksWithStdDistributions)
{
    Stream rng(11);
    std::normal_distribution<double> g;
    RunningStats s;
    for (int i = 0; i < 20000; ++i)
        s.add(g(rng));
    EXPECT_NEAR(s.mean(), 0.0, 0.05);
    EXPECT_NEAR(s.variance(), 1.0, 0.05);
}

TEST(BinomialTable, PmfMatchesClosedForm)
{
    for (std::int64_t n : {1, 8, 64}) {
        BinomialTable t(2 * n, 1.0 / (2.0 * static_cast<double>(n)));
        boost::math::binomial_distribution<double> law(static_cast<double>(2 * n), 1.0 / (2.0 * static_cast<double>(n)));
        for (std::size_t k = 0; k < t.pmf().size(); ++k)
            EXPECT_NEAR(t.pmf()[k], boost::math::pdf(law, static_cast<double>(k)), 1e-14) << "n=" << n << " k=" << k;
    }
}

TEST(BinomialTable, NOneIsQuarterHalfQuarter)
{
    BinomialTable t(2, 0.5);
    ASSERT_EQ(t.pmf().size(), 3u);
    EXPECT_NEAR(t.pmf()[0], 0.25, 1e-15);
    EXPECT_NEAR(t.pmf()[1], 0.5, 1e-15);
    EXPECT_NEAR(t.pmf()[2], 0.25, 1e-15);
}

TEST(BinomialTable, DegenerateProbabilities)
{
    Stream rng(1);
    BinomialTable zero(10, 0.0), one(10, 1.0);
    for (int i = 0; i < 50; ++i) {
        EXPECT_EQ(zero(rng), 0);
        EXPECT_EQ(one(rng), 10);
    }
    EXPECT_THROW(BinomialTable(-1, 0.5), std::invalid_argument);
    EXPECT_THROW(BinomialTable(3, 1.5), std::invalid_argument);
}

TEST(BinomialTable, SamplesPassChiSquare)
{
    Stream rng(5);
    BinomialTable t(16, 1.0 / 16.0);
    std::vector<std::int64_t> counts(t.pmf().size(), 0);
    for (int i = 0; i < 50000; ++i)
        ++counts[static_cast<std::size_t>(t(rng))];
    EXPECT_GT(chi_square_gof(counts, t.pmf()).p_value, 1e-3);
}

TEST(DistinctOffsets, SparseAndDenseAreDistinctAndInRange)
{
    Stream rng(9);
    for (std::int64_t count : {0, 1, 3, 10, 20, 40}) {
        std::set<std::int64_t> seen;
        sample_distinct_offsets(rng, 20, count, [&](std::int64_t o) {
            EXPECT_GE(std::abs(o), 1);
            EXPECT_LE(std::abs(o), 20);
            EXPECT_TRUE(seen.insert(o).second);
        });
        EXPECT_EQ(static_cast<std::int64_t>(seen.size()), count);
    }
    EXPECT_THROW(sample_distinct_offsets(rng, 2, 5, [](std::int64_t) {}), std::invalid_argument);
}

TEST(DistinctOffsets, SingleOffsetIsUniform)
{
    Stream rng(13);
    const std::int64_t n = 5;
    std::vector<std::int64_t> counts(2 * n, 0);
    for (int i = 0; i < 50000; ++i)
        sample_distinct_offsets(rng, n, 1, [&](std::int64_t o) { ++counts[static_cast<std::size_t>(o < 0 ? o + n : o + n - 1)]; });
    std::vector<double> pmf(2 * n, 1.0 / (2.0 * n));
    EXPECT_GT(chi_square_gof(counts, pmf).p_value, 1e-3);
}

TEST(ReplicaSeed, DistinctPerIndex)
{
    std::set<std::uint64_t> s;
    for (std::uint64_t i = 0; i < 1000; ++i)
        s.insert(replica_seed(1, i));
    EXPECT_EQ(s.size(), 1000u);
}
