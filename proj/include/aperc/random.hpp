#ifndef APERC_RANDOM_HPP
#define APERC_RANDOM_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace aperc {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Keyed hash of a seed and a sequence of integer fields.
/// Every field passes through a full mixing round, so permuting fields
/// changes the result.
template <typename... Fields>
constexpr std::uint64_t hash_key(std::uint64_t seed, Fields... fields) noexcept
{
    std::uint64_t h = mix64(seed);
    ((h = mix64(h ^ static_cast<std::uint64_t>(fields))), ...);
    return h;
}

/// Uniform double in [0,1) from the top 53 bits of a word.
constexpr double to_unit(std::uint64_t word) noexcept
{
    return static_cast<double>(word >> 11) * 0x1.0p-53;
}

/// Domain tags that keep independent key families apart.
enum class KeyTag : std::uint64_t {
    horizontal_edge = 0x48454447ULL,
    vertical_edge = 0x56454447ULL,
    replica = 0x5245504cULL,
    block = 0x424c4f4bULL,
    site_stream = 0x53495445ULL,
    vertical_block = 0x56424c4bULL,
};

/// xoshiro256** stream. Satisfies UniformRandomBitGenerator so it plugs
/// into the <random> distributions.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t seed = 0) noexcept { reseed(seed); }

    void reseed(std::uint64_t seed) noexcept
    {
        std::uint64_t s = seed;
        for (auto& w : state_) {
            s += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = s;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    double uniform() noexcept { return to_unit((*this)()); }

    /// Uniform integer in [0, n). Lemire's nearly-divisionless method.
    std::uint64_t below(std::uint64_t n) noexcept
    {
        __uint128_t m = static_cast<__uint128_t>((*this)()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<__uint128_t>((*this)()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Independent child stream; `index` selects the child.
    Stream split(std::uint64_t index) const noexcept
    {
        return Stream(hash_key(state_[0] ^ rotl(state_[2], 13), index, static_cast<std::uint64_t>(KeyTag::replica)));
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> state_{};
};

/// Seed of replica `index` derived from a master seed.
constexpr std::uint64_t replica_seed(std::uint64_t master, std::uint64_t index) noexcept
{
    return hash_key(master, static_cast<std::uint64_t>(KeyTag::replica), index);
}

/// Exact inverse-transform sampler for Binomial(trials, p).
///
/// The cdf table is built once; sampling scans from zero, so the expected
/// cost is O(1 + mean). Meant for the critical regime trials*p = O(1).
/// The table stops where the remaining tail is below 1e-20, so pmf() may
/// be shorter than trials + 1.
class BinomialTable {
public:
    BinomialTable() = default;

    BinomialTable(std::int64_t trials, double p) : trials_(trials), p_(p)
    {
        if (trials < 0 || !(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("BinomialTable: need trials >= 0 and p in [0,1]");
        if (p == 0.0 || p == 1.0) {
            pmf_.assign(static_cast<std::size_t>(trials) + 1, 0.0);
            pmf_[p == 0.0 ? 0 : pmf_.size() - 1] = 1.0;
        } else {
            // Stop once past the mean with a negligible term: the tail beyond
            // decays at least geometrically, so the dropped mass is < 1e-20.
            const double lp = std::log(p);
            const double lq = std::log1p(-p);
            const double mean = static_cast<double>(trials) * p;
            pmf_.clear();
            for (std::int64_t k = 0; k <= trials; ++k) {
                const double lc = std::lgamma(static_cast<double>(trials) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0)
                    - std::lgamma(static_cast<double>(trials - k) + 1.0);
                const double q = std::exp(lc + static_cast<double>(k) * lp + static_cast<double>(trials - k) * lq);
                pmf_.push_back(q);
                if (static_cast<double>(k) > 2.0 * mean + 1.0 && q < 1e-22)
                    break;
            }
        }
        cdf_.resize(pmf_.size());
        long double acc = 0.0L;
        for (std::size_t k = 0; k < pmf_.size(); ++k) {
            acc += pmf_[k];
            cdf_[k] = static_cast<double>(acc);
        }
        const double total = cdf_.back();
        for (auto& c : cdf_)
            c /= total;
        for (auto& q : pmf_)
            q /= total;
        cdf_.back() = 1.0;
    }

    std::int64_t trials() const noexcept { return trials_; }
    double p() const noexcept { return p_; }
    const std::vector<double>& pmf() const noexcept { return pmf_; }

    template <typename Rng>
    std::int64_t operator()(Rng& rng) const noexcept
    {
        const double u = to_unit(rng());
        std::size_t k = 0;
        while (k + 1 < cdf_.size() && u >= cdf_[k])
            ++k;
        return static_cast<std::int64_t>(k);
    }

private:
    std::int64_t trials_ = 0;
    double p_ = 0.0;
    std::vector<double> pmf_{1.0};
    std::vector<double> cdf_{1.0};
};

/// Draws `count` distinct offsets from {-range..-1, 1..range} uniformly and
/// calls `emit(offset)` for each. Rejection on duplicates; intended for
/// count << range.
template <typename Rng, typename Emit>
void sample_distinct_offsets(Rng& rng, std::int64_t range, std::int64_t count, Emit&& emit)
{
    const auto span = static_cast<std::uint64_t>(2 * range);
    if (count <= 0)
        return;
    if (static_cast<std::uint64_t>(count) > span)
        throw std::invalid_argument("sample_distinct_offsets: count exceeds neighbourhood size");

    auto to_offset = [range](std::uint64_t o) {
        const auto s = static_cast<std::int64_t>(o);
        return s < range ? -(s + 1) : s - range + 1;
    };

    if (static_cast<std::uint64_t>(count) * 4 > span) {
        // Dense case: partial Fisher-Yates over the full index set.
        std::vector<std::uint64_t> idx(span);
        for (std::uint64_t i = 0; i < span; ++i)
            idx[i] = i;
        for (std::int64_t i = 0; i < count; ++i) {
            const auto ui = static_cast<std::uint64_t>(i);
            const std::uint64_t j = ui + rng.below(span - ui);
            std::swap(idx[ui], idx[j]);
            emit(to_offset(idx[ui]));
        }
        return;
    }

    std::array<std::uint64_t, 16> small{};
    std::vector<std::uint64_t> large;
    std::size_t used = 0;
    auto seen = [&](std::uint64_t o) {
        for (std::size_t i = 0; i < std::min<std::size_t>(used, small.size()); ++i)
            if (small[i] == o)
                return true;
        for (auto v : large)
            if (v == o)
                return true;
        return false;
    };
    for (std::int64_t i = 0; i < count; ++i) {
        std::uint64_t o = rng.below(span);
        while (seen(o))
            o = rng.below(span);
        if (used < small.size())
            small[used] = o;
        else
            large.push_back(o);
        ++used;
        emit(to_offset(o));
    }
}

} // namespace aperc

#endif // APERC_RANDOM_HPP
