#ifndef APERC_ENVELOPE_HPP
#define APERC_ENVELOPE_HPP

#include "config.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"

#include <boost/math/distributions/binomial.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

namespace aperc {

/// Thrown when a run exceeds its mass budget.
struct TruncatedRun : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Sparse integer-count field of the envelope branching random walk.
/// Sites are unscaled integers; scaled position is j / N^(1+alpha).
struct ParticleField {
    std::map<std::int64_t, std::int64_t> counts;
    std::int64_t n = 0;
    std::int64_t total_mass = 0;
    std::int64_t cum_mass = 0; // sum over m <= n, initial mass included
    std::int64_t max_abs_site = 0; // running max over all m <= n

    static ParticleField point(std::int64_t site = 0, std::int64_t count = 1)
    {
        ParticleField f;
        if (count > 0) {
            f.counts[site] = count;
            f.total_mass = count;
            f.cum_mass = count;
            f.max_abs_site = site < 0 ? -site : site;
        }
        return f;
    }

    std::int64_t at(std::int64_t site) const
    {
        const auto it = counts.find(site);
        return it == counts.end() ? 0 : it->second;
    }

    bool extinct() const noexcept { return total_mass == 0; }
};

/// Offspring sampler for one lattice scale: Binomial(2N, 1/(2N)) counts
/// placed on a uniform subset of the 2N neighbours.
class EnvelopeKernel {
public:
    explicit EnvelopeKernel(const LatticeConfig& cfg)
        : n_(cfg.n), offspring_(2 * cfg.n, cfg.p_h()), mass_cap_(cfg.caps.max_sites)
    {
        cfg.validate();
    }

    std::int64_t range() const noexcept { return n_; }
    const BinomialTable& offspring() const noexcept { return offspring_; }
    std::int64_t mass_cap() const noexcept { return mass_cap_; }

    /// One parent's offspring: calls emit(offset) once per child.
    template <typename Rng, typename Emit>
    std::int64_t reproduce(Rng& rng, Emit&& emit) const
    {
        const std::int64_t k = offspring_(rng);
        sample_distinct_offsets(rng, n_, k, emit);
        return k;
    }

private:
    std::int64_t n_;
    BinomialTable offspring_;
    std::int64_t mass_cap_;
};

namespace detail {

inline void finish_step(ParticleField& next, const ParticleField& prev, std::int64_t cap)
{
    next.n = prev.n + 1;
    next.total_mass = 0;
    next.max_abs_site = prev.max_abs_site;
    for (const auto& [site, c] : next.counts) {
        next.total_mass += c;
        next.max_abs_site = std::max(next.max_abs_site, site < 0 ? -site : site);
    }
    next.cum_mass = prev.cum_mass + next.total_mass;
    if (next.total_mass > cap)
        throw TruncatedRun("envelope: total mass exceeded cap");
}

} // namespace detail

/// One synchronous generation of the envelope.
template <typename Rng>
ParticleField step_envelope(const ParticleField& field, const EnvelopeKernel& kernel, Rng& rng)
{
    ParticleField next;
    for (const auto& [y, c] : field.counts)
        for (std::int64_t w = 0; w < c; ++w)
            kernel.reproduce(rng, [&](std::int64_t o) { ++next.counts[y + o]; });
    detail::finish_step(next, field, kernel.mass_cap());
    return next;
}

template <typename Rng>
ParticleField step_envelope(const ParticleField& field, const LatticeConfig& cfg, Rng& rng)
{
    return step_envelope(field, EnvelopeKernel(cfg), rng);
}

enum class Trigger { none, mass, cumulative };

/// Outcome of a hitting-time run. When `finite` is false, `t` holds the
/// step at which the run stopped (extinction or cap) and `capped` says
/// whether the cap was the reason.
struct HittingRecord {
    int k = 0;
    bool finite = false;
    std::int64_t t = 0;
    Trigger trigger = Trigger::none;
    bool capped = false;
};

/// Level-k stopping condition: mass >= 2^k or cumulative mass >= 4^k.
inline Trigger level_trigger(std::int64_t mass, std::int64_t cum, int k)
{
    if (k < 0 || k > 30)
        throw std::invalid_argument("level_trigger: k must lie in [0, 30]");
    if (mass >= (std::int64_t{1} << k))
        return Trigger::mass;
    if (cum >= (std::int64_t{1} << (2 * k)))
        return Trigger::cumulative;
    return Trigger::none;
}

/// Hitting records for every level 0..k_max from one trajectory. The level
/// events are nested, so a single run up to level k_max decides all of them.
/// `step` advances the field in place.
template <typename Field, typename Step>
std::vector<HittingRecord> run_levels(Field field, int k_max, std::int64_t cap, Step&& step,
    std::int64_t (*mass)(const Field&), std::int64_t (*cum)(const Field&), std::int64_t (*time)(const Field&))
{
    if (k_max < 0 || cap < 1)
        throw std::invalid_argument("run_levels: need k_max >= 0 and cap >= 1");
    std::vector<HittingRecord> out(static_cast<std::size_t>(k_max) + 1);
    for (int k = 0; k <= k_max; ++k)
        out[static_cast<std::size_t>(k)].k = k;
    int next_level = 0;
    auto record = [&] {
        while (next_level <= k_max) {
            const Trigger tr = level_trigger(mass(field), cum(field), next_level);
            if (tr == Trigger::none)
                break;
            auto& r = out[static_cast<std::size_t>(next_level)];
            r.finite = true;
            r.t = time(field);
            r.trigger = tr;
            ++next_level;
        }
    };
    record();
    bool capped = false;
    while (next_level <= k_max && mass(field) > 0) {
        if (time(field) >= cap) {
            capped = true;
            break;
        }
        step(field);
        record();
    }
    for (int k = next_level; k <= k_max; ++k) {
        auto& r = out[static_cast<std::size_t>(k)];
        r.t = time(field);
        r.capped = capped;
    }
    return out;
}

namespace detail {
inline std::int64_t env_mass(const ParticleField& f) { return f.total_mass; }
inline std::int64_t env_cum(const ParticleField& f) { return f.cum_mass; }
inline std::int64_t env_time(const ParticleField& f) { return f.n; }
} // namespace detail

template <typename Rng>
std::vector<HittingRecord> run_hitting_levels(const LatticeConfig& cfg, int k_max, std::int64_t cap, Rng& rng)
{
    const EnvelopeKernel kernel(cfg);
    return run_levels(
        ParticleField::point(), k_max, cap, [&](ParticleField& f) { f = step_envelope(f, kernel, rng); },
        &detail::env_mass, &detail::env_cum, &detail::env_time);
}

/// Envelope hitting time of level k from a single particle at the origin.
template <typename Rng>
HittingRecord run_hitting_time(const LatticeConfig& cfg, int k, std::int64_t cap, Rng& rng)
{
    return run_hitting_levels(cfg, k, cap, rng).back();
}

/// P(T_k < inf) for k = 0..k_max, one estimate per level.
inline std::vector<Estimate> hitting_probabilities(const LatticeConfig& cfg, int k_max, std::int64_t cap, std::int64_t reps)
{
    if (reps < 1)
        throw std::invalid_argument("hitting_probabilities: reps must be positive");
    std::vector<std::vector<HittingRecord>> runs(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(replica_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        runs[static_cast<std::size_t>(r)] = run_hitting_levels(cfg, k_max, cap, rng);
    });
    std::vector<Estimate> out;
    for (int k = 0; k <= k_max; ++k) {
        std::int64_t hits = 0;
        for (const auto& run : runs)
            hits += run[static_cast<std::size_t>(k)].finite ? 1 : 0;
        out.push_back(proportion(hits, reps));
    }
    return out;
}

/// P(X_n > 0) from a single particle.
inline Estimate survival_probability(const LatticeConfig& cfg, std::int64_t n, std::int64_t reps)
{
    if (reps < 1 || n < 0)
        throw std::invalid_argument("survival_probability: need reps >= 1 and n >= 0");
    const EnvelopeKernel kernel(cfg);
    std::vector<char> alive(static_cast<std::size_t>(reps), 0);
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(replica_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        ParticleField f = ParticleField::point();
        while (f.n < n && !f.extinct())
            f = step_envelope(f, kernel, rng);
        alive[static_cast<std::size_t>(r)] = f.extinct() ? 0 : 1;
    });
    std::int64_t hits = 0;
    for (auto a : alive)
        hits += a;
    return proportion(hits, reps);
}

/// Conditional tail of the scaled maximal displacement.
struct DisplacementTail {
    std::vector<double> z;
    std::vector<Estimate> tail; // P(R_n / N^(1+alpha) >= z | X_{n/2} > 0)
    std::int64_t conditioned = 0; // number of runs alive at n/2
    bool defined() const noexcept { return conditioned > 0; }
};

inline DisplacementTail max_displacement_tail(const LatticeConfig& cfg, std::int64_t n, const std::vector<double>& z_grid,
    std::int64_t reps)
{
    if (n < 1 || reps < 1)
        throw std::invalid_argument("max_displacement_tail: need n >= 1 and reps >= 1");
    const EnvelopeKernel kernel(cfg);
    const double scale = cfg.space_scale();
    std::vector<double> r_scaled(static_cast<std::size_t>(reps), -1.0); // -1: not conditioned
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(replica_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        ParticleField f = ParticleField::point();
        bool alive_half = n / 2 == 0;
        while (f.n < n && !f.extinct()) {
            f = step_envelope(f, kernel, rng);
            if (f.n == n / 2)
                alive_half = !f.extinct();
        }
        if (alive_half)
            r_scaled[static_cast<std::size_t>(r)] = static_cast<double>(f.max_abs_site) / scale;
    });
    DisplacementTail out;
    out.z = z_grid;
    for (double v : r_scaled)
        out.conditioned += v >= 0.0 ? 1 : 0;
    for (double z : z_grid) {
        std::int64_t hits = 0;
        for (double v : r_scaled)
            hits += (v >= 0.0 && v >= z) ? 1 : 0;
        out.tail.push_back(out.defined() ? proportion(hits, out.conditioned) : Estimate{std::nan(""), 0.0, 0});
    }
    return out;
}

/// Exact P(xi_{k}(x) >= 2 | previous field) when `parents` particles sit
/// within range of x: the count at x is Binomial(parents, 1/(2N)).
inline double multiple_occupancy_probability(std::int64_t parents, std::int64_t n)
{
    if (parents < 2)
        return 0.0;
    const double p = 1.0 / (2.0 * static_cast<double>(n));
    const double q0 = std::exp(static_cast<double>(parents) * std::log1p(-p));
    const double q1 = static_cast<double>(parents) * p * std::exp(static_cast<double>(parents - 1) * std::log1p(-p));
    return std::max(0.0, 1.0 - q0 - q1);
}

/// Exact P(sum_{i<n} (Y_i - 1) >= n^a) with Y_i iid Binomial(2N, 1/(2N)),
/// using that the sum of the Y_i is Binomial(2Nn, 1/(2N)).
inline double aggregate_excess_tail(std::int64_t n, std::int64_t range, double a)
{
    const double trials = 2.0 * static_cast<double>(range) * static_cast<double>(n);
    boost::math::binomial_distribution<double> law(trials, 1.0 / (2.0 * static_cast<double>(range)));
    const double threshold = static_cast<double>(n) + std::pow(static_cast<double>(n), a);
    const double k = std::ceil(threshold - 1e-12);
    if (k <= 0.0)
        return 1.0;
    if (k > trials)
        return 0.0;
    // P(S >= k) = 1 - P(S <= k - 1)
    return boost::math::cdf(boost::math::complement(law, k - 1.0));
}

} // namespace aperc

#endif // APERC_ENVELOPE_HPP
