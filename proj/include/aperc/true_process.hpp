#ifndef APERC_TRUE_PROCESS_HPP
#define APERC_TRUE_PROCESS_HPP

#include "envelope.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

namespace aperc {

/// {0,1}-valued horizontal process with attrition: a site that has ever
/// been occupied can never be occupied again.
struct OccupancyField {
    std::vector<std::int64_t> occupied; // sorted, current generation
    std::unordered_set<std::int64_t> visited; // every site occupied at some m <= n
    std::int64_t n = 0;
    /// Inclusive unscaled window; births outside it are suppressed.
    std::optional<std::pair<std::int64_t, std::int64_t>> kill_window;

    static OccupancyField from_sites(std::vector<std::int64_t> sites)
    {
        std::sort(sites.begin(), sites.end());
        sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
        OccupancyField f;
        f.visited.insert(sites.begin(), sites.end());
        f.occupied = std::move(sites);
        return f;
    }

    bool is_occupied(std::int64_t x) const { return std::binary_search(occupied.begin(), occupied.end(), x); }
    bool in_window(std::int64_t x) const noexcept
    {
        return !kill_window || (x >= kill_window->first && x <= kill_window->second);
    }
    std::int64_t mass() const noexcept { return static_cast<std::int64_t>(occupied.size()); }
    std::int64_t cum_mass() const noexcept { return static_cast<std::int64_t>(visited.size()); }
    bool extinct() const noexcept { return occupied.empty(); }
};

namespace detail {

inline void close_true_step(OccupancyField& field, std::vector<std::int64_t>& born)
{
    std::sort(born.begin(), born.end());
    born.erase(std::unique(born.begin(), born.end()), born.end());
    field.occupied = std::move(born);
    field.visited.insert(field.occupied.begin(), field.occupied.end());
    ++field.n;
}

} // namespace detail

/// One synchronous step, in place. Each occupied y flips its 2N coins
/// (drawn as a Binomial count on a uniform subset); x is born iff it is
/// unvisited, inside the kill window, and hit by some coin.
template <typename Rng>
void advance_true(OccupancyField& field, const EnvelopeKernel& kernel, Rng& rng)
{
    std::vector<std::int64_t> born;
    for (auto y : field.occupied)
        kernel.reproduce(rng, [&](std::int64_t o) {
            const std::int64_t x = y + o;
            if (field.in_window(x) && !field.visited.contains(x))
                born.push_back(x);
        });
    detail::close_true_step(field, born);
    if (field.cum_mass() > kernel.mass_cap())
        throw TruncatedRun("true process: visited set exceeded cap");
}

template <typename Rng>
OccupancyField step_true(const OccupancyField& field, const EnvelopeKernel& kernel, Rng& rng)
{
    OccupancyField next = field;
    advance_true(next, kernel, rng);
    return next;
}

/// Coupled step of (true, envelope), in place. At each site occupied in the
/// true field the envelope's first particle reuses that site's coins;
/// every other particle is independent. Requires the true support to lie
/// inside the envelope support, which the coupling preserves.
template <typename Rng>
void advance_coupled(OccupancyField& field, ParticleField& env, const EnvelopeKernel& kernel, Rng& rng)
{
    for (auto y : field.occupied)
        if (env.at(y) < 1)
            throw std::logic_error("advance_coupled: true process not dominated by envelope");
    ParticleField env_next;
    std::vector<std::int64_t> born;
    for (const auto& [y, c] : env.counts) {
        std::int64_t w = 0;
        if (field.is_occupied(y)) {
            kernel.reproduce(rng, [&](std::int64_t o) {
                const std::int64_t x = y + o;
                ++env_next.counts[x];
                if (field.in_window(x) && !field.visited.contains(x))
                    born.push_back(x);
            });
            w = 1;
        }
        for (; w < c; ++w)
            kernel.reproduce(rng, [&](std::int64_t o) { ++env_next.counts[y + o]; });
    }
    detail::close_true_step(field, born);
    detail::finish_step(env_next, env, kernel.mass_cap());
    env = std::move(env_next);
}

/// Sites where the true field exceeds the envelope (should be none).
inline std::int64_t domination_violations(const OccupancyField& field, const ParticleField& env)
{
    std::int64_t bad = 0;
    for (auto x : field.occupied)
        bad += env.at(x) < 1 ? 1 : 0;
    return bad + (field.mass() > env.total_mass ? 1 : 0);
}

struct CoupledRunSummary {
    std::int64_t steps = 0;
    std::int64_t violations = 0;
    std::int64_t max_true_mass = 0;
    std::int64_t max_envelope_mass = 0;
    bool level_order_ok = true; // T^_k >= T~_k for every level reached
};

/// Runs the coupled pair from a particle at the origin until the true
/// process dies out or `max_steps`, checking domination at every step.
template <typename Rng>
CoupledRunSummary run_coupled(const EnvelopeKernel& kernel, std::int64_t max_steps, Rng& rng, int k_max = 8)
{
    CoupledRunSummary s;
    OccupancyField t = OccupancyField::from_sites({0});
    ParticleField e = ParticleField::point();
    std::vector<std::int64_t> t_hat(static_cast<std::size_t>(k_max) + 1, -1);
    std::vector<std::int64_t> t_env(static_cast<std::size_t>(k_max) + 1, -1);
    auto levels = [&] {
        for (int k = 0; k <= k_max; ++k) {
            auto ks = static_cast<std::size_t>(k);
            if (t_hat[ks] < 0 && level_trigger(t.mass(), t.cum_mass(), k) != Trigger::none)
                t_hat[ks] = t.n;
            if (t_env[ks] < 0 && level_trigger(e.total_mass, e.cum_mass, k) != Trigger::none)
                t_env[ks] = e.n;
        }
    };
    levels();
    while (!t.extinct() && t.n < max_steps) {
        advance_coupled(t, e, kernel, rng);
        s.violations += domination_violations(t, e);
        s.max_true_mass = std::max(s.max_true_mass, t.mass());
        s.max_envelope_mass = std::max(s.max_envelope_mass, e.total_mass);
        levels();
    }
    s.steps = t.n;
    for (int k = 0; k <= k_max; ++k) {
        auto ks = static_cast<std::size_t>(k);
        if (t_hat[ks] >= 0 && (t_env[ks] < 0 || t_hat[ks] < t_env[ks]))
            s.level_order_ok = false;
    }
    return s;
}

namespace detail {
inline std::int64_t occ_mass(const OccupancyField& f) { return f.mass(); }
inline std::int64_t occ_cum(const OccupancyField& f) { return f.cum_mass(); }
inline std::int64_t occ_time(const OccupancyField& f) { return f.n; }
} // namespace detail

template <typename Rng>
std::vector<HittingRecord> run_hitting_levels_hat(const LatticeConfig& cfg, int k_max, std::int64_t cap, Rng& rng,
    OccupancyField start = OccupancyField::from_sites({0}))
{
    const EnvelopeKernel kernel(cfg);
    return run_levels(
        std::move(start), k_max, cap, [&](OccupancyField& f) { advance_true(f, kernel, rng); },
        &detail::occ_mass, &detail::occ_cum, &detail::occ_time);
}

template <typename Rng>
HittingRecord run_hitting_time_hat(const LatticeConfig& cfg, int k, std::int64_t cap, Rng& rng)
{
    return run_hitting_levels_hat(cfg, k, cap, rng).back();
}

/// Conditional level-crossing chain estimated by multilevel splitting.
struct ConditionalChain {
    int k0 = 0;
    Estimate entry; // P(T^_{k0} < inf)
    std::vector<Estimate> ratio; // ratio[j] = P(T^_{k0+j+1} < inf | T^_{k0+j} < inf)
};

/// Estimates P(T^_{k+1} < inf | T^_k < inf) for k = k0..k_max-1. Each level
/// restarts `population` runs from the states in which earlier runs first
/// reached level k (cycled), so rare levels are sampled without waiting for
/// the unconditional event.
inline ConditionalChain conditional_level_chain(const LatticeConfig& cfg, int k0, int k_max, std::int64_t population,
    std::int64_t cap, std::int64_t entry_budget = 0)
{
    if (k0 < 0 || k_max <= k0 || population < 1)
        throw std::invalid_argument("conditional_level_chain: need 0 <= k0 < k_max and population >= 1");
    const EnvelopeKernel kernel(cfg);
    ConditionalChain chain;
    chain.k0 = k0;

    // Advances `f` until level k is reached; returns whether it was.
    auto advance = [&](OccupancyField& f, int k, Stream& rng) {
        while (level_trigger(f.mass(), f.cum_mass(), k) == Trigger::none) {
            if (f.extinct() || f.n >= cap)
                return false;
            advance_true(f, kernel, rng);
        }
        return true;
    };

    if (entry_budget <= 0)
        entry_budget = 1000 * population;
    std::vector<OccupancyField> states;
    std::int64_t tried = 0;
    std::int64_t reached = 0;
    while (tried < entry_budget && reached < population) {
        Stream rng(hash_key(cfg.seed, static_cast<std::uint64_t>(KeyTag::replica), k0, tried));
        OccupancyField f = OccupancyField::from_sites({0});
        ++tried;
        if (advance(f, k0, rng)) {
            ++reached;
            states.push_back(std::move(f));
        }
    }
    chain.entry = proportion(reached, tried);

    for (int k = k0; k < k_max; ++k) {
        if (states.empty()) {
            chain.ratio.push_back(Estimate{0.0, 0.0, 0});
            continue;
        }
        std::vector<std::optional<OccupancyField>> next(static_cast<std::size_t>(population));
        parallel_for(population, [&](std::int64_t i) {
            Stream rng(hash_key(cfg.seed, static_cast<std::uint64_t>(KeyTag::site_stream), k, i));
            OccupancyField f = states[static_cast<std::size_t>(i) % states.size()];
            if (advance(f, k + 1, rng))
                next[static_cast<std::size_t>(i)] = std::move(f);
        });
        std::vector<OccupancyField> survivors;
        for (auto& s : next)
            if (s)
                survivors.push_back(std::move(*s));
        chain.ratio.push_back(proportion(static_cast<std::int64_t>(survivors.size()), population));
        states = std::move(survivors);
    }
    return chain;
}

/// Total progeny |C| of the true process from the origin, per replica.
struct ClusterSizeSample {
    std::vector<std::int64_t> sizes;
    std::int64_t capped = 0;
    double mean = 0.0;
    double stderr_ = 0.0;
    double normalized = 0.0; // mean / N^(2/5)
    bool unreliable() const noexcept { return capped * 100 > static_cast<std::int64_t>(sizes.size()); }
};

inline ClusterSizeSample cumulative_cluster_size(const LatticeConfig& cfg, std::int64_t cap, std::int64_t reps)
{
    if (reps < 1 || cap < 1)
        throw std::invalid_argument("cumulative_cluster_size: need reps >= 1 and cap >= 1");
    LatticeConfig c = cfg;
    c.caps.max_sites = std::numeric_limits<std::int64_t>::max();
    const EnvelopeKernel kernel(c);
    ClusterSizeSample out;
    out.sizes.assign(static_cast<std::size_t>(reps), 0);
    std::vector<char> hit_cap(static_cast<std::size_t>(reps), 0);
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(replica_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        OccupancyField f = OccupancyField::from_sites({0});
        while (!f.extinct() && f.cum_mass() < cap)
            advance_true(f, kernel, rng);
        out.sizes[static_cast<std::size_t>(r)] = f.cum_mass();
        hit_cap[static_cast<std::size_t>(r)] = f.extinct() ? 0 : 1;
    });
    RunningStats st;
    for (std::size_t i = 0; i < out.sizes.size(); ++i) {
        st.add(static_cast<double>(out.sizes[i]));
        out.capped += hit_cap[i];
    }
    out.mean = st.mean();
    out.stderr_ = st.stderr_mean();
    out.normalized = out.mean / std::pow(static_cast<double>(cfg.n), 0.4);
    return out;
}

/// Mean occupied mass of the true process at a fixed step, from the origin.
inline Estimate mass_at_step(const LatticeConfig& cfg, std::int64_t step, std::int64_t reps)
{
    if (reps < 1 || step < 0)
        throw std::invalid_argument("mass_at_step: need reps >= 1 and step >= 0");
    const EnvelopeKernel kernel(cfg);
    std::vector<double> mass(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(replica_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        OccupancyField f = OccupancyField::from_sites({0});
        while (!f.extinct() && f.n < step)
            advance_true(f, kernel, rng);
        mass[static_cast<std::size_t>(r)] = static_cast<double>(f.mass());
    });
    RunningStats st;
    for (double m : mass)
        st.add(m);
    return {st.mean(), st.stderr_mean(), reps};
}

/// Exact E[S - 1{S >= 1}] for S ~ Binomial(m, 1/(2N)): the expected
/// discrepancy between the envelope count and the attrition indicator at a
/// site with m occupied neighbours.
inline double attrition_error(std::int64_t m, std::int64_t n)
{
    const double p = 1.0 / (2.0 * static_cast<double>(n));
    return static_cast<double>(m) * p - (1.0 - std::exp(static_cast<double>(m) * std::log1p(-p)));
}

// ---------------------------------------------------------------------------
// Good configurations

/// Bookkeeping for (I, delta, N)-good fields on Z / N^(1+alpha).
///
/// Sub-interval J_i = [i w, (i+1) w) with w = N^(-3/10); J_i inside I must
/// hold exactly floor(f(i w) N^(1/10)) occupied sites and every other J_i
/// must be empty. J_i is half-open so the sub-intervals partition the line.
struct GoodSpec {
    double a = -1.0;
    double b = 1.0;
    double delta = 0.1;
    std::int64_t n = 1;
    double alpha = 0.2;

    double scale() const { return std::pow(static_cast<double>(n), 1.0 + alpha); }
    double width() const { return std::pow(static_cast<double>(n), -0.3); }

    void validate() const
    {
        if (!(a < b) || !(delta > 0.0) || n < 1)
            throw std::invalid_argument("GoodSpec: need a < b, delta > 0, N >= 1");
        if (std::floor(std::pow(static_cast<double>(n), 0.1) + 1e-12) < 1.0)
            throw std::invalid_argument("GoodSpec: N^(1/10) < 1");
        if (width() * scale() < std::pow(static_cast<double>(n), 0.1))
            throw std::invalid_argument("GoodSpec: sub-intervals hold fewer sites than their target count");
    }

    double profile(double x) const
    {
        if (x >= a && x <= b)
            return 1.0;
        if (x < a - delta || x > b + delta)
            return 0.0;
        return x < a ? (x - (a - delta)) / delta : ((b + delta) - x) / delta;
    }

    /// First unscaled site of J_i.
    std::int64_t site_begin(std::int64_t i) const
    {
        const long double sites = static_cast<long double>(width()) * static_cast<long double>(scale());
        return static_cast<std::int64_t>(std::ceil(static_cast<long double>(i) * sites - 1e-9L));
    }

    /// Index i with site j in J_i.
    std::int64_t index_of(std::int64_t j) const
    {
        const long double sites = static_cast<long double>(width()) * static_cast<long double>(scale());
        auto i = static_cast<std::int64_t>(std::floor(static_cast<long double>(j) / sites));
        while (site_begin(i + 1) <= j)
            ++i;
        while (site_begin(i) > j)
            --i;
        return i;
    }

    /// Indices of the sub-intervals contained in I.
    std::pair<std::int64_t, std::int64_t> inside_range() const
    {
        const double w = width();
        auto lo = static_cast<std::int64_t>(std::ceil(a / w - 1e-9));
        auto hi = static_cast<std::int64_t>(std::floor(b / w + 1e-9)) - 1;
        return {lo, hi};
    }

    std::int64_t target(std::int64_t i) const
    {
        const auto [lo, hi] = inside_range();
        if (i < lo || i > hi)
            return 0;
        return static_cast<std::int64_t>(std::floor(profile(static_cast<double>(i) * width()) * std::pow(static_cast<double>(n), 0.1) + 1e-9));
    }

    /// Unscaled kill window of the subordinated process: [a - 1/2, b + 1/2].
    std::pair<std::int64_t, std::int64_t> kill_window() const
    {
        const double s = scale();
        return {static_cast<std::int64_t>(std::ceil((a - 0.5) * s - 1e-9)), static_cast<std::int64_t>(std::floor((b + 0.5) * s + 1e-9))};
    }
};

/// Canonical good field: target counts equally spaced inside each J,
/// anchored at the left end.
inline OccupancyField make_good(const GoodSpec& spec)
{
    spec.validate();
    std::vector<std::int64_t> sites;
    const auto [lo, hi] = spec.inside_range();
    for (std::int64_t i = lo; i <= hi; ++i) {
        const std::int64_t c = spec.target(i);
        const std::int64_t begin = spec.site_begin(i);
        const std::int64_t len = spec.site_begin(i + 1) - begin;
        for (std::int64_t t = 0; t < c; ++t)
            sites.push_back(begin + t * len / c);
    }
    return OccupancyField::from_sites(std::move(sites));
}

/// Goodness with a count tolerance. tau = 0 is the exact definition;
/// any tau > 0 is a relaxation.
inline bool is_good_relaxed(const OccupancyField& field, const GoodSpec& spec, double tau)
{
    spec.validate();
    const auto [lo, hi] = spec.inside_range();
    if (hi < lo)
        return field.occupied.empty() || std::isinf(tau);
    if (std::isinf(tau))
        return true;
    std::vector<std::int64_t> inside(static_cast<std::size_t>(hi - lo + 1), 0);
    std::int64_t prev_i = std::numeric_limits<std::int64_t>::min();
    std::int64_t outside_run = 0;
    for (auto x : field.occupied) {
        const std::int64_t i = spec.index_of(x);
        if (i >= lo && i <= hi) {
            ++inside[static_cast<std::size_t>(i - lo)];
            continue;
        }
        outside_run = i == prev_i ? outside_run + 1 : 1;
        prev_i = i;
        if (static_cast<double>(outside_run) > tau)
            return false;
    }
    for (std::int64_t i = lo; i <= hi; ++i)
        if (std::abs(static_cast<double>(inside[static_cast<std::size_t>(i - lo)] - spec.target(i))) > tau)
            return false;
    return true;
}

inline bool is_good(const OccupancyField& field, const GoodSpec& spec) { return is_good_relaxed(field, spec, 0.0); }

/// Result of thinning a candidate set to an exactly good field.
struct ThinResult {
    bool ok = false;
    OccupancyField field;
    std::int64_t short_index = 0; // first J lacking sites when !ok
    std::int64_t have = 0;
    std::int64_t need = 0;
    double short_left = 0.0; // scaled left end of that J
    std::int64_t filled = 0; // J inside I meeting their target (within tau)
    std::int64_t total = 0; // J inside I
};

/// Keeps, in each J inside I, the leftmost target-count candidates and drops
/// everything else. Fails when some J has fewer candidates than its target
/// minus `tau`; tau = 0 (the default) demands exact counts, tau > 0 is a
/// relaxation and yields a field that is only relaxed-good. All J are
/// scanned, so `filled` counts the satisfied ones even on failure.
inline ThinResult thin_to_good(const std::vector<std::int64_t>& candidates, const GoodSpec& spec, double tau = 0.0)
{
    spec.validate();
    std::vector<std::int64_t> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const auto [lo, hi] = spec.inside_range();
    ThinResult r;
    r.ok = true;
    r.total = std::max<std::int64_t>(0, hi - lo + 1);
    std::vector<std::int64_t> kept;
    auto it = sorted.begin();
    for (std::int64_t i = lo; i <= hi; ++i) {
        const std::int64_t begin = spec.site_begin(i);
        const std::int64_t end = spec.site_begin(i + 1);
        it = std::lower_bound(it, sorted.end(), begin);
        const std::int64_t need = spec.target(i);
        std::int64_t have = 0;
        auto jt = it;
        while (jt != sorted.end() && *jt < end) {
            if (have < need)
                kept.push_back(*jt);
            ++have;
            ++jt;
        }
        it = jt;
        if (static_cast<double>(have) < static_cast<double>(need) - tau) {
            if (r.ok) {
                r.ok = false;
                r.short_index = i;
                r.have = have;
                r.need = need;
                r.short_left = static_cast<double>(i) * spec.width();
            }
        } else {
            ++r.filled;
        }
    }
    if (r.ok)
        r.field = OccupancyField::from_sites(std::move(kept));
    return r;
}

} // namespace aperc

#endif // APERC_TRUE_PROCESS_HPP
