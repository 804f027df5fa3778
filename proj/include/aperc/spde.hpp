#ifndef APERC_SPDE_HPP
#define APERC_SPDE_HPP

#include "density.hpp"
#include "parallel.hpp"
#include "rw_kernel.hpp"
#include "random.hpp"
#include "stats.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace aperc {

/// How the sqrt(u) noise is applied to each cell.
///   feller_split: exact law of the cell-mass Feller diffusion dm = sqrt(m) dB
///     over dt (Poisson number of Exponential(dt/2) clusters). Never negative.
///   euler: m + sqrt(m dt) G, clamped at zero; the clamp is accounted.
///   none: deterministic heat flow (plus killing).
enum class NoiseScheme { feller_split, euler, none };

struct SpdeConfig {
    double half_width = 8.0; // L: grid covers [-L, L], u = 0 at +-L
    double dx = 0.05;
    double dt = 1e-3;
    NoiseScheme noise = NoiseScheme::feller_split;
    bool kill = false; // adds -u * int_0^t u_s ds

    std::int64_t nodes() const { return static_cast<std::int64_t>(std::llround(2.0 * half_width / dx)) + 1; }
    double x(std::int64_t i) const { return -half_width + static_cast<double>(i) * dx; }

    void validate() const
    {
        if (!(dx > 0.0) || !(dt > 0.0) || !(half_width > dx))
            throw std::invalid_argument("SpdeConfig: need dx, dt > 0 and L > dx");
        if (dt > 3.0 * dx * dx * (1.0 + 1e-12))
            throw std::invalid_argument("SpdeConfig: explicit scheme needs dt <= 3 dx^2");
    }
};

/// Half-width keeping the boundary far from mass started within `radius`
/// and run for time t: 4 (radius + 6 sqrt(t/3)).
inline double recommended_half_width(double radius, double t) { return 4.0 * (radius + 6.0 * std::sqrt(t / 3.0)); }

struct SpdeState {
    std::vector<double> u;
    std::vector<double> theta; // int_0^t u_s ds per node, trapezoid rule
    double t = 0.0;
    double clamped = 0.0; // total mass removed by clamping

    double total_mass(double dx) const
    {
        double m = 0.0;
        for (double v : u)
            m += v;
        return m * dx;
    }

    /// Clamped mass per unit time relative to the current mass; runs above
    /// 1e-3 are flagged as unreliable.
    double clamp_rate(double dx) const
    {
        const double m = total_mass(dx);
        if (t <= 0.0)
            return 0.0;
        return m > 0.0 ? clamped / t / m : (clamped > 0.0 ? INFINITY : 0.0);
    }
    bool clamp_flagged(double dx) const { return clamp_rate(dx) >= 1e-3; }
};

inline SpdeState make_state(const SpdeConfig& cfg, const std::function<double(double)>& f)
{
    cfg.validate();
    SpdeState s;
    const auto n = cfg.nodes();
    s.u.assign(static_cast<std::size_t>(n), 0.0);
    s.theta.assign(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 1; i + 1 < n; ++i) {
        const double v = f(cfg.x(i));
        if (v < 0.0)
            throw std::invalid_argument("make_state: initial profile must be nonnegative");
        s.u[static_cast<std::size_t>(i)] = v;
    }
    return s;
}

/// Noise record of one path: per step and node, theta before the step, the
/// cell mass entering the noise, and the cell martingale increment.
struct PathRecord {
    double dx = 0.0;
    double dt = 0.0;
    std::vector<std::vector<double>> theta;
    std::vector<std::vector<double>> mass_in;
    std::vector<std::vector<double>> dm;
};

/// Exact one-step transition of the unit-rate Feller diffusion.
template <typename Rng>
double feller_transition(double m, double dt, Rng& rng)
{
    if (m <= 0.0)
        return 0.0;
    std::poisson_distribution<std::int64_t> clusters(2.0 * m / dt);
    const std::int64_t k = clusters(rng);
    if (k == 0)
        return 0.0;
    std::gamma_distribution<double> size(static_cast<double>(k), dt / 2.0);
    return size(rng);
}

namespace detail {

inline void diffuse(const std::vector<double>& u, std::vector<double>& out, double dt, double dx)
{
    const double c = dt / (6.0 * dx * dx);
    const std::size_t n = u.size();
    out.assign(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i)
        out[i] = u[i] + c * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
}

} // namespace detail

/// One time step: heat flow with coefficient 1/6, optional killing by
/// exp(-dt theta), then the sqrt(u) noise per cell. theta is integrated by
/// the trapezoid rule. Dirichlet zero at both ends.
template <typename Rng>
void step_dw(SpdeState& s, const SpdeConfig& cfg, Rng& rng, PathRecord* record = nullptr)
{
    const std::size_t n = s.u.size();
    const std::vector<double> before = s.u;
    std::vector<double> v;
    detail::diffuse(s.u, v, cfg.dt, cfg.dx);
    if (cfg.kill)
        for (std::size_t i = 0; i < n; ++i)
            v[i] *= std::exp(-cfg.dt * s.theta[i]);
    if (record) {
        record->dx = cfg.dx;
        record->dt = cfg.dt;
        record->theta.push_back(s.theta);
        record->mass_in.emplace_back(n, 0.0);
        record->dm.emplace_back(n, 0.0);
    }
    std::normal_distribution<double> gauss;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double m = v[i] * cfg.dx;
        double m_next = m;
        switch (cfg.noise) {
        case NoiseScheme::feller_split:
            m_next = feller_transition(m, cfg.dt, rng);
            break;
        case NoiseScheme::euler: {
            const double g = m > 0.0 ? gauss(rng) : 0.0;
            m_next = m + std::sqrt(std::max(m, 0.0) * cfg.dt) * g;
            if (m_next < 0.0) {
                s.clamped -= m_next;
                m_next = 0.0;
            }
            break;
        }
        case NoiseScheme::none:
            break;
        }
        if (record) {
            record->mass_in.back()[i] = m;
            record->dm.back()[i] = m_next - m;
        }
        s.u[i] = m_next / cfg.dx;
    }
    s.u.front() = 0.0;
    s.u.back() = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        s.theta[i] += 0.5 * cfg.dt * (before[i] + s.u[i]);
    s.t += cfg.dt;
}

inline std::int64_t steps_for(double t, double dt)
{
    const auto k = static_cast<std::int64_t>(std::llround(t / dt));
    if (std::abs(static_cast<double>(k) * dt - t) > 1e-9 * std::max(1.0, t))
        throw std::invalid_argument("time horizon is not a multiple of dt");
    return k;
}

/// Discretised log dQ/dP = -sum theta dm - 1/2 sum m theta^2 dt, with theta
/// taken before each step (predictable) and m the cell mass driving it.
inline double girsanov_log_weight(const PathRecord& rec)
{
    if (rec.dm.size() != rec.theta.size() || rec.mass_in.size() != rec.theta.size())
        throw std::invalid_argument("girsanov_log_weight: incomplete noise record");
    double w = 0.0;
    for (std::size_t k = 0; k < rec.theta.size(); ++k) {
        const auto& th = rec.theta[k];
        for (std::size_t i = 0; i < th.size(); ++i)
            w -= th[i] * rec.dm[k][i] + 0.5 * rec.mass_in[k][i] * th[i] * th[i] * rec.dt;
    }
    return w;
}

/// Mean and variance of X_t = int u_t over replicated paths.
struct MassMoments {
    double mean = 0.0;
    double mean_se = 0.0;
    double variance = 0.0;
    double variance_se = 0.0;
    std::int64_t reps = 0;
    double max_clamp_rate = 0.0;
};

inline std::uint64_t path_seed(std::uint64_t master, std::int64_t r) { return replica_seed(master ^ 0x5350444555ULL, static_cast<std::uint64_t>(r)); }

inline MassMoments total_mass_moments(const SpdeConfig& cfg, const std::function<double(double)>& f, double t, std::int64_t reps,
    std::uint64_t seed)
{
    cfg.validate();
    if (reps < 1)
        throw std::invalid_argument("total_mass_moments: reps must be positive");
    const std::int64_t steps = steps_for(t, cfg.dt);
    const SpdeState init = make_state(cfg, f);
    std::vector<double> x(static_cast<std::size_t>(reps));
    std::vector<double> clamp(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(path_seed(seed, r));
        SpdeState s = init;
        for (std::int64_t k = 0; k < steps; ++k)
            step_dw(s, cfg, rng);
        x[static_cast<std::size_t>(r)] = s.total_mass(cfg.dx);
        clamp[static_cast<std::size_t>(r)] = s.clamp_rate(cfg.dx);
    });
    RunningStats st;
    for (double v : x)
        st.add(v);
    MassMoments m;
    m.reps = reps;
    m.mean = st.mean();
    m.mean_se = st.stderr_mean();
    m.variance = st.variance();
    double m4 = 0.0;
    for (double v : x)
        m4 += std::pow(v - m.mean, 4);
    m4 /= static_cast<double>(reps);
    m.variance_se = std::sqrt(std::max(0.0, m4 - m.variance * m.variance) / static_cast<double>(reps));
    for (double c : clamp)
        m.max_clamp_rate = std::max(m.max_clamp_rate, std::isfinite(c) ? c : 1.0);
    return m;
}

/// Scalar Feller diffusion dX = sqrt(X) dB, simulated by its exact
/// transition on a time grid; absorbed at 0.
struct FellerPath {
    double x = 0.0;
    double t = 0.0;
    double dt = 1e-2;

    template <typename Rng>
    void step(Rng& rng)
    {
        x = feller_transition(x, dt, rng);
        t += dt;
    }
};

/// P(sup_t X_t >= level) for each level, from X_0 = x0, monitored on the
/// time grid until absorption or the largest level is reached.
inline std::vector<Estimate> feller_sup_tail(double x0, const std::vector<double>& levels, double dt, std::int64_t reps,
    std::uint64_t seed, double max_time = 1e4)
{
    if (levels.empty() || reps < 1)
        throw std::invalid_argument("feller_sup_tail: need levels and reps");
    const double top = *std::max_element(levels.begin(), levels.end());
    std::vector<double> sup(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(path_seed(seed, r));
        FellerPath p{x0, 0.0, dt};
        double s = x0;
        while (p.x > 0.0 && s < top && p.t < max_time) {
            p.step(rng);
            s = std::max(s, p.x);
        }
        sup[static_cast<std::size_t>(r)] = s;
    });
    std::vector<Estimate> out;
    for (double level : levels) {
        std::int64_t hits = 0;
        for (double s : sup)
            hits += s >= level ? 1 : 0;
        out.push_back(proportion(hits, reps));
    }
    return out;
}

/// Deterministic dual equation d u* = (1/6) Laplacian u* - c (u*)^2 on the
/// grid of `cfg`. Each step applies the exact reaction flow
/// u -> u / (1 + c u dt) and then one explicit heat step. With c = 1/2 this
/// is the exact discrete dual of the feller_split scheme.
inline std::vector<double> dual_solve(const SpdeConfig& cfg, const std::function<double(double)>& phi, double t,
    double reaction = 0.5, bool laplacian = true)
{
    cfg.validate();
    const std::int64_t steps = steps_for(t, cfg.dt);
    const auto n = static_cast<std::size_t>(cfg.nodes());
    std::vector<double> u(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = phi(cfg.x(static_cast<std::int64_t>(i)));
        if (v < 0.0)
            throw std::invalid_argument("dual_solve: test function must be nonnegative");
        u[i] = v;
    }
    if (laplacian) {
        u.front() = 0.0;
        u.back() = 0.0;
    }
    std::vector<double> tmp;
    for (std::int64_t k = 0; k < steps; ++k) {
        for (auto& v : u)
            v = v / (1.0 + reaction * v * cfg.dt);
        if (laplacian) {
            detail::diffuse(u, tmp, cfg.dt, cfg.dx);
            u.swap(tmp);
        }
    }
    return u;
}

/// Explicit heat flow (coefficient 1/6) of the same initial data.
inline std::vector<double> heat_solve(const SpdeConfig& cfg, const std::function<double(double)>& f, double t)
{
    SpdeConfig c = cfg;
    c.noise = NoiseScheme::none;
    c.kill = false;
    SpdeState s = make_state(c, f);
    Stream unused(0);
    const std::int64_t steps = steps_for(t, cfg.dt);
    for (std::int64_t k = 0; k < steps; ++k)
        step_dw(s, c, unused);
    return s.u;
}

/// G_t f(x) = E f(x + B_{t/3}) for f the indicator of [lo, hi].
inline double heat_indicator(double t, double lo, double hi, double x)
{
    if (t <= 0.0)
        return x >= lo && x <= hi ? 1.0 : 0.0;
    const boost::math::normal_distribution<double> z(0.0, std::sqrt(t / 3.0));
    return boost::math::cdf(z, hi - x) - boost::math::cdf(z, lo - x);
}

/// Heat kernel p(t/3, x).
inline double heat_kernel(double t, double x) { return gaussian_density(t / 3.0, x); }

struct DualityCheck {
    Estimate monte_carlo; // E exp(-(u_t, phi))
    double predicted = 0.0; // exp(-(f, u*_t))
};

inline DualityCheck duality_check(const SpdeConfig& cfg, const std::function<double(double)>& f,
    const std::function<double(double)>& phi, double t, std::int64_t reps, std::uint64_t seed)
{
    if (cfg.kill)
        throw std::invalid_argument("duality_check: duality holds for the process without killing");
    const std::int64_t steps = steps_for(t, cfg.dt);
    const SpdeState init = make_state(cfg, f);
    const auto n = init.u.size();
    std::vector<double> phi_grid(n);
    for (std::size_t i = 0; i < n; ++i)
        phi_grid[i] = phi(cfg.x(static_cast<std::int64_t>(i)));
    std::vector<double> val(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(path_seed(seed, r));
        SpdeState s = init;
        for (std::int64_t k = 0; k < steps; ++k)
            step_dw(s, cfg, rng);
        double pair = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            pair += s.u[i] * phi_grid[i];
        val[static_cast<std::size_t>(r)] = std::exp(-pair * cfg.dx);
    });
    RunningStats st;
    for (double v : val)
        st.add(v);
    DualityCheck d;
    d.monte_carlo = {st.mean(), st.stderr_mean(), reps};
    const auto dual = dual_solve(cfg, phi, t, 0.5);
    double pair = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        pair += init.u[i] * dual[i];
    d.predicted = std::exp(-pair * cfg.dx);
    return d;
}

/// E_P exp(log dQ/dP) over paths of the process without killing.
inline Estimate girsanov_mean(const SpdeConfig& cfg, const std::function<double(double)>& f, double t, std::int64_t reps,
    std::uint64_t seed)
{
    SpdeConfig c = cfg;
    c.kill = false;
    const std::int64_t steps = steps_for(t, c.dt);
    const SpdeState init = make_state(c, f);
    std::vector<double> w(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(path_seed(seed, r));
        SpdeState s = init;
        PathRecord rec;
        for (std::int64_t k = 0; k < steps; ++k)
            step_dw(s, c, rng, &rec);
        w[static_cast<std::size_t>(r)] = std::exp(girsanov_log_weight(rec));
    });
    RunningStats st;
    for (double v : w)
        st.add(v);
    return {st.mean(), st.stderr_mean(), reps};
}

/// Profile used by the flat-density check: 1 on [-r, r], 0 outside
/// [-r - ramp, r + ramp], linear between.
inline std::function<double(double)> plateau(double r, double ramp)
{
    return [r, ramp](double x) {
        const double d = std::abs(x);
        if (d <= r)
            return 1.0;
        if (d >= r + ramp)
            return 0.0;
        return (r + ramp - d) / ramp;
    };
}

struct HeatFlatResult {
    Estimate probability;
    double l1 = 0.0;
    double l2 = 0.0;
    double target = 0.0; // 1 - delta^{7/2}
    double min_integral = 0.0; // smallest time integral seen (over paths and x)
    double max_integral = 0.0;
};

/// Empirical P(for all x in [-r - 2 d, r + 2 d]: L1 delta^5 <= int_{delta^5/2}^{delta^5} u_t(x) dt <= L2 delta^5)
/// with d = delta^{5/2}, started from plateau(r, d) and run with killing.
/// L1 = G_{delta^5} 1_{[-r,r]}(r + 2d) / 2 and L2 = 2 max G_t f (= 2).
/// `cfg.dt` is replaced by the largest value <= cfg.dt that divides delta^5/2.
inline HeatFlatResult heat_flat_bound(SpdeConfig cfg, double r, double delta, std::int64_t reps, std::uint64_t seed)
{
    const double horizon = std::pow(delta, 5.0);
    const double d = std::pow(delta, 2.5);
    const auto half_steps = static_cast<std::int64_t>(std::ceil(horizon / 2.0 / cfg.dt - 1e-9));
    cfg.dt = horizon / 2.0 / static_cast<double>(half_steps);
    if (horizon < 10.0 * cfg.dt)
        throw std::invalid_argument("heat_flat_bound: need delta^5 >= 10 dt");
    cfg.validate();
    HeatFlatResult out;
    out.l1 = 0.5 * heat_indicator(horizon, -r, r, r + 2.0 * d);
    out.l2 = 2.0;
    out.target = 1.0 - std::pow(delta, 3.5);
    const auto f = plateau(r, d);
    const SpdeState init = make_state(cfg, f);
    std::vector<std::size_t> nodes;
    for (std::int64_t i = 0; i < cfg.nodes(); ++i)
        if (std::abs(cfg.x(i)) <= r + 2.0 * d + 1e-12)
            nodes.push_back(static_cast<std::size_t>(i));
    std::vector<char> ok(static_cast<std::size_t>(reps), 0);
    std::vector<double> lo(static_cast<std::size_t>(reps)), hi(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](std::int64_t rep) {
        Stream rng(path_seed(seed, rep));
        SpdeState s = init;
        for (std::int64_t k = 0; k < half_steps; ++k)
            step_dw(s, cfg, rng);
        const std::vector<double> mid = s.theta;
        for (std::int64_t k = 0; k < half_steps; ++k)
            step_dw(s, cfg, rng);
        double mn = INFINITY, mx = 0.0;
        for (auto i : nodes) {
            const double integral = s.theta[i] - mid[i];
            mn = std::min(mn, integral);
            mx = std::max(mx, integral);
        }
        lo[static_cast<std::size_t>(rep)] = mn;
        hi[static_cast<std::size_t>(rep)] = mx;
        ok[static_cast<std::size_t>(rep)] = (mn >= out.l1 * horizon && mx <= out.l2 * horizon) ? 1 : 0;
    });
    std::int64_t hits = 0;
    for (auto v : ok)
        hits += v;
    out.probability = proportion(hits, reps);
    out.min_integral = *std::min_element(lo.begin(), lo.end());
    out.max_integral = *std::max_element(hi.begin(), hi.end());
    return out;
}

} // namespace aperc

#endif // APERC_SPDE_HPP
