#ifndef APERC_DENSITY_HPP
#define APERC_DENSITY_HPP

#include "envelope.hpp"
#include "true_process.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace aperc {

/// Function sampled on a uniform grid x_i = x0 + i*dx, extended by linear
/// interpolation between nodes and by zero outside [x0, x_last].
struct GridFunction {
    double x0 = 0.0;
    double dx = 1.0;
    std::vector<double> values;

    double node(std::size_t i) const noexcept { return x0 + static_cast<double>(i) * dx; }
    std::size_t size() const noexcept { return values.size(); }

    double operator()(double x) const noexcept
    {
        if (values.empty())
            return 0.0;
        const double s = (x - x0) / dx;
        if (s < 0.0 || s > static_cast<double>(values.size() - 1))
            return 0.0;
        const auto i = static_cast<std::size_t>(std::floor(s));
        if (i + 1 >= values.size())
            return values.back();
        const double w = s - static_cast<double>(i);
        return (1.0 - w) * values[i] + w * values[i + 1];
    }

    static GridFunction sample(const std::function<double(double)>& f, double x0, double dx, std::size_t count)
    {
        GridFunction g{x0, dx, std::vector<double>(count)};
        for (std::size_t i = 0; i < count; ++i)
            g.values[i] = f(g.node(i));
        return g;
    }
};

/// Approximate density on an unscaled site window. Node i is the site
/// first_site + i; its scaled position is (first_site + i) / N^(1+alpha).
struct DensityProfile {
    std::int64_t first_site = 0;
    std::int64_t n = 1;
    double alpha = 0.2;
    std::vector<double> values;

    double scale() const { return std::pow(static_cast<double>(n), 1.0 + alpha); }

    GridFunction as_function() const
    {
        return GridFunction{static_cast<double>(first_site) / scale(), 1.0 / scale(), values};
    }
};

namespace detail {

/// A(x) = (1/(2N^alpha)) * sum_{1 <= |x-y| <= N} count(y) for x in
/// [lo, hi], from sorted (site, count) pairs, via prefix sums.
inline DensityProfile window_density(const std::vector<std::pair<std::int64_t, std::int64_t>>& sites, std::int64_t n,
    double alpha, std::int64_t lo, std::int64_t hi)
{
    if (hi < lo)
        throw std::invalid_argument("approximate_density: empty window");
    DensityProfile p;
    p.first_site = lo;
    p.n = n;
    p.alpha = alpha;
    const std::int64_t width = hi - lo + 1;
    // Dense counts on [lo - N, hi + N].
    const std::int64_t base = lo - n;
    std::vector<std::int64_t> dense(static_cast<std::size_t>(width + 2 * n), 0);
    for (const auto& [s, c] : sites)
        if (s >= base && s < base + static_cast<std::int64_t>(dense.size()))
            dense[static_cast<std::size_t>(s - base)] += c;
    std::vector<std::int64_t> prefix(dense.size() + 1, 0);
    for (std::size_t i = 0; i < dense.size(); ++i)
        prefix[i + 1] = prefix[i] + dense[i];
    const double w = 1.0 / (2.0 * std::pow(static_cast<double>(n), alpha));
    p.values.resize(static_cast<std::size_t>(width));
    for (std::int64_t i = 0; i < width; ++i) {
        const auto c = static_cast<std::size_t>(i + n); // index of x in dense
        const std::int64_t sum = prefix[c + static_cast<std::size_t>(n) + 1] - prefix[c - static_cast<std::size_t>(n)] - dense[c];
        p.values[static_cast<std::size_t>(i)] = w * static_cast<double>(sum);
    }
    return p;
}

} // namespace detail

inline DensityProfile approximate_density(const ParticleField& field, const LatticeConfig& cfg, std::int64_t lo, std::int64_t hi)
{
    std::vector<std::pair<std::int64_t, std::int64_t>> sites(field.counts.begin(), field.counts.end());
    return detail::window_density(sites, cfg.n, cfg.alpha, lo, hi);
}

inline DensityProfile approximate_density(const OccupancyField& field, const LatticeConfig& cfg, std::int64_t lo, std::int64_t hi)
{
    std::vector<std::pair<std::int64_t, std::int64_t>> sites;
    sites.reserve(field.occupied.size());
    for (auto x : field.occupied)
        sites.emplace_back(x, 1);
    return detail::window_density(sites, cfg.n, cfg.alpha, lo, hi);
}

/// sup_x |f(x)| e^{lambda |x|} for the piecewise-linear extension of f,
/// including interior extrema of each segment.
inline double lambda_norm(const GridFunction& f, double lambda)
{
    double best = 0.0;
    auto weight = [lambda](double x) { return std::exp(lambda * std::abs(x)); };
    // Candidate on a piece x in [xl, xr] where |f| = c0 + m (x - xl) and |x| = s x.
    auto piece = [&](double xl, double xr, double fl, double fr) {
        best = std::max(best, std::max(std::abs(fl) * weight(xl), std::abs(fr) * weight(xr)));
        if (lambda == 0.0 || xr <= xl)
            return;
        const double al = std::abs(fl);
        const double ar = std::abs(fr);
        const double m = (ar - al) / (xr - xl);
        if (m == 0.0)
            return;
        const double s = xl + xr >= 0.0 ? 1.0 : -1.0;
        // d/dx [(al + m (x - xl)) e^{lambda s x}] = 0  =>  al + m (x - xl) = -m / (lambda s)
        const double target = -m / (lambda * s);
        const double x = xl + (target - al) / m;
        if (x > xl && x < xr && target > 0.0)
            best = std::max(best, target * weight(x));
    };
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
        const double xl = f.node(i);
        const double xr = f.node(i + 1);
        const double fl = f.values[i];
        const double fr = f.values[i + 1];
        // Split at a sign change of f and at x = 0 so each piece is smooth.
        std::vector<double> cuts{xl};
        if (fl * fr < 0.0)
            cuts.push_back(xl + (xr - xl) * fl / (fl - fr));
        if (xl < 0.0 && xr > 0.0)
            cuts.push_back(0.0);
        cuts.push_back(xr);
        std::sort(cuts.begin(), cuts.end());
        auto at = [&](double c) { return fl + (fr - fl) * (c - xl) / (xr - xl); };
        for (std::size_t j = 0; j + 1 < cuts.size(); ++j)
            piece(cuts[j], cuts[j + 1], at(cuts[j]), at(cuts[j + 1]));
    }
    if (f.size() == 1)
        best = std::abs(f.values[0]) * weight(f.x0);
    return best;
}

inline double lambda_norm(const DensityProfile& p, double lambda) { return lambda_norm(p.as_function(), lambda); }

/// D(f, delta)(x) = sup{|f(y) - f(x)| : |y - x| <= delta} over grid nodes,
/// with the window clipped to the grid. Sliding max/min, O(size).
inline GridFunction amplitude(const GridFunction& f, double delta)
{
    if (!(delta > 0.0))
        throw std::invalid_argument("amplitude: delta must be positive");
    const auto k = static_cast<std::int64_t>(std::floor(delta / f.dx + 1e-9));
    const auto n = static_cast<std::int64_t>(f.size());
    GridFunction out{f.x0, f.dx, std::vector<double>(f.size(), 0.0)};
    std::deque<std::int64_t> maxq;
    std::deque<std::int64_t> minq;
    std::int64_t right = -1;
    for (std::int64_t i = 0; i < n; ++i) {
        while (right < std::min(n - 1, i + k)) {
            ++right;
            const double v = f.values[static_cast<std::size_t>(right)];
            while (!maxq.empty() && f.values[static_cast<std::size_t>(maxq.back())] <= v)
                maxq.pop_back();
            maxq.push_back(right);
            while (!minq.empty() && f.values[static_cast<std::size_t>(minq.back())] >= v)
                minq.pop_back();
            minq.push_back(right);
        }
        while (maxq.front() < i - k)
            maxq.pop_front();
        while (minq.front() < i - k)
            minq.pop_front();
        const double fx = f.values[static_cast<std::size_t>(i)];
        out.values[static_cast<std::size_t>(i)] = std::max(f.values[static_cast<std::size_t>(maxq.front())] - fx,
            fx - f.values[static_cast<std::size_t>(minq.front())]);
    }
    return out;
}

/// Measure pairing (nu, phi) = N^{-2 alpha} sum_x xi(x) phi(x / N^{1+alpha}).
inline double measure_pairing(const std::vector<std::pair<std::int64_t, std::int64_t>>& sites, const LatticeConfig& cfg,
    const std::function<double(double)>& phi)
{
    const double s = cfg.space_scale();
    double acc = 0.0;
    for (const auto& [x, c] : sites)
        acc += static_cast<double>(c) * phi(static_cast<double>(x) / s);
    return acc / cfg.time_scale();
}

/// Lattice pairing (A, phi) = N^{-(1+alpha)} sum_x A(x) phi(x / N^{1+alpha}).
inline double density_pairing(const DensityProfile& a, const std::function<double(double)>& phi)
{
    const double s = a.scale();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        acc += a.values[i] * phi(static_cast<double>(a.first_site + static_cast<std::int64_t>(i)) / s);
    return acc / s;
}

/// Both sides of |(nu, phi) - (A, phi)| <= ||D(phi, N^{-alpha})||_lambda (nu, e_{-lambda})
/// for a {0,1} or count field supported in [lo, hi] (unscaled).
struct MeasureDensityCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds() const noexcept { return lhs <= rhs * (1.0 + 1e-12) + 1e-15; }
};

inline MeasureDensityCheck measure_density_check(const std::vector<std::pair<std::int64_t, std::int64_t>>& sites,
    const LatticeConfig& cfg, const std::function<double(double)>& phi, double lambda, std::int64_t lo, std::int64_t hi)
{
    const std::int64_t n = cfg.n;
    // The density window must cover every x with phi(x) != 0 that sees the field;
    // phi is sampled on [lo - 2N, hi + 2N] so D's windows are complete near the field.
    const DensityProfile a = detail::window_density(sites, n, cfg.alpha, lo - n, hi + n);
    MeasureDensityCheck c;
    const double paired_measure = measure_pairing(sites, cfg, phi);
    const double paired_density = density_pairing(a, phi);
    c.lhs = std::abs(paired_measure - paired_density);
    const double s = cfg.space_scale();
    const auto grid = GridFunction::sample(phi, static_cast<double>(lo - 2 * n) / s, 1.0 / s,
        static_cast<std::size_t>(hi - lo + 4 * n + 1));
    const GridFunction d = amplitude(grid, std::pow(static_cast<double>(n), -cfg.alpha));
    // Restrict the sup to the field's support, where D enters the bound.
    GridFunction d_core{static_cast<double>(lo) / s, 1.0 / s,
        std::vector<double>(d.values.begin() + 2 * n, d.values.begin() + 2 * n + (hi - lo + 1))};
    const double norm = lambda_norm(d_core, lambda);
    const double weighted_mass
        = measure_pairing(sites, cfg, [lambda](double x) { return std::exp(-lambda * std::abs(x)); });
    c.rhs = norm * weighted_mass;
    return c;
}

} // namespace aperc

#endif // APERC_DENSITY_HPP
