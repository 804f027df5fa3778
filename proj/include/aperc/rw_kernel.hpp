#ifndef APERC_RW_KERNEL_HPP
#define APERC_RW_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace aperc {

/// Step law of the walk: uniform on {j / N^(1+alpha) : 1 <= |j| <= N}.
struct StepDistribution {
    std::int64_t n = 1;
    double alpha = 0.2;

    StepDistribution() = default;
    StepDistribution(std::int64_t n_, double alpha_) : n(n_), alpha(alpha_)
    {
        if (n < 1)
            throw std::invalid_argument("StepDistribution: N must be positive");
    }

    double scale() const { return std::pow(static_cast<double>(n), 1.0 + alpha); }

    /// Var(Y) = c3 / (3 N^{2 alpha}).
    double c3() const
    {
        const double N = static_cast<double>(n);
        return (N + 1.0) * (2.0 * N + 1.0) / (2.0 * N * N);
    }

    /// E[Y^4] = c4 / (5 N^{4 alpha}).
    double c4() const
    {
        const double N = static_cast<double>(n);
        return (N + 1.0) * (2.0 * N + 1.0) * (3.0 * N * N + 3.0 * N - 1.0) / (6.0 * N * N * N * N);
    }
};

/// Law of S_k on sites j in [-kN, kN]: p[j + kN].
struct WalkPmf {
    std::int64_t steps = 0;
    std::int64_t offset = 0; // = steps * N
    std::vector<double> p;
    double drift = 0.0; // |sum - 1| before renormalisation

    double at(std::int64_t j) const
    {
        const std::int64_t i = j + offset;
        if (i < 0 || i >= static_cast<std::int64_t>(p.size()))
            return 0.0;
        return p[static_cast<std::size_t>(i)];
    }
};

namespace detail {

/// One convolution with the step law: q(j) = (1/2N) sum_{1<=|d|<=N} p(j-d),
/// using long-double prefix sums (exact up to rounding, O(size)).
inline std::vector<double> convolve_step(const std::vector<double>& p, std::int64_t n)
{
    const auto m = static_cast<std::int64_t>(p.size());
    std::vector<long double> prefix(static_cast<std::size_t>(m) + 1, 0.0L);
    for (std::int64_t i = 0; i < m; ++i)
        prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + p[static_cast<std::size_t>(i)];
    auto window = [&](std::int64_t lo, std::int64_t hi) -> long double { // sum of p[lo..hi], clipped
        lo = std::max<std::int64_t>(lo, 0);
        hi = std::min<std::int64_t>(hi, m - 1);
        if (hi < lo)
            return 0.0L;
        return prefix[static_cast<std::size_t>(hi) + 1] - prefix[static_cast<std::size_t>(lo)];
    };
    std::vector<double> q(static_cast<std::size_t>(m + 2 * n), 0.0);
    const long double w = 1.0L / (2.0L * static_cast<long double>(n));
    for (std::int64_t k = 0; k < m + 2 * n; ++k) {
        const std::int64_t c = k - n; // position in p's index space
        q[static_cast<std::size_t>(k)] = static_cast<double>(w * (window(c - n, c - 1) + window(c + 1, c + n)));
    }
    return q;
}

} // namespace detail

/// Exact law of S_k (k-fold convolution), renormalised; drift must stay
/// below 1e-12.
inline WalkPmf exact_pmf(const StepDistribution& step, std::int64_t k, std::int64_t max_support = std::int64_t{1} << 26)
{
    if (k < 0)
        throw std::invalid_argument("exact_pmf: k must be nonnegative");
    if (2 * k * step.n + 1 > max_support)
        throw std::invalid_argument("exact_pmf: support exceeds cap");
    WalkPmf w;
    w.steps = k;
    w.offset = k * step.n;
    std::vector<double> p{1.0};
    for (std::int64_t i = 0; i < k; ++i)
        p = detail::convolve_step(p, step.n);
    long double total = 0.0L;
    for (double v : p)
        total += v;
    w.drift = static_cast<double>(std::abs(total - 1.0L));
    if (w.drift > 1e-12)
        throw std::runtime_error("exact_pmf: normalisation drift above 1e-12");
    for (auto& v : p)
        v = static_cast<double>(v / total);
    w.p = std::move(p);
    return w;
}

/// psi_k^z(x) = N^{1+alpha} P(S_{k+1} = x - z), for all x - z at once.
struct PsiKernel {
    std::int64_t k = 0;
    WalkPmf law; // law of S_{k+1}
    double scale = 1.0;

    double operator()(std::int64_t z, std::int64_t x) const { return scale * law.at(x - z); }

    /// (psi, 1) = N^{-(1+alpha)} sum_x psi(x).
    double mass() const
    {
        long double acc = 0.0L;
        for (double v : law.p)
            acc += static_cast<long double>(scale) * v;
        return static_cast<double>(acc / scale);
    }
};

inline PsiKernel psi_kernel(const StepDistribution& step, std::int64_t k)
{
    if (k < 0)
        throw std::invalid_argument("psi: k must be nonnegative");
    return PsiKernel{k, exact_pmf(step, k + 1), step.scale()};
}

inline double psi(const StepDistribution& step, std::int64_t k, std::int64_t z, std::int64_t x)
{
    return psi_kernel(step, k)(z, x);
}

/// max_x |psi_i - psi_{i-1} - N^{-2 alpha} Delta_D psi_{i-1}| with
/// Delta_D f(x) = (N^{2 alpha} / 2N) sum_{y~x} (f(y) - f(x)).
inline double heat_recursion_residual(const StepDistribution& step, std::int64_t i)
{
    if (i < 1)
        throw std::invalid_argument("heat_recursion_residual: i must be >= 1");
    const PsiKernel prev = psi_kernel(step, i - 1);
    const PsiKernel cur = psi_kernel(step, i);
    const std::int64_t n = step.n;
    const double n2a = std::pow(static_cast<double>(n), 2.0 * step.alpha);
    double worst = 0.0;
    const std::int64_t reach = cur.law.offset;
    for (std::int64_t x = -reach - n; x <= reach + n; ++x) {
        double lap = 0.0;
        const double fx = prev(0, x);
        for (std::int64_t d = 1; d <= n; ++d)
            lap += (prev(0, x - d) - fx) + (prev(0, x + d) - fx);
        lap *= n2a / (2.0 * static_cast<double>(n));
        worst = std::max(worst, std::abs(cur(0, x) - fx - lap / n2a));
    }
    return worst;
}

/// Scaled variance of S_k: sum p(j) (j / N^{1+alpha})^2.
inline double scaled_variance(const WalkPmf& w, const StepDistribution& step)
{
    const double s = step.scale();
    long double acc = 0.0L;
    for (std::size_t i = 0; i < w.p.size(); ++i) {
        const long double j = static_cast<long double>(static_cast<std::int64_t>(i) - w.offset);
        acc += w.p[i] * j * j;
    }
    return static_cast<double>(acc / (static_cast<long double>(s) * s));
}

/// Centered Gaussian density with variance v.
inline double gaussian_density(double v, double x)
{
    return std::exp(-x * x / (2.0 * v)) / std::sqrt(2.0 * std::numbers::pi * v);
}

struct CltError {
    double sup_error = 0.0;
    double bound_ratio = 0.0; // sup_error / (N^alpha t^{-3/2})
};

/// sup_y |N^{1+alpha} P(S_t = y) - p(c3 t / (3 N^{2 alpha}), y / N^{1+alpha})|.
inline CltError clt_error(const StepDistribution& step, std::int64_t t)
{
    if (t < 1)
        throw std::invalid_argument("clt_error: t must be >= 1");
    const WalkPmf w = exact_pmf(step, t);
    const double s = step.scale();
    const double v = step.c3() * static_cast<double>(t) / (3.0 * std::pow(static_cast<double>(step.n), 2.0 * step.alpha));
    CltError e;
    for (std::size_t i = 0; i < w.p.size(); ++i) {
        const double y = static_cast<double>(static_cast<std::int64_t>(i) - w.offset) / s;
        e.sup_error = std::max(e.sup_error, std::abs(s * w.p[i] - gaussian_density(v, y)));
    }
    e.bound_ratio = e.sup_error / (std::pow(static_cast<double>(step.n), step.alpha) * std::pow(static_cast<double>(t), -1.5));
    return e;
}

} // namespace aperc

#endif // APERC_RW_KERNEL_HPP
