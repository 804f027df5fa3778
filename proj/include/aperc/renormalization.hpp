#ifndef APERC_RENORMALIZATION_HPP
#define APERC_RENORMALIZATION_HPP

#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"
#include "true_process.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace aperc {

/// Block geometry. delta is fixed through the integer D = delta^{-5/2}, so
/// a block spans 2D layers and the good interval grows by 1/D = delta^{5/2}
/// per layer.
struct BlockSpec {
    std::int64_t d = 1; // delta^{-5/2}
    std::int64_t n = 1; // lattice N
    double alpha = 0.2;
    /// Count tolerance of goodness. 0 is the exact definition; tau > 0 is a
    /// relaxation (each sub-interval may miss up to tau sites).
    double tau = 0.0;

    double delta() const { return std::pow(static_cast<double>(d), -0.4); }
    double ramp() const { return 1.0 / static_cast<double>(d); }
    std::int64_t layers_per_block() const { return 2 * d; }

    /// Steps of the subordinated process per layer: delta^5 N^{2/5}, floored
    /// to an even number.
    std::int64_t steps_per_layer() const
    {
        const double raw = std::pow(static_cast<double>(n), 0.4) / static_cast<double>(d * d);
        return 2 * static_cast<std::int64_t>(std::floor(raw / 2.0 + 1e-9));
    }

    void validate() const
    {
        if (d < 1 || n < 1)
            throw std::invalid_argument("BlockSpec: need D >= 1 and N >= 1");
        if (steps_per_layer() < 2)
            throw std::invalid_argument("BlockSpec: delta^5 N^{2/5} < 2");
        if (!(tau >= 0.0))
            throw std::invalid_argument("BlockSpec: tau must be nonnegative");
    }

    /// I_m = [-1, 1] + 2m.
    std::pair<double, double> interval(std::int64_t m) const { return {2.0 * static_cast<double>(m) - 1.0, 2.0 * static_cast<double>(m) + 1.0}; }

    /// R_{m,n} = [-4, 4] x [0, 2D] + (2m, 2nD): x range (scaled) and layer range.
    struct Rect {
        double x_lo, x_hi;
        std::int64_t layer_lo, layer_hi;
    };
    Rect block(std::int64_t m, std::int64_t row) const
    {
        return {2.0 * static_cast<double>(m) - 4.0, 2.0 * static_cast<double>(m) + 4.0, 2 * row * d, 2 * (row + 1) * d};
    }

    GoodSpec good(double a, double b) const { return GoodSpec{a, b, ramp(), n, alpha}; }
};

/// Coin address of one layer step: block (m, row) and layer j inside it.
struct LayerKey {
    std::int64_t m = 0;
    std::int64_t row = 0;
    std::int64_t layer = 0;
};

/// Vertical uniform of site x leaving layer `key.layer` of block (m, row).
/// Keys carry the block coordinates, so distinct blocks never share coins.
inline double block_vertical_uniform(std::uint64_t seed, const LayerKey& key, std::int64_t x)
{
    return to_unit(hash_key(seed, static_cast<std::uint64_t>(KeyTag::vertical_block), key.m, key.row, key.layer, x));
}

inline std::uint64_t block_horizontal_seed(std::uint64_t seed, const LayerKey& key)
{
    return hash_key(seed, static_cast<std::uint64_t>(KeyTag::block), key.m, key.row, key.layer);
}

enum class StepFailure { none, initial_not_good, shortfall };

struct LayerStepResult {
    bool success = false;
    StepFailure failure = StepFailure::none;
    OccupancyField next; // good for the grown interval when success
    std::int64_t candidates = 0; // distinct connected sites on the next layer
    ThinResult thin; // shortfall details when failure == shortfall
};

/// One layer of the block construction. From a field good for [a, b], run
/// the process killed outside [a - 1/2, b + 1/2] for S steps; every site
/// occupied at some step in [S/2, S] whose vertical coin is open becomes a
/// candidate on the next layer, and the candidates are thinned (leftmost
/// first) to a field good for [a - 1/D, b + 1/D].
/// Both the start check and the thinning use spec.tau.
inline LayerStepResult block_step(const OccupancyField& start, double a, double b, const LatticeConfig& cfg, const BlockSpec& spec,
    const EnvelopeKernel& kernel, const LayerKey& key)
{
    spec.validate();
    LayerStepResult r;
    const GoodSpec now = spec.good(a, b);
    if (!is_good_relaxed(start, now, spec.tau)) {
        r.failure = StepFailure::initial_not_good;
        return r;
    }
    OccupancyField f = OccupancyField::from_sites(start.occupied);
    f.kill_window = now.kill_window();
    const std::int64_t steps = spec.steps_per_layer();
    const double pv = cfg.p_v();
    Stream rng(block_horizontal_seed(cfg.seed, key));
    std::vector<std::int64_t> cand;
    for (std::int64_t k = 1; k <= steps && !f.extinct(); ++k) {
        advance_true(f, kernel, rng);
        if (2 * k >= steps)
            for (auto x : f.occupied)
                if (block_vertical_uniform(cfg.seed, key, x) < pv)
                    cand.push_back(x);
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    r.candidates = static_cast<std::int64_t>(cand.size());
    r.thin = thin_to_good(cand, spec.good(a - spec.ramp(), b + spec.ramp()), spec.tau);
    if (!r.thin.ok) {
        r.failure = StepFailure::shortfall;
        return r;
    }
    r.success = true;
    r.next = std::move(r.thin.field);
    r.thin.field = {};
    return r;
}

struct BlockOutcome {
    std::int64_t m = 0;
    std::int64_t row = 0;
    bool start_good = false;
    bool ghost = false; // no parent succeeded; started from the canonical field
    bool success = false;
    std::int64_t failed_layer = -1;
    StepFailure failure = StepFailure::none;
    /// Completed layers plus the filled fraction of sub-intervals at the
    /// failing layer; equals 2D exactly on success. omega is a function of it.
    double score = 0.0;
    OccupancyField final_field; // good for [-3, 3] + 2m on success
};

/// Runs block (m, row): 2D layer steps growing I_m = [-1,1]+2m to [-3,3]+2m.
inline BlockOutcome run_block(const OccupancyField& start, std::int64_t m, std::int64_t row, const LatticeConfig& cfg,
    const BlockSpec& spec, const EnvelopeKernel& kernel)
{
    BlockOutcome out;
    out.m = m;
    out.row = row;
    auto [a, b] = spec.interval(m);
    out.start_good = is_good_relaxed(start, spec.good(a, b), spec.tau);
    if (!out.start_good) {
        out.failure = StepFailure::initial_not_good;
        return out;
    }
    OccupancyField cur = start;
    for (std::int64_t j = 0; j < spec.layers_per_block(); ++j) {
        // Growth is tracked in units of 1/D so the endpoints stay exact.
        const double lo = a - static_cast<double>(j) * spec.ramp();
        const double hi = b + static_cast<double>(j) * spec.ramp();
        auto step = block_step(cur, lo, hi, cfg, spec, kernel, LayerKey{m, row, j});
        if (!step.success) {
            out.failed_layer = j;
            out.failure = step.failure;
            if (step.thin.total > 0)
                out.score = static_cast<double>(j) + static_cast<double>(step.thin.filled) / static_cast<double>(step.thin.total);
            else
                out.score = static_cast<double>(j);
            return out;
        }
        cur = std::move(step.next);
    }
    out.success = true;
    out.score = static_cast<double>(spec.layers_per_block());
    out.final_field = std::move(cur);
    return out;
}

/// Open/closed field on L0 = {(m, n) : m + n even, n >= 0}.
struct OrientedField {
    std::map<std::pair<std::int64_t, std::int64_t>, char> omega;

    static bool in_l0(std::int64_t m, std::int64_t row) { return row >= 0 && ((m + row) % 2 + 2) % 2 == 0; }

    void set(std::int64_t m, std::int64_t row, bool open)
    {
        if (!in_l0(m, row))
            throw std::invalid_argument("OrientedField: site outside L0");
        omega[{m, row}] = open ? 1 : 0;
    }

    /// Absent sites read as closed.
    bool open(std::int64_t m, std::int64_t row) const
    {
        const auto it = omega.find({m, row});
        return it != omega.end() && it->second != 0;
    }
};

/// Blocks of one stacked run, keyed by (m, row).
struct StackedRun {
    std::int64_t rows = 0;
    std::map<std::pair<std::int64_t, std::int64_t>, BlockOutcome> blocks;
};

/// Runs the cone of blocks (m, row), |m| <= row < rows, m + row even. Block
/// (m, row+1) inherits the restriction to I_m of the final field of its
/// lower-m parent (m-1, row) if that succeeded, else of (m+1, row), else
/// starts from make_good (a ghost start). `initial` replaces the canonical
/// field of block (0, 0).
inline StackedRun run_stacked(const LatticeConfig& cfg, const BlockSpec& spec, std::int64_t rows,
    const std::optional<OccupancyField>& initial = std::nullopt)
{
    spec.validate();
    if (rows < 1)
        throw std::invalid_argument("run_stacked: rows must be >= 1");
    const EnvelopeKernel kernel(cfg);
    StackedRun run;
    run.rows = rows;
    for (std::int64_t row = 0; row < rows; ++row) {
        for (std::int64_t m = -row; m <= row; m += 2) {
            auto [a, b] = spec.interval(m);
            const GoodSpec target = spec.good(a, b);
            OccupancyField start;
            bool ghost = false;
            if (row == 0) {
                start = initial ? *initial : make_good(target);
            } else {
                const BlockOutcome* parent = nullptr;
                for (std::int64_t pm : {m - 1, m + 1}) {
                    const auto it = run.blocks.find({pm, row - 1});
                    if (it != run.blocks.end() && it->second.success) {
                        parent = &it->second;
                        break;
                    }
                }
                if (parent) {
                    auto t = thin_to_good(parent->final_field.occupied, target, spec.tau);
                    if (!t.ok)
                        throw std::logic_error("run_stacked: parent field does not cover child interval");
                    start = std::move(t.field);
                } else {
                    start = make_good(target);
                    ghost = true;
                }
            }
            BlockOutcome o = run_block(start, m, row, cfg, spec, kernel);
            o.ghost = ghost;
            run.blocks[{m, row}] = std::move(o);
        }
        // Parents two rows back are no longer needed.
        if (row >= 1)
            for (auto& [key, blk] : run.blocks)
                if (key.second == row - 1)
                    blk.final_field = {};
    }
    return run;
}

/// omega(m, n) = 1 iff block (m, n) started from a good field and all its
/// layer steps succeeded.
inline OrientedField extract_omega(const StackedRun& run)
{
    OrientedField f;
    for (const auto& [key, blk] : run.blocks)
        f.set(key.first, key.second, blk.start_good && blk.success);
    return f;
}

// ---------------------------------------------------------------------------
// Oriented site percolation on L0

/// Whether the open cluster of (0, 0) reaches row `rows`. Site (m, n+1) is
/// wet iff open and one of (m-1, n), (m+1, n) is wet.
template <typename Open>
bool oriented_reaches(Open&& open, std::int64_t rows)
{
    if (!open(0, 0))
        return false;
    std::vector<char> wet{1}; // row r: m = -r, -r+2, ..., r
    for (std::int64_t r = 1; r <= rows; ++r) {
        std::vector<char> next(static_cast<std::size_t>(r) + 1, 0);
        bool any = false;
        for (std::int64_t i = 0; i <= r; ++i) {
            const std::int64_t m = -r + 2 * i;
            const bool left = i - 1 >= 0 && wet[static_cast<std::size_t>(i - 1)];
            const bool right = i < r && wet[static_cast<std::size_t>(i)];
            if ((left || right) && open(m, r)) {
                next[static_cast<std::size_t>(i)] = 1;
                any = true;
            }
        }
        if (!any)
            return false;
        wet = std::move(next);
    }
    return true;
}

enum class OrientedSource { iid, one_dependent };

/// iid: omega = 1{U(m,n) < p}. one_dependent: omega(m,n) = 1{Z(m,n) < sqrt p}
/// * 1{Z(m-1,n-1) < sqrt p} with Z iid per site, a block factor in which
/// only sites at sup-distance 1 share a variable. Both have density p and
/// are monotone in p for a fixed seed.
inline bool oriented_site_open(OrientedSource src, double p, std::uint64_t seed, std::int64_t m, std::int64_t row)
{
    if (src == OrientedSource::iid)
        return to_unit(hash_key(seed, static_cast<std::uint64_t>(KeyTag::block), m, row)) < p;
    const double s = std::sqrt(p);
    auto z = [&](std::int64_t mm, std::int64_t rr) {
        return to_unit(hash_key(seed, static_cast<std::uint64_t>(KeyTag::vertical_block), mm, rr));
    };
    return z(m, row) < s && z(m - 1, row - 1) < s;
}

inline Estimate oriented_survival(OrientedSource src, double p, std::int64_t rows, std::int64_t reps, std::uint64_t seed)
{
    if (rows < 1 || reps < 1)
        throw std::invalid_argument("oriented_survival: need rows >= 1 and reps >= 1");
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("oriented_survival: p must lie in [0,1]");
    std::vector<char> hit(static_cast<std::size_t>(reps), 0);
    parallel_for(reps, [&](std::int64_t r) {
        const std::uint64_t s = replica_seed(seed, static_cast<std::uint64_t>(r));
        hit[static_cast<std::size_t>(r)]
            = oriented_reaches([&](std::int64_t m, std::int64_t row) { return oriented_site_open(src, p, s, m, row); }, rows) ? 1 : 0;
    });
    std::int64_t h = 0;
    for (auto v : hit)
        h += v;
    return proportion(h, reps);
}

/// Survival of extracted fields (one per stacked run).
inline Estimate oriented_survival(const std::vector<OrientedField>& fields, std::int64_t rows)
{
    if (fields.empty())
        throw std::invalid_argument("oriented_survival: no fields");
    std::int64_t h = 0;
    for (const auto& f : fields)
        h += oriented_reaches([&](std::int64_t m, std::int64_t row) { return f.open(m, row); }, rows) ? 1 : 0;
    return proportion(h, static_cast<std::int64_t>(fields.size()));
}

/// Correlation of omega at two sites across replicate fields, with a
/// permutation p-value.
struct IndependenceAudit {
    double correlation = 0.0;
    double stderr_ = 0.0; // 1/sqrt(R) under independence
    double permutation_p = 1.0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    std::int64_t reps = 0;
    bool degenerate = false; // one of the indicators is constant
    bool passes() const noexcept { return !degenerate && std::abs(correlation) <= 3.0 * stderr_; }
};

inline double pearson(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Correlation audit of two paired samples (replicate r gives x[r], y[r]).
inline IndependenceAudit audit_correlation(const std::vector<double>& x, const std::vector<double>& y, std::int64_t permutations,
    std::uint64_t seed)
{
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("audit_correlation: need two matching samples of size >= 2");
    IndependenceAudit out;
    out.reps = static_cast<std::int64_t>(x.size());
    out.mean_a = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(out.reps);
    out.mean_b = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(out.reps);
    auto constant = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); }); };
    out.degenerate = constant(x) || constant(y);
    out.correlation = pearson(x, y);
    out.stderr_ = 1.0 / std::sqrt(static_cast<double>(out.reps));
    Stream rng(seed);
    std::int64_t extreme = 0;
    std::vector<double> shuffled = y;
    for (std::int64_t k = 0; k < permutations; ++k) {
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
        if (std::abs(pearson(x, shuffled)) >= std::abs(out.correlation) - 1e-15)
            ++extreme;
    }
    out.permutation_p = permutations > 0 ? static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1) : 1.0;
    return out;
}

namespace detail {
inline void require_separated(std::pair<std::int64_t, std::int64_t> a, std::pair<std::int64_t, std::int64_t> b)
{
    const std::int64_t sep = std::max(std::abs(a.first - b.first), std::abs(a.second - b.second));
    if (sep < 2)
        throw std::invalid_argument("independence audit: sites must be at sup-distance >= 2");
}
} // namespace detail

/// Audit of omega at two sites across replicate fields.
inline IndependenceAudit audit_independence(const std::vector<OrientedField>& fields, std::pair<std::int64_t, std::int64_t> a,
    std::pair<std::int64_t, std::int64_t> b, std::int64_t permutations, std::uint64_t seed)
{
    detail::require_separated(a, b);
    std::vector<double> x, y;
    for (const auto& f : fields) {
        x.push_back(f.open(a.first, a.second) ? 1.0 : 0.0);
        y.push_back(f.open(b.first, b.second) ? 1.0 : 0.0);
    }
    return audit_correlation(x, y, permutations, seed);
}

/// Same audit on the block scores. omega is a function of the score, so
/// independent scores imply independent omegas; the score stays
/// informative when omega itself is almost surely 0.
inline IndependenceAudit audit_score_independence(const std::vector<StackedRun>& runs, std::pair<std::int64_t, std::int64_t> a,
    std::pair<std::int64_t, std::int64_t> b, std::int64_t permutations, std::uint64_t seed)
{
    detail::require_separated(a, b);
    std::vector<double> x, y;
    for (const auto& r : runs) {
        x.push_back(r.blocks.at(a).score);
        y.push_back(r.blocks.at(b).score);
    }
    return audit_correlation(x, y, permutations, seed);
}

/// Threshold density of the comparison with 1-dependent oriented percolation:
/// percolation is guaranteed once the closed-edge probability 12 delta is
/// below 6^{-36}.
inline double comparison_threshold() { return std::pow(6.0, -36.0); }

} // namespace aperc

#endif // APERC_RENORMALIZATION_HPP
