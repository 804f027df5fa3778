#ifndef APERC_LATTICE_HPP
#define APERC_LATTICE_HPP

#include "config.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"

#include <cmath>
#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

namespace aperc {

/// Lattice vertex: horizontal coordinate x and layer index.
struct Site {
    std::int64_t x = 0;
    std::int64_t layer = 0;

    friend constexpr auto operator<=>(const Site&, const Site&) = default;
};

struct SiteHash {
    std::size_t operator()(const Site& s) const noexcept
    {
        return static_cast<std::size_t>(mix64(static_cast<std::uint64_t>(s.x) ^ mix64(static_cast<std::uint64_t>(s.layer))));
    }
};

enum class EdgeKind { horizontal, vertical };

/// Undirected edge with lexicographically ordered endpoints.
class EdgeId {
public:
    static EdgeId between(const Site& u, const Site& v, std::int64_t range)
    {
        if (u.layer == v.layer) {
            const std::int64_t d = u.x > v.x ? u.x - v.x : v.x - u.x;
            if (d < 1 || d > range)
                throw std::invalid_argument("EdgeId: horizontal edge length must lie in [1, N]");
            return EdgeId(EdgeKind::horizontal, u, v);
        }
        if (u.x == v.x && (u.layer - v.layer == 1 || v.layer - u.layer == 1))
            return EdgeId(EdgeKind::vertical, u, v);
        throw std::invalid_argument("EdgeId: endpoints are not adjacent");
    }

    EdgeKind kind() const noexcept { return kind_; }
    const Site& first() const noexcept { return lo_; }
    const Site& second() const noexcept { return hi_; }

    friend bool operator==(const EdgeId&, const EdgeId&) = default;

private:
    EdgeId(EdgeKind k, const Site& u, const Site& v) : kind_(k), lo_(std::min(u, v)), hi_(std::max(u, v)) {}

    EdgeKind kind_;
    Site lo_;
    Site hi_;
};

/// Quenched uniform of a horizontal edge {(x, layer), (x + d, layer)}, d >= 1.
inline double horizontal_uniform(std::uint64_t seed, std::int64_t layer, std::int64_t x, std::int64_t d) noexcept
{
    return to_unit(hash_key(seed, static_cast<std::uint64_t>(KeyTag::horizontal_edge), layer, x, d));
}

/// Quenched uniform of the vertical edge {(x, layer), (x, layer + 1)}.
inline double vertical_uniform(std::uint64_t seed, std::int64_t x, std::int64_t layer) noexcept
{
    return to_unit(hash_key(seed, static_cast<std::uint64_t>(KeyTag::vertical_edge), x, layer));
}

/// Uniform attached to an edge. The edge is open iff it falls below the
/// edge probability, so raising a probability only ever opens edges.
inline double edge_uniform(std::uint64_t seed, const EdgeId& e) noexcept
{
    const Site& a = e.first();
    const Site& b = e.second();
    if (e.kind() == EdgeKind::horizontal)
        return horizontal_uniform(seed, a.layer, a.x, b.x - a.x);
    return vertical_uniform(seed, a.x, a.layer);
}

inline bool edge_is_open(const LatticeConfig& cfg, const EdgeId& e)
{
    if (e.kind() == EdgeKind::horizontal) {
        const std::int64_t d = e.second().x - e.first().x;
        if (d < 1 || d > cfg.n)
            throw std::invalid_argument("edge_is_open: horizontal edge longer than N");
        return edge_uniform(cfg.seed, e) < cfg.p_h();
    }
    return edge_uniform(cfg.seed, e) < cfg.p_v();
}

/// Open-cluster exploration result. `generation` is the BFS depth, i.e.
/// the length of the shortest open path from the origin.
struct Cluster {
    Site origin{};
    std::unordered_map<Site, std::int64_t, SiteHash> generation;
    bool truncated = false;

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(generation.size()); }
    bool contains(const Site& s) const { return generation.contains(s); }
};

namespace detail {

inline bool in_window(const Caps& caps, std::int64_t layer) noexcept
{
    return !caps.layer_window || (layer >= caps.layer_window->first && layer <= caps.layer_window->second);
}

/// Calls visit(neighbour) for every open edge at `s`, horizontal first.
template <typename Visit>
void for_each_open_neighbour(const LatticeConfig& cfg, double p_h, double p_v, const Site& s, Visit&& visit)
{
    if (p_h > 0.0) {
        for (std::int64_t d = 1; d <= cfg.n; ++d) {
            if (horizontal_uniform(cfg.seed, s.layer, s.x - d, d) < p_h)
                visit(Site{s.x - d, s.layer});
            if (horizontal_uniform(cfg.seed, s.layer, s.x, d) < p_h)
                visit(Site{s.x + d, s.layer});
        }
    }
    if (p_v > 0.0) {
        if (vertical_uniform(cfg.seed, s.x, s.layer - 1) < p_v)
            visit(Site{s.x, s.layer - 1});
        if (vertical_uniform(cfg.seed, s.x, s.layer) < p_v)
            visit(Site{s.x, s.layer + 1});
    }
}

} // namespace detail

/// Breadth-first exploration of the open cluster of `origin`. Edges are
/// queried lazily through their quenched uniforms. Layers outside
/// cfg.caps.layer_window are never entered; window {0,0} gives the
/// horizontal-only cluster.
inline Cluster explore_cluster(const LatticeConfig& cfg, const Site& origin)
{
    cfg.validate();
    const Caps& caps = cfg.caps;
    Cluster c;
    c.origin = origin;
    c.generation.emplace(origin, 0);
    if (!detail::in_window(caps, origin.layer))
        throw std::invalid_argument("explore_cluster: origin outside layer window");

    const double p_h = cfg.p_h();
    const double p_v = cfg.p_v();
    std::deque<Site> frontier{origin};
    while (!frontier.empty()) {
        const Site s = frontier.front();
        frontier.pop_front();
        const std::int64_t g = c.generation.at(s);
        bool stop = false;
        detail::for_each_open_neighbour(cfg, p_h, p_v, s, [&](const Site& t) {
            if (stop || !detail::in_window(caps, t.layer) || c.generation.contains(t))
                return;
            if (g + 1 > caps.max_generation || c.size() >= caps.max_sites) {
                c.truncated = true;
                stop = g + 1 <= caps.max_generation;
                return;
            }
            c.generation.emplace(t, g + 1);
            frontier.push_back(t);
        });
        if (stop)
            break;
    }
    return c;
}

/// Box and starting set for the crossing proxy of percolation.
struct CrossingBox {
    std::int64_t half_width = 0; ///< W: sites with |x| <= W
    std::int64_t height = 0;     ///< M: layers 0..M; success = reaching layer M
    /// Layer-0 starting sites; empty means the default equally spaced set.
    std::vector<std::int64_t> initial;
};

/// 2 floor(N^{2 alpha}) equally spaced sites in [-floor(N^{1+alpha}), floor(N^{1+alpha})].
inline std::vector<std::int64_t> equally_spaced_initial(const LatticeConfig& cfg)
{
    const auto count = 2 * static_cast<std::int64_t>(std::floor(cfg.time_scale() + 1e-9));
    const auto radius = static_cast<std::int64_t>(std::floor(cfg.space_scale() + 1e-9));
    std::vector<std::int64_t> xs;
    if (count <= 0)
        return xs;
    xs.reserve(static_cast<std::size_t>(count));
    const double span = 2.0 * static_cast<double>(radius) + 1.0;
    for (std::int64_t k = 0; k < count; ++k) {
        const auto x = -radius + static_cast<std::int64_t>(std::floor((static_cast<double>(k) + 0.5) * span / static_cast<double>(count)));
        if (xs.empty() || x != xs.back())
            xs.push_back(x);
    }
    return xs;
}

namespace detail {

inline void validate_box(const LatticeConfig& cfg, const CrossingBox& box)
{
    if (box.half_width < 2 * cfg.n)
        throw std::invalid_argument("crossing: box half-width must be at least 2N");
    if (box.height < 1)
        throw std::invalid_argument("crossing: box height must be at least 1");
}

inline std::vector<std::int64_t> starting_sites(const LatticeConfig& cfg, const CrossingBox& box)
{
    auto xs = box.initial.empty() ? equally_spaced_initial(cfg) : box.initial;
    std::erase_if(xs, [&](std::int64_t x) { return x < -box.half_width || x > box.half_width; });
    return xs;
}

} // namespace detail

/// Whether an open path inside the box joins the layer-0 starting set to
/// layer M, for the lattice realisation keyed by cfg.seed.
inline bool crosses(const LatticeConfig& cfg, const CrossingBox& box)
{
    detail::validate_box(cfg, box);
    const double p_h = cfg.p_h();
    const double p_v = cfg.p_v();
    std::unordered_map<Site, char, SiteHash> seen;
    std::deque<Site> frontier;
    for (auto x : detail::starting_sites(cfg, box)) {
        const Site s{x, 0};
        if (seen.emplace(s, 1).second)
            frontier.push_back(s);
    }
    if (box.height == 0)
        return !frontier.empty();
    while (!frontier.empty()) {
        const Site s = frontier.front();
        frontier.pop_front();
        bool done = false;
        detail::for_each_open_neighbour(cfg, p_h, p_v, s, [&](const Site& t) {
            if (done || t.layer < 0 || t.layer > box.height || t.x < -box.half_width || t.x > box.half_width)
                return;
            if (!seen.emplace(t, 1).second)
                return;
            if (t.layer == box.height) {
                done = true;
                return;
            }
            frontier.push_back(t);
        });
        if (done)
            return true;
    }
    return false;
}

/// Smallest vertical probability at which the realisation keyed by
/// cfg.seed crosses the box, with horizontal edges fixed at cfg.p_h().
/// Because vertical edges open iff their uniform is below p_v, the box is
/// crossed at p_v exactly when threshold < p_v. Returns +inf when no
/// crossing exists even with every vertical edge open.
inline double crossing_threshold(const LatticeConfig& cfg, const CrossingBox& box)
{
    detail::validate_box(cfg, box);
    const double p_h = cfg.p_h();
    using Item = std::pair<double, Site>;
    auto later = [](const Item& a, const Item& b) { return a.first > b.first; };
    std::priority_queue<Item, std::vector<Item>, decltype(later)> queue(later);
    std::unordered_map<Site, double, SiteHash> best;
    for (auto x : detail::starting_sites(cfg, box)) {
        const Site s{x, 0};
        if (best.emplace(s, 0.0).second)
            queue.emplace(0.0, s);
    }
    auto relax = [&](const Site& t, double key) {
        if (t.layer < 0 || t.layer > box.height || t.x < -box.half_width || t.x > box.half_width)
            return;
        auto [it, fresh] = best.try_emplace(t, key);
        if (!fresh) {
            if (key >= it->second)
                return;
            it->second = key;
        }
        queue.emplace(key, t);
    };
    while (!queue.empty()) {
        const auto [key, s] = queue.top();
        queue.pop();
        if (key > best.at(s))
            continue;
        if (s.layer == box.height)
            return key;
        if (p_h > 0.0) {
            for (std::int64_t d = 1; d <= cfg.n; ++d) {
                if (horizontal_uniform(cfg.seed, s.layer, s.x - d, d) < p_h)
                    relax(Site{s.x - d, s.layer}, key);
                if (horizontal_uniform(cfg.seed, s.layer, s.x, d) < p_h)
                    relax(Site{s.x + d, s.layer}, key);
            }
        }
        relax(Site{s.x, s.layer - 1}, std::max(key, vertical_uniform(cfg.seed, s.x, s.layer - 1)));
        relax(Site{s.x, s.layer + 1}, std::max(key, vertical_uniform(cfg.seed, s.x, s.layer)));
    }
    return std::numeric_limits<double>::infinity();
}

/// Lattice seed of replica r of a crossing experiment.
inline std::uint64_t crossing_replica_seed(std::uint64_t master, std::int64_t r)
{
    return replica_seed(master, static_cast<std::uint64_t>(r));
}

/// Monte Carlo crossing probability. Replica r uses the lattice keyed by
/// crossing_replica_seed(cfg.seed, r), so runs that differ only in kappa
/// or b share every edge uniform.
inline Estimate crossing_probability(const LatticeConfig& cfg, const CrossingBox& box, std::int64_t reps)
{
    if (reps < 1)
        throw std::invalid_argument("crossing_probability: reps must be at least 1");
    cfg.validate();
    detail::validate_box(cfg, box);
    std::vector<char> hit(static_cast<std::size_t>(reps), 0);
    parallel_for(reps, [&](std::int64_t r) {
        LatticeConfig c = cfg;
        c.seed = crossing_replica_seed(cfg.seed, r);
        hit[static_cast<std::size_t>(r)] = crosses(c, box) ? 1 : 0;
    });
    std::int64_t hits = 0;
    for (auto h : hit)
        hits += h;
    return proportion(hits, reps);
}

/// Per-replica crossing thresholds; the crossing probability at any p_v is
/// the fraction of thresholds below p_v.
inline std::vector<double> crossing_thresholds(const LatticeConfig& cfg, const CrossingBox& box, std::int64_t reps)
{
    if (reps < 1)
        throw std::invalid_argument("crossing_thresholds: reps must be at least 1");
    cfg.validate();
    std::vector<double> out(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](std::int64_t r) {
        LatticeConfig c = cfg;
        c.seed = crossing_replica_seed(cfg.seed, r);
        out[static_cast<std::size_t>(r)] = crossing_threshold(c, box);
    });
    return out;
}

} // namespace aperc

#endif // APERC_LATTICE_HPP
