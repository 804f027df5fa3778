#ifndef APERC_EXPERIMENTS_HPP
#define APERC_EXPERIMENTS_HPP

#include "config.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "renormalization.hpp"
#include "spde.hpp"
#include "stats.hpp"
#include "true_process.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aperc {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { kappa_scan, exponent_fit, cluster_scaling, dominating_branching, spde_suite, renorm_suite };

inline const char* to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::kappa_scan: return "kappa_scan";
    case ExperimentKind::exponent_fit: return "exponent_fit";
    case ExperimentKind::cluster_scaling: return "cluster_scaling";
    case ExperimentKind::dominating_branching: return "dominating_branching";
    case ExperimentKind::spde_suite: return "spde_suite";
    case ExperimentKind::renorm_suite: return "renorm_suite";
    }
    return "?";
}

inline ExperimentKind kind_from_string(const std::string& s)
{
    for (auto k : {ExperimentKind::kappa_scan, ExperimentKind::exponent_fit, ExperimentKind::cluster_scaling,
             ExperimentKind::dominating_branching, ExperimentKind::spde_suite, ExperimentKind::renorm_suite})
        if (s == to_string(k))
            return k;
    throw std::invalid_argument("unknown experiment kind '" + s + "'");
}

/// Everything needed to replay an experiment bit for bit.
struct ExperimentPlan {
    ExperimentKind kind = ExperimentKind::kappa_scan;
    std::vector<std::int64_t> ns;
    std::vector<double> kappas;
    std::vector<double> bs;
    std::vector<double> ps; // oriented-percolation densities (renorm suite)
    std::int64_t reps = 100;
    std::uint64_t seed = 1;
    double alpha = 0.2;
    std::int64_t box_height = 32; // crossing box: layers 0..M
    double box_width = 2.0; // half-width in units of N^(1+alpha)
    std::int64_t rows = 200; // oriented survival depth
    std::int64_t cluster_cap = 10'000'000;
    std::int64_t generations = 1000; // dominating branching cap

    void validate() const
    {
        if (reps < 1)
            throw std::invalid_argument("plan: reps must be positive");
        for (auto n : ns)
            if (n < 1)
                throw std::invalid_argument("plan: N must be positive");
        for (auto k : kappas)
            if (!(k >= 0.0) || !std::isfinite(k))
                throw std::invalid_argument("plan: kappa must be finite and nonnegative");
        for (auto b : bs)
            if (!(b > 0.0))
                throw std::invalid_argument("plan: b must be positive");
        for (auto p : ps)
            if (!(p >= 0.0 && p <= 1.0))
                throw std::invalid_argument("plan: p must lie in [0,1]");
        if (box_height < 1 || !(box_width > 0.0) || rows < 1 || cluster_cap < 1 || generations < 1)
            throw std::invalid_argument("plan: geometry and caps must be positive");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("plan: alpha must lie in (0,1)");
    }
};

inline void to_json(nlohmann::json& j, const ExperimentPlan& p)
{
    j = nlohmann::json{{"kind", to_string(p.kind)}, {"ns", p.ns}, {"kappas", p.kappas}, {"bs", p.bs}, {"ps", p.ps},
        {"reps", p.reps}, {"seed", p.seed}, {"alpha", p.alpha}, {"box_height", p.box_height}, {"box_width", p.box_width},
        {"rows", p.rows}, {"cluster_cap", p.cluster_cap}, {"generations", p.generations}};
}

inline void from_json(const nlohmann::json& j, ExperimentPlan& p)
{
    p = ExperimentPlan{};
    p.kind = kind_from_string(j.at("kind").get<std::string>());
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key))
            j.at(key).get_to(field);
    };
    opt("ns", p.ns);
    opt("kappas", p.kappas);
    opt("bs", p.bs);
    opt("ps", p.ps);
    opt("reps", p.reps);
    opt("seed", p.seed);
    opt("alpha", p.alpha);
    opt("box_height", p.box_height);
    opt("box_width", p.box_width);
    opt("rows", p.rows);
    opt("cluster_cap", p.cluster_cap);
    opt("generations", p.generations);
    p.validate();
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

} // namespace detail

/// Reads plan keys from a key-value config: ns, kappas, bs, ps (comma lists),
/// reps, seed, alpha, box_height, box_width, rows, cluster_cap, generations.
/// A plain `n`/`kappa`/`b` also works as a one-element list.
inline ExperimentPlan plan_from_key_values(const KeyValues& kv, ExperimentKind kind, ExperimentPlan base = {})
{
    base.kind = kind;
    auto get = [&](const char* k) -> const std::string* {
        const auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto reals = [&](const char* many, const char* one, std::vector<double>& field) {
        if (auto v = get(many)) {
            field.clear();
            for (const auto& s : detail::split_list(*v))
                field.push_back(parse_rational(s));
        } else if (auto w = one ? get(one) : nullptr) {
            field = {parse_rational(*w)};
        }
    };
    if (auto v = get("ns")) {
        base.ns.clear();
        for (const auto& s : detail::split_list(*v))
            base.ns.push_back(std::stoll(s));
    } else if (auto w = get("n")) {
        base.ns = {std::stoll(*w)};
    }
    reals("kappas", "kappa", base.kappas);
    reals("bs", "b", base.bs);
    reals("ps", nullptr, base.ps);
    if (auto v = get("reps"))
        base.reps = static_cast<std::int64_t>(parse_rational(*v));
    if (auto v = get("seed"))
        base.seed = std::stoull(*v, nullptr, 0);
    if (auto v = get("alpha"))
        base.alpha = parse_rational(*v);
    if (auto v = get("box_height"))
        base.box_height = std::stoll(*v);
    if (auto v = get("box_width"))
        base.box_width = parse_rational(*v);
    if (auto v = get("rows"))
        base.rows = std::stoll(*v);
    if (auto v = get("cluster_cap"))
        base.cluster_cap = static_cast<std::int64_t>(parse_rational(*v));
    if (auto v = get("generations"))
        base.generations = std::stoll(*v);
    base.validate();
    return base;
}

// ---------------------------------------------------------------------------
// Formatting

/// Fixed, locale-independent number formatting so CSVs are byte-stable.
inline std::string fmt(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string fmt(std::int64_t v) { return std::to_string(v); }

struct Gate {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Named text artifacts plus invariant gates.
struct ReportBundle {
    ExperimentPlan plan;
    std::map<std::string, std::string> files; // name -> content, ordered by name
    std::vector<Gate> gates;

    bool all_passed() const
    {
        return std::all_of(gates.begin(), gates.end(), [](const Gate& g) { return g.passed; });
    }
};

struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal SVG line chart; optional log10 axes.
inline std::string svg_line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
    const std::vector<SvgSeries>& series, bool log_x = false, bool log_y = false)
{
    const double w = 640, h = 420, ml = 70, mr = 150, mt = 40, mb = 50;
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            const double a = tx(s.x[i]);
            const double b = ty(s.y[i]);
            if (!std::isfinite(a) || !std::isfinite(b))
                continue;
            x0 = std::min(x0, a);
            x1 = std::max(x1, a);
            y0 = std::min(y0, b);
            y1 = std::max(y1, b);
        }
    if (!std::isfinite(x0)) {
        x0 = 0;
        x1 = 1;
        y0 = 0;
        y1 = 1;
    }
    if (x1 == x0)
        x1 = x0 + 1;
    if (y1 == y0)
        y1 = y0 + 1;
    auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (w - ml - mr); };
    auto py = [&](double v) { return h - mb - (ty(v) - y0) / (y1 - y0) * (h - mt - mb); };
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h) << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << fmt(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    o << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(h - mb) << "\" x2=\"" << fmt(w - mr) << "\" y2=\"" << fmt(h - mb)
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml) << "\" y2=\"" << fmt(h - mb)
      << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fx = x0 + (x1 - x0) * t / 4.0;
        const double fy = y0 + (y1 - y0) * t / 4.0;
        const double sx = ml + (w - ml - mr) * t / 4.0;
        const double sy = h - mb - (h - mt - mb) * t / 4.0;
        o << "<text x=\"" << fmt(sx) << "\" y=\"" << fmt(h - mb + 16) << "\" text-anchor=\"middle\" font-size=\"11\">"
          << fmt(log_x ? std::pow(10.0, fx) : fx) << "</text>\n";
        o << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(sy + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
          << fmt(log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    }
    o << "<text x=\"" << fmt((ml + w - mr) / 2) << "\" y=\"" << fmt(h - 12) << "\" text-anchor=\"middle\" font-size=\"12\">"
      << xlabel << "</text>\n";
    o << "<text x=\"16\" y=\"" << fmt((mt + h - mb) / 2) << "\" font-size=\"12\" transform=\"rotate(-90 16 "
      << fmt((mt + h - mb) / 2) << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* c = colours[s % 8];
        std::ostringstream pts;
        for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
            if (!std::isfinite(tx(series[s].x[i])) || !std::isfinite(ty(series[s].y[i])))
                continue;
            pts << fmt(px(series[s].x[i])) << "," << fmt(py(series[s].y[i])) << " ";
        }
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.8\" points=\"" << pts.str() << "\"/>\n";
        o << "<text x=\"" << fmt(w - mr + 10) << "\" y=\"" << fmt(mt + 16 * static_cast<double>(s) + 10) << "\" font-size=\"11\" fill=\""
          << c << "\">" << series[s].label << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

// ---------------------------------------------------------------------------
// Kappa scan and exponent trend

struct KappaScanCell {
    std::int64_t n = 0;
    double b = 0.0;
    double kappa = 0.0;
    Estimate crossing;
    std::string error; // non-empty if the cell failed
};

/// Half-crossing point kappa_hat(N, b): the kappa at which the crossing
/// probability reaches 1/2, with an order-statistic 95% band.
struct HalfCrossing {
    std::int64_t n = 0;
    double b = 0.0;
    double kappa_hat = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t reps = 0;
};

struct KappaScanResult {
    std::vector<KappaScanCell> cells;
    std::vector<HalfCrossing> half;
};

inline CrossingBox plan_box(const ExperimentPlan& plan, const LatticeConfig& cfg)
{
    CrossingBox box;
    box.height = plan.box_height;
    box.half_width = std::max<std::int64_t>(2 * cfg.n, static_cast<std::int64_t>(std::floor(plan.box_width * cfg.space_scale())));
    return box;
}

/// Crossing probability over the (N, b, kappa) grid. One set of replica
/// lattices per N (seeded by plan.seed) serves every (b, kappa): each
/// replica's crossing threshold p* is computed once, and the box is crossed
/// at p_v iff p* < p_v. Estimates are therefore exactly paired across b and
/// kappa and monotone in kappa.
inline KappaScanResult run_kappa_scan(const ExperimentPlan& plan)
{
    plan.validate();
    KappaScanResult out;
    for (auto n : plan.ns) {
        LatticeConfig cfg;
        cfg.n = n;
        cfg.alpha = plan.alpha;
        cfg.seed = plan.seed;
        std::vector<double> th;
        std::string error;
        try {
            th = crossing_thresholds(cfg, plan_box(plan, cfg), plan.reps);
        } catch (const std::exception& e) {
            error = e.what();
        }
        std::sort(th.begin(), th.end());
        for (double b : plan.bs) {
            const double scale = std::pow(static_cast<double>(n), b);
            for (double kappa : plan.kappas) {
                KappaScanCell c{n, b, kappa, {}, error};
                if (error.empty()) {
                    const double pv = std::min(1.0, kappa / scale);
                    const auto hits = std::lower_bound(th.begin(), th.end(), pv) - th.begin();
                    c.crossing = proportion(hits, plan.reps);
                }
                out.cells.push_back(c);
            }
            if (error.empty()) {
                const auto r = static_cast<std::int64_t>(th.size());
                const double half_width = 1.96 * std::sqrt(static_cast<double>(r)) / 2.0;
                auto at = [&](double idx) {
                    const auto i = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(idx)), 0, r - 1);
                    return th[static_cast<std::size_t>(i)] * scale;
                };
                // Median of p*: the crossing probability at p_v is the
                // fraction of thresholds below p_v.
                const double med = r % 2 ? at(static_cast<double>(r / 2)) : 0.5 * (at(static_cast<double>(r / 2 - 1)) + at(static_cast<double>(r / 2)));
                out.half.push_back({n, b, med, at(static_cast<double>(r) / 2.0 - half_width), at(static_cast<double>(r) / 2.0 + half_width), r});
            }
        }
    }
    return out;
}

inline std::string kappa_scan_csv(const KappaScanResult& r)
{
    std::ostringstream o;
    o << "n,b,kappa,estimate,stderr,reps,error\n";
    for (const auto& c : r.cells)
        o << c.n << "," << fmt(c.b) << "," << fmt(c.kappa) << "," << fmt(c.crossing.value) << "," << fmt(c.crossing.stderr_) << ","
          << c.crossing.reps << "," << c.error << "\n";
    return o.str();
}

inline std::string half_crossing_csv(const KappaScanResult& r)
{
    std::ostringstream o;
    o << "n,b,kappa_hat,lo95,hi95,reps\n";
    for (const auto& h : r.half)
        o << h.n << "," << fmt(h.b) << "," << fmt(h.kappa_hat) << "," << fmt(h.lo) << "," << fmt(h.hi) << "," << h.reps << "\n";
    return o.str();
}

/// Trend of kappa_hat(N) for one b.
struct ExponentTrend {
    double b = 0.0;
    std::vector<std::int64_t> ns;
    std::vector<double> kappa_hat;
    double spread = 0.0; // max / min
    bool increasing = false;
    bool decreasing = false;
    LinearFit fit; // log kappa_hat vs log N
};

inline std::vector<ExponentTrend> exponent_trends(const KappaScanResult& r)
{
    std::map<double, ExponentTrend> by_b;
    for (const auto& h : r.half) {
        auto& t = by_b[h.b];
        t.b = h.b;
        t.ns.push_back(h.n);
        t.kappa_hat.push_back(h.kappa_hat);
    }
    std::vector<ExponentTrend> out;
    for (auto& [b, t] : by_b) {
        const auto mm = std::minmax_element(t.kappa_hat.begin(), t.kappa_hat.end());
        t.spread = *mm.first > 0.0 ? *mm.second / *mm.first : INFINITY;
        t.increasing = t.decreasing = t.kappa_hat.size() >= 2;
        for (std::size_t i = 1; i < t.kappa_hat.size(); ++i) {
            t.increasing = t.increasing && t.kappa_hat[i] > t.kappa_hat[i - 1];
            t.decreasing = t.decreasing && t.kappa_hat[i] < t.kappa_hat[i - 1];
        }
        if (t.ns.size() >= 2) {
            std::vector<double> x, y, w;
            for (std::size_t i = 0; i < t.ns.size(); ++i) {
                x.push_back(std::log(static_cast<double>(t.ns[i])));
                y.push_back(std::log(t.kappa_hat[i]));
                w.push_back(1.0);
            }
            t.fit = weighted_fit(x, y, w);
        }
        out.push_back(t);
    }
    return out;
}

/// Gate of the exponent trend: spread <= 2 at b = 2/5, increasing for
/// b > 2/5, decreasing for b < 2/5.
inline Gate exponent_gate(const std::vector<ExponentTrend>& trends)
{
    Gate g{"exponent_trend", true, ""};
    std::ostringstream d;
    for (const auto& t : trends) {
        bool ok = true;
        if (std::abs(t.b - 0.4) < 1e-9)
            ok = t.spread <= 2.0;
        else if (t.b > 0.4)
            ok = t.increasing;
        else
            ok = t.decreasing;
        d << "b=" << fmt(t.b) << ": kappa_hat=";
        for (std::size_t i = 0; i < t.kappa_hat.size(); ++i)
            d << (i ? "/" : "") << fmt(t.kappa_hat[i]);
        d << " spread=" << fmt(t.spread) << (ok ? " ok; " : " FAIL; ");
        g.passed = g.passed && ok;
    }
    g.detail = d.str();
    return g;
}

// ---------------------------------------------------------------------------
// Dominating branching process

struct BranchingResult {
    Estimate extinction; // fraction extinct within the generation cap
    std::int64_t capped = 0; // runs stopped by the generation or mass cap
    Estimate mean_offspring; // per-individual offspring of Z
    double predicted_mean = 0.0; // 2 p_v mean(sample)
    double criterion = 0.0; // 2 kappa L_hat; equals predicted_mean at b = 2/5
    std::vector<std::int64_t> z1; // Z_1 per replica
};

/// Z_0 = 1, Z_{m+1} = sum_{i <= Z_m} Binomial(2 S_i, p_v) with S_i drawn
/// uniformly from `sizes` (an empirical sampler of |C|). Runs stop at
/// extinction, after `generations`, or when Z exceeds `mass_cap`.
inline BranchingResult run_dominating_branching(const LatticeConfig& cfg, const std::vector<std::int64_t>& sizes, double l_hat,
    std::int64_t reps, std::int64_t generations = 1000, std::int64_t mass_cap = 1'000'000)
{
    if (sizes.empty() || reps < 1 || generations < 1)
        throw std::invalid_argument("run_dominating_branching: need a size sample, reps and generations");
    cfg.validate();
    const double pv = cfg.p_v();
    BranchingResult out;
    out.criterion = 2.0 * cfg.kappa * l_hat;
    double mean_size = 0.0;
    for (auto s : sizes)
        mean_size += static_cast<double>(s);
    mean_size /= static_cast<double>(sizes.size());
    out.predicted_mean = 2.0 * pv * mean_size;
    std::vector<char> extinct(static_cast<std::size_t>(reps), 0), capped(static_cast<std::size_t>(reps), 0);
    std::vector<RunningStats> offspring(static_cast<std::size_t>(reps));
    out.z1.assign(static_cast<std::size_t>(reps), 0);
    parallel_for(reps, [&](std::int64_t r) {
        Stream rng(hash_key(cfg.seed, static_cast<std::uint64_t>(KeyTag::replica), 0x4252ULL, r));
        std::int64_t z = 1;
        for (std::int64_t m = 0; m < generations && z > 0 && z <= mass_cap; ++m) {
            std::int64_t next = 0;
            for (std::int64_t i = 0; i < z; ++i) {
                const std::int64_t s = sizes[rng.below(sizes.size())];
                std::binomial_distribution<std::int64_t> law(2 * s, pv);
                const std::int64_t k = law(rng);
                offspring[static_cast<std::size_t>(r)].add(static_cast<double>(k));
                next += k;
            }
            z = next;
            if (m == 0)
                out.z1[static_cast<std::size_t>(r)] = z;
        }
        extinct[static_cast<std::size_t>(r)] = z == 0 ? 1 : 0;
        capped[static_cast<std::size_t>(r)] = z == 0 ? 0 : 1;
    });
    std::int64_t ext = 0;
    RunningStats all;
    for (std::int64_t r = 0; r < reps; ++r) {
        ext += extinct[static_cast<std::size_t>(r)];
        out.capped += capped[static_cast<std::size_t>(r)];
        all.merge(offspring[static_cast<std::size_t>(r)]);
    }
    out.extinction = proportion(ext, reps);
    out.mean_offspring = {all.mean(), all.stderr_mean(), all.count()};
    return out;
}

// ---------------------------------------------------------------------------
// Plan execution

namespace detail {

inline Gate gate(std::string name, bool ok, std::string detail) { return Gate{std::move(name), ok, std::move(detail)}; }

inline void kappa_scan_bundle(ReportBundle& out, bool fit)
{
    const auto& plan = out.plan;
    const KappaScanResult r = run_kappa_scan(plan);
    out.files["kappa_scan.csv"] = kappa_scan_csv(r);
    out.files["half_crossing.csv"] = half_crossing_csv(r);
    std::vector<SvgSeries> series;
    for (const auto& c : r.cells) {
        const std::string label = "N=" + fmt(c.n) + " b=" + fmt(c.b);
        if (series.empty() || series.back().label != label)
            series.push_back({label, {}, {}});
        series.back().x.push_back(c.kappa);
        series.back().y.push_back(c.crossing.value);
    }
    out.files["kappa_scan.svg"] = svg_line_chart("Crossing probability", "kappa", "P(cross)", series);

    bool monotone = true, zero_ok = true, errors = false;
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const auto& c = r.cells[i];
        errors = errors || !c.error.empty();
        if (c.kappa == 0.0 && c.crossing.value != 0.0)
            zero_ok = false;
        for (std::size_t j = 0; j < r.cells.size(); ++j) {
            const auto& d = r.cells[j];
            if (d.n == c.n && d.b == c.b && d.kappa > c.kappa && d.crossing.value < c.crossing.value)
                monotone = false;
        }
    }
    out.gates.push_back(gate("cells_completed", !errors, errors ? "some cells failed; see error column" : "all cells ran"));
    out.gates.push_back(gate("monotone_in_kappa", monotone, "paired thresholds"));
    out.gates.push_back(gate("kappa_zero_never_crosses", zero_ok, ""));
    if (fit) {
        const auto trends = exponent_trends(r);
        std::ostringstream o;
        o << "b,slope,slope_stderr,spread,increasing,decreasing\n";
        std::vector<SvgSeries> s;
        for (const auto& t : trends) {
            o << fmt(t.b) << "," << fmt(t.fit.slope) << "," << fmt(t.fit.slope_stderr) << "," << fmt(t.spread) << "," << t.increasing << ","
              << t.decreasing << "\n";
            std::vector<double> xs(t.ns.begin(), t.ns.end());
            s.push_back({"b=" + fmt(t.b), xs, t.kappa_hat});
        }
        out.files["exponent_fit.csv"] = o.str();
        out.files["exponent_fit.svg"] = svg_line_chart("Half-crossing kappa_hat(N)", "N", "kappa_hat", s, true, true);
        out.gates.push_back(exponent_gate(trends));
    }
}

inline void cluster_bundle(ReportBundle& out)
{
    const auto& plan = out.plan;
    std::ostringstream o;
    o << "n,mean,stderr,normalized,capped,reps\n";
    std::vector<double> xs, ys;
    bool reliable = true;
    for (auto n : plan.ns) {
        LatticeConfig cfg;
        cfg.n = n;
        cfg.alpha = plan.alpha;
        cfg.seed = plan.seed;
        const auto s = cumulative_cluster_size(cfg, plan.cluster_cap, plan.reps);
        reliable = reliable && !s.unreliable();
        o << n << "," << fmt(s.mean) << "," << fmt(s.stderr_) << "," << fmt(s.normalized) << "," << s.capped << "," << plan.reps << "\n";
        xs.push_back(static_cast<double>(n));
        ys.push_back(s.normalized);
    }
    out.files["cluster_scaling.csv"] = o.str();
    out.files["cluster_scaling.svg"] = svg_line_chart("mean |C| / N^(2/5)", "N", "normalized mean", {{"true process", xs, ys}}, true);
    out.gates.push_back(gate("cluster_cap_below_1pct", reliable, ""));
    if (!ys.empty()) {
        const auto mm = std::minmax_element(ys.begin(), ys.end());
        const double spread = *mm.second / *mm.first;
        out.gates.push_back(gate("cluster_scaling_within_3x", spread <= 3.0, "spread=" + fmt(spread)));
    }
}

inline void branching_bundle(ReportBundle& out)
{
    const auto& plan = out.plan;
    std::ostringstream o;
    o << "n,kappa,b,l_hat,criterion,extinction,extinction_stderr,capped,mean_offspring,mean_offspring_stderr,predicted_mean,reps\n";
    bool wald = true, subcritical = true;
    for (auto n : plan.ns) {
        LatticeConfig cfg;
        cfg.n = n;
        cfg.alpha = plan.alpha;
        cfg.seed = plan.seed;
        const auto sample = cumulative_cluster_size(cfg, plan.cluster_cap, plan.reps);
        const double l_hat = sample.normalized;
        for (double b : plan.bs.empty() ? std::vector<double>{0.4} : plan.bs)
            for (double kappa : plan.kappas) {
                LatticeConfig c = cfg;
                c.kappa = kappa;
                c.b = b;
                const auto r = run_dominating_branching(c, sample.sizes, l_hat, plan.reps, plan.generations);
                o << n << "," << fmt(kappa) << "," << fmt(b) << "," << fmt(l_hat) << "," << fmt(r.criterion) << "," << fmt(r.extinction.value)
                  << "," << fmt(r.extinction.stderr_) << "," << r.capped << "," << fmt(r.mean_offspring.value) << ","
                  << fmt(r.mean_offspring.stderr_) << "," << fmt(r.predicted_mean) << "," << plan.reps << "\n";
                if (r.mean_offspring.stderr_ > 0.0)
                    wald = wald && std::abs(r.mean_offspring.value - r.predicted_mean) <= 4.0 * r.mean_offspring.stderr_;
                else
                    wald = wald && std::abs(r.mean_offspring.value - r.predicted_mean) <= 1e-12 + 1e-9 * r.predicted_mean;
                if (r.predicted_mean <= 0.5)
                    subcritical = subcritical && r.extinction.value >= 0.99;
            }
    }
    out.files["dominating_branching.csv"] = o.str();
    out.gates.push_back(gate("wald_mean_offspring", wald, "measured vs 2 p_v mean|C| within 4 SE"));
    out.gates.push_back(gate("subcritical_extinction", subcritical, "extinction >= 0.99 when mean offspring <= 1/2"));
}

inline void spde_bundle(ReportBundle& out)
{
    const auto& plan = out.plan;
    const std::int64_t reps = plan.reps;
    std::ostringstream o;
    o << "check,value,stderr,target,reps\n";
    SpdeConfig cfg;
    cfg.half_width = 6.0;
    cfg.dx = 0.05;
    cfg.dt = 1e-3;
    const auto bump = [](double x) { return std::abs(x) < 1.0 ? 1.0 : 0.0; };
    // X_0 is the grid mass of the initial profile, so the targets are exact
    // for the discretised process.
    const double x0 = make_state(cfg, bump).total_mass(cfg.dx);
    const double t = 0.5;
    const auto mm = total_mass_moments(cfg, bump, t, reps, plan.seed);
    o << "mass_mean," << fmt(mm.mean) << "," << fmt(mm.mean_se) << "," << fmt(x0) << "," << reps << "\n";
    o << "mass_variance," << fmt(mm.variance) << "," << fmt(mm.variance_se) << "," << fmt(x0 * t) << "," << reps << "\n";
    out.gates.push_back(gate("feller_mean", std::abs(mm.mean - x0) <= 3.0 * mm.mean_se + 1e-12, "E X_t = X_0"));
    out.gates.push_back(gate("feller_variance", std::abs(mm.variance / (x0 * t) - 1.0) <= 0.1, "Var X_t = X_0 t within 10%"));
    const auto phi = [](double x) { return std::exp(-x * x); };
    const auto d = duality_check(cfg, bump, phi, 0.25, reps, plan.seed + 1);
    o << "duality," << fmt(d.monte_carlo.value) << "," << fmt(d.monte_carlo.stderr_) << "," << fmt(d.predicted) << "," << reps << "\n";
    out.gates.push_back(gate("duality", std::abs(d.monte_carlo.value - d.predicted) <= 3.0 * d.monte_carlo.stderr_ + 1e-12, ""));
    SpdeConfig small = cfg;
    small.half_width = 3.0;
    small.dx = 0.1;
    const auto g = girsanov_mean(small, bump, 0.1, reps, plan.seed + 2);
    o << "girsanov," << fmt(g.value) << "," << fmt(g.stderr_) << ",1," << reps << "\n";
    out.gates.push_back(gate("girsanov_mean_one", std::abs(g.value - 1.0) <= 3.0 * g.stderr_ + 1e-12, ""));
    out.files["spde_suite.csv"] = o.str();
}

inline void renorm_bundle(ReportBundle& out)
{
    const auto& plan = out.plan;
    std::ostringstream o;
    o << "source,p,rows,estimate,stderr,reps\n";
    std::vector<double> ps = plan.ps;
    std::sort(ps.begin(), ps.end());
    std::vector<SvgSeries> series;
    bool monotone = true, high_ok = true, low_ok = true;
    for (auto src : {OrientedSource::iid, OrientedSource::one_dependent}) {
        const char* name = src == OrientedSource::iid ? "iid" : "one_dependent";
        SvgSeries s{name, {}, {}};
        double prev = -1.0;
        for (double p : ps) {
            const auto e = oriented_survival(src, p, plan.rows, plan.reps, plan.seed);
            o << name << "," << fmt(p) << "," << plan.rows << "," << fmt(e.value) << "," << fmt(e.stderr_) << "," << plan.reps << "\n";
            s.x.push_back(p);
            s.y.push_back(e.value);
            monotone = monotone && e.value >= prev;
            prev = e.value;
            if (src == OrientedSource::iid && std::abs(p - 0.9) < 1e-12)
                high_ok = e.value >= 0.5;
            if (src == OrientedSource::iid && std::abs(p - 0.4) < 1e-12)
                low_ok = e.value <= 0.01;
        }
        series.push_back(std::move(s));
    }
    out.files["oriented_survival.csv"] = o.str();
    out.files["oriented_survival.svg"] = svg_line_chart("Oriented survival to row " + fmt(plan.rows), "p", "P(survive)", series);
    out.gates.push_back(gate("survival_monotone_in_p", monotone, "shared uniforms"));
    out.gates.push_back(gate("iid_supercritical_at_0.9", high_ok, ""));
    out.gates.push_back(gate("iid_subcritical_at_0.4", low_ok, ""));
}

} // namespace detail

/// Runs a plan and returns its artifacts. Pure function of the plan.
inline ReportBundle run_plan(const ExperimentPlan& plan)
{
    plan.validate();
    ReportBundle out;
    out.plan = plan;
    switch (plan.kind) {
    case ExperimentKind::kappa_scan: detail::kappa_scan_bundle(out, false); break;
    case ExperimentKind::exponent_fit: detail::kappa_scan_bundle(out, true); break;
    case ExperimentKind::cluster_scaling: detail::cluster_bundle(out); break;
    case ExperimentKind::dominating_branching: detail::branching_bundle(out); break;
    case ExperimentKind::spde_suite: detail::spde_bundle(out); break;
    case ExperimentKind::renorm_suite: detail::renorm_bundle(out); break;
    }
    return out;
}

/// FNV-1a 64 of a byte string, hex encoded; used to fingerprint artifacts.
inline std::string content_hash(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Manifest: plan, version, seeds, artifact hashes and gates.
inline nlohmann::json manifest(const std::vector<ReportBundle>& bundles)
{
    nlohmann::json m;
    m["tool"] = "aperc";
    m["version"] = kVersion;
    m["experiments"] = nlohmann::json::array();
    for (const auto& b : bundles) {
        nlohmann::json e;
        e["plan"] = b.plan;
        e["files"] = nlohmann::json::object();
        for (const auto& [name, content] : b.files)
            e["files"][name] = content_hash(content);
        e["gates"] = nlohmann::json::array();
        for (const auto& g : b.gates)
            e["gates"].push_back({{"name", g.name}, {"passed", g.passed}, {"detail", g.detail}});
        m["experiments"].push_back(std::move(e));
    }
    return m;
}

/// Writes every artifact and manifest.json into `dir` (created if needed).
/// Throws on IO failure.
inline void emit_report(const std::vector<ReportBundle>& bundles, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    auto write = [&](const std::filesystem::path& p, const std::string& content) {
        std::ofstream f(p, std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write " + p.string());
        f << content;
        if (!f)
            throw std::runtime_error("write failed for " + p.string());
    };
    for (const auto& b : bundles)
        for (const auto& [name, content] : b.files)
            write(dir / (std::string(to_string(b.plan.kind)) + "_" + name), content);
    write(dir / "manifest.json", manifest(bundles).dump(2) + "\n");
}

/// Plans recorded in a manifest, for replay.
inline std::vector<ExperimentPlan> plans_from_manifest(const nlohmann::json& m)
{
    std::vector<ExperimentPlan> out;
    for (const auto& e : m.at("experiments"))
        out.push_back(e.at("plan").get<ExperimentPlan>());
    return out;
}

} // namespace aperc

#endif // APERC_EXPERIMENTS_HPP
