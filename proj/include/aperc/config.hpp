#ifndef APERC_CONFIG_HPP
#define APERC_CONFIG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace aperc {

/// Limits on cluster exploration. Hitting one sets Cluster::truncated.
struct Caps {
    std::int64_t max_sites = 10'000'000;
    std::int64_t max_generation = 1'000'000;
    /// Inclusive layer range; nullopt means unrestricted.
    std::optional<std::pair<std::int64_t, std::int64_t>> layer_window;
};

/// Model parameters and the scales derived from them.
///
/// Horizontal edges have range `n` and open with probability 1/(2n);
/// vertical edges open with probability min(1, kappa * n^-b). The
/// overrides exist for degenerate test configurations only.
struct LatticeConfig {
    std::int64_t n = 16;
    double alpha = 0.2;
    double b = 0.4;
    double kappa = 1.0;
    std::uint64_t seed = 0;
    Caps caps{};
    std::optional<double> p_h_override;
    std::optional<double> p_v_override;

    double p_h() const { return p_h_override.value_or(1.0 / (2.0 * static_cast<double>(n))); }

    double p_v() const
    {
        if (p_v_override)
            return *p_v_override;
        return std::min(1.0, kappa * std::pow(static_cast<double>(n), -b));
    }

    /// N^(1+alpha): unscaled sites per unit of scaled space.
    double space_scale() const { return std::pow(static_cast<double>(n), 1.0 + alpha); }
    /// N^(2 alpha): steps per unit of scaled time.
    double time_scale() const { return std::pow(static_cast<double>(n), 2.0 * alpha); }

    void validate() const
    {
        if (n < 1)
            throw std::invalid_argument("LatticeConfig: n must be positive");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("LatticeConfig: alpha must lie in (0,1)");
        if (!(b > 0.0))
            throw std::invalid_argument("LatticeConfig: b must be positive");
        if (!(kappa >= 0.0) || !std::isfinite(kappa))
            throw std::invalid_argument("LatticeConfig: kappa must be a finite nonnegative number");
        const double ph = p_h();
        const double pv = p_v();
        if (!(ph >= 0.0 && ph <= 1.0) || !(pv >= 0.0 && pv <= 1.0))
            throw std::invalid_argument("LatticeConfig: edge probabilities must lie in [0,1]");
        if (caps.max_sites < 1 || caps.max_generation < 1)
            throw std::invalid_argument("LatticeConfig: caps must be positive");
    }
};

/// Parses "0.2", "1/5", "-3" and so on.
inline double parse_rational(const std::string& text)
{
    const auto slash = text.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
        const double v = std::stod(text, &used);
        if (used != text.size())
            throw std::invalid_argument("trailing characters in number '" + text + "'");
        return v;
    }
    const std::string num = text.substr(0, slash);
    const std::string den = text.substr(slash + 1);
    const double d = parse_rational(den);
    if (d == 0.0)
        throw std::invalid_argument("zero denominator in '" + text + "'");
    return parse_rational(num) / d;
}

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

} // namespace detail

/// Flat `key = value` map; '#' starts a comment. Keys are lower-cased.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in)
{
    KeyValues kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        kv[key] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

/// Applies the recognised keys of `kv` on top of `base`.
/// Schema: n, alpha, b, kappa, seed, max_sites, max_generation,
/// layer_min, layer_max, p_h, p_v. Unknown keys are ignored so one file can
/// also carry experiment settings.
inline LatticeConfig lattice_from_key_values(const KeyValues& kv, LatticeConfig base = {})
{
    auto get = [&](const char* k) -> const std::string* {
        const auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("n"))
        base.n = std::stoll(*v);
    if (auto v = get("alpha"))
        base.alpha = parse_rational(*v);
    if (auto v = get("b"))
        base.b = parse_rational(*v);
    if (auto v = get("kappa"))
        base.kappa = parse_rational(*v);
    if (auto v = get("seed"))
        base.seed = std::stoull(*v, nullptr, 0);
    if (auto v = get("max_sites"))
        base.caps.max_sites = static_cast<std::int64_t>(parse_rational(*v));
    if (auto v = get("max_generation"))
        base.caps.max_generation = static_cast<std::int64_t>(parse_rational(*v));
    const auto* lo = get("layer_min");
    const auto* hi = get("layer_max");
    if (lo || hi) {
        if (!lo || !hi)
            throw std::invalid_argument("config: layer_min and layer_max must be given together");
        base.caps.layer_window = std::pair{std::stoll(*lo), std::stoll(*hi)};
    }
    if (auto v = get("p_h"))
        base.p_h_override = parse_rational(*v);
    if (auto v = get("p_v"))
        base.p_v_override = parse_rational(*v);
    base.validate();
    return base;
}

inline LatticeConfig load_lattice_config(const std::string& path, LatticeConfig base = {})
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file '" + path + "'");
    return lattice_from_key_values(parse_key_values(in), base);
}

} // namespace aperc

#endif // APERC_CONFIG_HPP
