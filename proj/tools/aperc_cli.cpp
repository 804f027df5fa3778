// aperc: experiment driver. Each subcommand runs a plan, writes CSV/SVG
// artifacts plus manifest.json into --out, and exits 0 iff every gate passes.
#include <aperc/experiments.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace aperc;

namespace {

ExperimentPlan defaults(ExperimentKind kind)
{
    ExperimentPlan p;
    p.kind = kind;
    switch (kind) {
    case ExperimentKind::kappa_scan:
    case ExperimentKind::exponent_fit:
        p.ns = {16, 64};
        p.kappas = {0, 0.5, 1, 2, 4, 8};
        p.bs = kind == ExperimentKind::exponent_fit ? std::vector<double>{0.3, 0.4, 0.5} : std::vector<double>{0.4};
        p.reps = 200;
        p.box_height = 8;
        break;
    case ExperimentKind::cluster_scaling:
        p.ns = {50, 200};
        p.reps = 1000;
        break;
    case ExperimentKind::dominating_branching:
        p.ns = {50};
        p.kappas = {0.25, 0.5, 1.0};
        p.reps = 1000;
        break;
    case ExperimentKind::spde_suite: p.reps = 2000; break;
    case ExperimentKind::renorm_suite:
        p.ps = {0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        p.rows = 100;
        p.reps = 500;
        break;
    }
    return p;
}

void print_gates(const ReportBundle& b)
{
    for (const auto& g : b.gates)
        std::printf("  [%s] %s %s\n", g.passed ? "ok" : "FAIL", g.name.c_str(), g.detail.c_str());
}

int run_one(ExperimentKind kind, const std::string& config, std::optional<std::uint64_t> seed, const std::string& out)
{
    ExperimentPlan plan = defaults(kind);
    if (!config.empty()) {
        std::ifstream in(config);
        if (!in)
            throw std::runtime_error("cannot open config " + config);
        plan = plan_from_key_values(parse_key_values(in), kind, plan);
    }
    if (seed)
        plan.seed = *seed;
    plan.validate();
    std::printf("%s: seed=%llu reps=%lld\n", to_string(kind), static_cast<unsigned long long>(plan.seed), static_cast<long long>(plan.reps));
    const auto bundle = run_plan(plan);
    emit_report({bundle}, out);
    print_gates(bundle);
    std::printf("artifacts in %s\n", out.c_str());
    return bundle.all_passed() ? 0 : 1;
}

int replay(const std::string& manifest_path, const std::string& out)
{
    std::ifstream in(manifest_path);
    if (!in)
        throw std::runtime_error("cannot open manifest " + manifest_path);
    const auto recorded = nlohmann::json::parse(in);
    std::vector<ReportBundle> bundles;
    for (const auto& plan : plans_from_manifest(recorded))
        bundles.push_back(run_plan(plan));
    emit_report(bundles, out);
    const auto now = manifest(bundles);
    bool same = true, gates = true;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const auto& was = recorded.at("experiments").at(i).at("files");
        const auto& is = now.at("experiments").at(i).at("files");
        const bool match = was == is;
        same = same && match;
        gates = gates && bundles[i].all_passed();
        std::printf("%s: artifacts %s\n", to_string(bundles[i].plan.kind), match ? "identical" : "DIFFER");
        print_gates(bundles[i]);
    }
    if (recorded.value("version", "") != kVersion)
        std::printf("note: manifest written by version %s, replayed with %s\n", recorded.value("version", "?").c_str(), kVersion);
    return same && gates ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"aperc: long-range percolation experiments"};
    app.require_subcommand(1);
    std::string config, out = "aperc_out", manifest_path;
    std::optional<std::uint64_t> seed;
    bool fit = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "key = value plan file")->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "master seed (overrides the config)")->envname("APERC_SEED");
    };
    auto* scan = app.add_subcommand("scan", "crossing probability over (N, b, kappa)");
    scan->add_flag("--fit", fit, "also fit the half-crossing exponent");
    common(scan);
    auto* cluster = app.add_subcommand("cluster", "cumulative cluster size scaling");
    common(cluster);
    auto* branching = app.add_subcommand("branching", "dominating branching process");
    common(branching);
    auto* spde = app.add_subcommand("spde", "SPDE solver checks");
    common(spde);
    auto* renorm = app.add_subcommand("renorm", "oriented percolation comparison");
    common(renorm);
    auto* report = app.add_subcommand("report", "replay a manifest and compare artifact hashes");
    report->add_option("manifest", manifest_path, "manifest.json to replay")->required()->check(CLI::ExistingFile);
    report->add_option("--out", out, "output directory for the replay")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*report)
            return replay(manifest_path, out);
        ExperimentKind kind = ExperimentKind::kappa_scan;
        if (*scan)
            kind = fit ? ExperimentKind::exponent_fit : ExperimentKind::kappa_scan;
        else if (*cluster)
            kind = ExperimentKind::cluster_scaling;
        else if (*branching)
            kind = ExperimentKind::dominating_branching;
        else if (*spde)
            kind = ExperimentKind::spde_suite;
        else if (*renorm)
            kind = ExperimentKind::renorm_suite;
        return run_one(kind, config, seed, out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
