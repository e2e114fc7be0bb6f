// flowlab command-line runner: train, volpres, counterexample, decompose, delta, checks.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "flowlab/checks.hpp"
#include "flowlab/config.hpp"
#include "flowlab/decomp.hpp"
#include "flowlab/flow_io.hpp"
#include "flowlab/grid_io.hpp"
#include "flowlab/reports.hpp"
#include "flowlab/svg.hpp"
#include "flowlab/trainer.hpp"
#include "flowlab/volpres.hpp"

using namespace flowlab;

namespace {

// A subcommand's table from an optional config file, with flags written over it.
struct Settings {
    Json doc = Json::object();
    Json table = Json::object();
    std::string section;

    template <typename T>
    void set(const std::string& key, const std::optional<T>& flag) {
        if (flag) table[key] = *flag;
    }
};

Settings load_settings(const std::string& path, const std::string& section,
                       std::initializer_list<const char*> keys) {
    Settings s;
    s.section = section;
    if (!path.empty()) {
        s.doc = load_config_file(path);
        if (!s.doc.is_object()) throw Error("config: top level must be a table");
        require_known_keys(s.doc, {"target", section.c_str()}, "");
        s.table = get_table(s.doc, section, "");
        require_known_keys(s.table, keys, section);
    }
    return s;
}

DensitySpec target_from(const Settings& s, const std::optional<std::string>& flag, const std::string& fallback) {
    if (flag) return resolve_target(*flag);
    if (s.doc.contains("target")) return parse_density(get_table(s.doc, "target", ""), "target");
    return resolve_target(fallback);
}

void require_positive(std::uint64_t v, const std::string& key) {
    if (v == 0) throw Error(fmt::format("config: {} must be positive", key));
}

std::string provenance(const Json& resolved, const std::string& hash) {
    Json doc = resolved;
    doc["config_hash"] = hash;
    return doc.dump(2) + "\n";
}

std::vector<std::size_t> parse_grid(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoul(part, &used);
            if (used != part.size() || v == 0) throw std::invalid_argument(part);
            out.push_back(v);
        } catch (const std::exception&) {
            throw Error(fmt::format("config: volpres.grid '{}' must look like 400x400", text));
        }
    }
    if (out.size() != 2) throw Error(fmt::format("config: volpres.grid '{}' must have two extents", text));
    return out;
}

Points latent_samples(const AnalyticDensity& target, std::size_t n, std::uint64_t seed, const std::string& flow_path) {
    Points x = target.sample(n, seed);
    if (!flow_path.empty()) load_flow(flow_path).forward_batch(x);
    return x;
}

int run_train(const std::string& config, std::optional<std::string> target_flag, std::optional<std::uint64_t> seed,
              std::optional<std::uint64_t> blocks, std::optional<std::uint64_t> samples,
              std::optional<std::uint64_t> bins, std::optional<double> damping, std::optional<std::string> trace,
              std::optional<std::string> flow_out, std::optional<std::string> svg, bool timing, bool quiet) {
    auto s = load_settings(config, "train",
                           {"samples", "bins", "blocks", "damping", "rotation_candidates", "lipschitz", "seed",
                            "resample_each_step", "kl_samples", "trace", "flow", "svg"});
    s.set("seed", seed);
    s.set("blocks", blocks);
    s.set("samples", samples);
    s.set("bins", bins);
    s.set("damping", damping);
    const std::string trace_path = trace.value_or(get_string(s.table, "trace", "trace.csv", "train"));
    const std::string flow_path = flow_out.value_or(get_string(s.table, "flow", "", "train"));
    const std::string svg_path = svg.value_or(get_string(s.table, "svg", "", "train"));
    for (const char* k : {"trace", "flow", "svg"}) s.table.erase(k);

    const auto target = target_from(s, target_flag, "ring");
    const TrainerConfig cfg = trainer_config_from_json(s.table, "train");
    const Json resolved = {{"command", "train"}, {"target", target.resolved}, {"train", trainer_config_to_json(cfg)}};
    const std::string hash = config_hash(resolved);

    OutputSet out;
    const auto result = greedy_train(target.density, cfg, [&](const TraceRecord& r) {
        if (!quiet)
            std::fprintf(stderr, "block %3zu  kl %.5f +- %.1e  delta %.2e\n", r.block, r.kl_hat, r.kl_se, r.delta_hat);
    });
    std::ostringstream csv;
    write_trace_csv(csv, result.trace, hash, timing);
    out.write(trace_path, csv.str());
    if (!flow_path.empty()) {
        Json doc = flow_to_json(result.flow);
        doc["config_hash"] = hash;
        out.write_json(flow_path, doc);
    }
    if (!svg_path.empty()) {
        Series kl{"KL estimate", {}, {}}, delta{"predicted improvement", {}, {}};
        for (const auto& r : result.trace.records) {
            kl.x.push_back(static_cast<double>(r.block));
            kl.y.push_back(r.kl_hat);
            delta.x.push_back(static_cast<double>(r.block));
            delta.y.push_back(r.delta_hat);
        }
        out.write(svg_path, svg_line_chart({kl, delta}, "greedy training", "blocks", "nats", true,
                                           "config_hash=" + hash));
    }
    out.write(provenance_path(trace_path), provenance(resolved, hash));
    out.commit();
    const auto& last = result.trace.records.back();
    std::printf("final KL %.6f +- %.2e after %zu blocks; trace %s\n", last.kl_hat, last.kl_se, last.block,
                trace_path.c_str());
    return 0;
}

int run_volpres(const std::string& config, std::optional<std::string> target_flag, std::optional<std::string> grid,
                std::optional<double> spacing, std::optional<std::string> report, std::optional<std::string> svg,
                std::optional<std::string> dump) {
    auto s = load_settings(config, "volpres", {"grid", "spacing", "report", "svg", "grid_dump"});
    s.set("grid", grid);
    s.set("spacing", spacing);
    const std::string report_path = report.value_or(get_string(s.table, "report", "bound.json", "volpres"));
    const std::string svg_path = svg.value_or(get_string(s.table, "svg", "", "volpres"));
    const std::string dump_path = dump.value_or(get_string(s.table, "grid_dump", "", "volpres"));
    const auto extents = parse_grid(get_string(s.table, "grid", "400x400", "volpres"));
    const double h = get_double(s.table, "spacing", 0.01, "volpres");
    if (!(h > 0.0)) throw Error("config: volpres.spacing must be positive");

    const auto target = target_from(s, target_flag, "bimodal");
    const Json resolved = {{"command", "volpres"},
                           {"target", target.resolved},
                           {"volpres", {{"grid", fmt::format("{}x{}", extents[0], extents[1])}, {"spacing", h}}}};
    const std::string hash = config_hash(resolved);

    std::vector<double> origin = {-0.5 * h * static_cast<double>(extents[0]), -0.5 * h * static_cast<double>(extents[1])};
    const GridDensity source = discretize(target.density, origin, {h, h}, extents);
    const auto sol = solve_volume_preserving(source);

    Json doc = bound_report_to_json(sol.report);
    if (target.density.kind() == DensityKind::box_counterexample) {
        const auto& b = target.density.box();
        doc["counterexample"] = counterexample_to_json(counterexample_bounds(b.epsilon, log_grid(1e-3, 1e3, 2001), b.plateau));
    }
    doc["modes"] = count_modes(source);
    doc["level_table"] = level_table_to_json(sol.profile.level_table());
    doc["config_hash"] = hash;

    OutputSet out;
    out.write_json(report_path, doc);
    if (!svg_path.empty()) {
        out.write(svg_path, svg_heatmap(source, "target on the grid", "config_hash=" + hash));
        GridDensity rearranged = source;
        for (std::size_t i = 0; i < source.masses.size(); ++i) rearranged.masses[sol.map.permutation[i]] = source.masses[i];
        const auto p = std::filesystem::path(svg_path);
        out.write((p.parent_path() / (p.stem().string() + "_rearranged" + p.extension().string())).string(),
                  svg_heatmap(rearranged, "radial rearrangement", "config_hash=" + hash));
    }
    if (!dump_path.empty()) {
        std::ostringstream bin;
        write_grid_binary(bin, source);
        out.write(dump_path, bin.str());
    }
    out.write(provenance_path(report_path), provenance(resolved, hash));
    out.commit();
    std::printf("lower bound %.6f  achieved %.6f  C %.6f; report %s\n", sol.report.lower_bound,
                sol.report.achieved_kl.value_or(NAN), sol.report.optimal_scale, report_path.c_str());
    return 0;
}

int run_counterexample(const std::string& config, std::optional<double> eps, std::optional<double> plateau,
                       std::optional<double> j_min, std::optional<double> j_max, std::optional<std::uint64_t> j_count,
                       std::optional<std::string> csv_path, std::optional<std::string> json_path,
                       std::optional<std::string> svg) {
    auto s = load_settings(config, "counterexample",
                           {"epsilon", "plateau", "j_min", "j_max", "j_count", "out", "json", "svg"});
    s.set("epsilon", eps);
    s.set("plateau", plateau);
    s.set("j_min", j_min);
    s.set("j_max", j_max);
    s.set("j_count", j_count);
    const std::string out_path = csv_path.value_or(get_string(s.table, "out", "counterexample.csv", "counterexample"));
    const std::string json_out = json_path.value_or(get_string(s.table, "json", "", "counterexample"));
    const std::string svg_path = svg.value_or(get_string(s.table, "svg", "", "counterexample"));
    const double e = get_double(s.table, "epsilon", 0.1, "counterexample");
    const double pl = get_double(s.table, "plateau", 0.9, "counterexample");
    const double lo = get_double(s.table, "j_min", 1e-3, "counterexample");
    const double hi = get_double(s.table, "j_max", 1e3, "counterexample");
    const auto count = get_unsigned(s.table, "j_count", 2001, "counterexample");
    if (!(lo > 0.0) || !(hi > lo)) throw Error("config: counterexample.j_min/j_max need 0 < j_min < j_max");
    if (count < 2) throw Error("config: counterexample.j_count must be at least 2");

    const Json resolved = {{"command", "counterexample"},
                           {"counterexample",
                            {{"epsilon", e}, {"plateau", pl}, {"j_min", lo}, {"j_max", hi}, {"j_count", count}}}};
    const std::string hash = config_hash(resolved);
    const auto b = counterexample_bounds(e, log_grid(lo, hi, count), pl);

    OutputSet out;
    std::ostringstream csv;
    write_counterexample_csv(csv, b, hash);
    out.write(out_path, csv.str());
    if (!json_out.empty()) {
        Json doc = counterexample_to_json(b);
        doc["config_hash"] = hash;
        out.write_json(json_out, doc);
    }
    if (!svg_path.empty()) {
        Series kl{"KL lower bound", {}, {}};
        for (const auto& r : b.sweep) {
            kl.x.push_back(std::log10(r.jacobian));
            kl.y.push_back(r.kl_bound);
        }
        out.write(svg_path, svg_line_chart({kl}, "counterexample bound", "log10 Jacobian", "nats", false,
                                           "config_hash=" + hash));
    }
    out.write(provenance_path(out_path), provenance(resolved, hash));
    out.commit();
    std::printf("case 1 bound %.6g  case 2 bound %.6g  sweep minimum %.6g; csv %s\n", b.case1_bound, b.case2_bound,
                b.sweep_minimum, out_path.c_str());
    return 0;
}

int run_decompose(const std::string& config, std::optional<std::string> target_flag, std::optional<double> angle,
                  std::optional<std::uint64_t> bins, std::optional<std::uint64_t> samples,
                  std::optional<std::uint64_t> seed, std::optional<std::uint64_t> scan,
                  std::optional<std::string> flow_flag, std::optional<std::string> out_flag) {
    auto s = load_settings(config, "decompose", {"angle", "bins", "samples", "seed", "scan", "flow", "out"});
    s.set("angle", angle);
    s.set("bins", bins);
    s.set("samples", samples);
    s.set("seed", seed);
    s.set("scan", scan);
    const std::string out_path = out_flag.value_or(get_string(s.table, "out", "decomp.json", "decompose"));
    const std::string flow_path = flow_flag.value_or(get_string(s.table, "flow", "", "decompose"));
    const double theta = get_double(s.table, "angle", 0.0, "decompose");
    const auto b = get_unsigned(s.table, "bins", 64, "decompose");
    const auto n = get_unsigned(s.table, "samples", std::uint64_t{1} << 20, "decompose");
    const auto sd = get_unsigned(s.table, "seed", 0, "decompose");
    require_positive(b, "decompose.bins");
    require_positive(n, "decompose.samples");
    DecomposeOptions options;
    options.scan_angles = get_unsigned(s.table, "scan", 12, "decompose");

    const auto target = target_from(s, target_flag, "conditional_bimodal");
    Json resolved = {{"command", "decompose"},
                     {"target", target.resolved},
                     {"decompose",
                      {{"angle", theta}, {"bins", b}, {"samples", n}, {"seed", sd}, {"scan", options.scan_angles}}}};
    if (!flow_path.empty()) resolved["decompose"]["flow"] = flow_path;
    const std::string hash = config_hash(resolved);

    Points x = target.density.sample(n, sd);
    std::vector<double> logp(x.count());
    for (std::size_t i = 0; i < x.count(); ++i) logp[i] = target.density.log_density(x.row(i));
    Estimate kl;
    if (!flow_path.empty()) {
        const Flow flow = load_flow(flow_path);
        const auto logdet = flow.forward_batch(x);
        // KL(p || p_theta) equals KL of the pushed samples to N(0, I) once log|det| is subtracted.
        for (std::size_t i = 0; i < x.count(); ++i) logp[i] -= logdet[i];
    }
    kl = kl_to_standard_normal(x, logp);
    const auto rep = decompose(x, RotationLayer::from_angle(theta), b, options);

    Json doc = decomposition_to_json(rep);
    doc["kl_total"] = {{"value", kl.value}, {"se", kl.se}};
    doc["identity_gap"] = rep.total - kl.value;
    doc["identity_se"] = rep.combined_se(kl.se);
    doc["config_hash"] = hash;
    OutputSet out;
    out.write_json(out_path, doc);
    out.write(provenance_path(out_path), provenance(resolved, hash));
    out.commit();
    std::printf("P %.5f  Jbar %.5f  Sbar %.5f  sum %.5f  KL %.5f +- %.1e; report %s\n", rep.P, rep.Jbar, rep.Sbar,
                rep.total, kl.value, kl.se, out_path.c_str());
    return 0;
}

int run_delta(const std::string& config, std::optional<std::string> target_flag, std::optional<double> angle,
              std::optional<std::uint64_t> bins, std::optional<std::uint64_t> samples,
              std::optional<std::uint64_t> seed, std::optional<std::uint64_t> candidates,
              std::optional<std::string> flow_flag, std::optional<std::string> out_flag) {
    auto s = load_settings(config, "delta", {"angle", "bins", "samples", "seed", "candidates", "flow", "out"});
    s.set("angle", angle);
    s.set("bins", bins);
    s.set("samples", samples);
    s.set("seed", seed);
    s.set("candidates", candidates);
    const std::string out_path = out_flag.value_or(get_string(s.table, "out", "", "delta"));
    const std::string flow_path = flow_flag.value_or(get_string(s.table, "flow", "", "delta"));
    const auto b = get_unsigned(s.table, "bins", 64, "delta");
    const auto n = get_unsigned(s.table, "samples", std::uint64_t{1} << 18, "delta");
    const auto sd = get_unsigned(s.table, "seed", 0, "delta");
    const auto nq = get_unsigned(s.table, "candidates", 10, "delta");
    require_positive(b, "delta.bins");
    require_positive(n, "delta.samples");
    require_positive(nq, "delta.candidates");

    const auto target = target_from(s, target_flag, "ring");
    Json resolved = {{"command", "delta"},
                     {"target", target.resolved},
                     {"delta", {{"bins", b}, {"samples", n}, {"seed", sd}, {"candidates", nq}}}};
    if (s.table.contains("angle")) resolved["delta"]["angle"] = get_double(s.table, "angle", 0.0, "delta");
    if (!flow_path.empty()) resolved["delta"]["flow"] = flow_path;
    const std::string hash = config_hash(resolved);

    const Points x = latent_samples(target.density, n, sd, flow_path);
    Json doc = {{"config_hash", hash}};
    if (s.table.contains("angle")) {
        const double theta = resolved["delta"]["angle"].get<double>();
        const auto terms = delta_affine_terms(x, RotationLayer::from_angle(theta), b);
        doc.update({{"angle", theta},
                    {"delta_hat", terms.total()},
                    {"mean_term", terms.mean_term},
                    {"variance_term", terms.variance_term}});
    } else {
        const auto choice = select_rotation(x, nq, sd, b);
        doc.update({{"angle", choice.angle},
                    {"delta_hat", choice.delta.total()},
                    {"mean_term", choice.delta.mean_term},
                    {"variance_term", choice.delta.variance_term},
                    {"candidate_angles", choice.candidate_angles},
                    {"candidate_deltas", choice.candidate_deltas}});
    }
    if (out_path.empty()) {
        std::cout << doc.dump(2) << '\n';
        return 0;
    }
    OutputSet out;
    out.write_json(out_path, doc);
    out.write(provenance_path(out_path), provenance(resolved, hash));
    out.commit();
    std::printf("delta_hat %.6g at angle %.4f; report %s\n", doc["delta_hat"].get<double>(),
                doc["angle"].get<double>(), out_path.c_str());
    return 0;
}

int run_checks_command(const std::vector<int>& only, std::optional<std::string> out_flag) {
    int failures = 0;
    const auto results = run_checks(only, [&](const CheckResult& r) {
        std::puts(format_check(r).c_str());
        std::fflush(stdout);
        if (!r.passed) ++failures;
    });
    if (out_flag) {
        Json rows = Json::array();
        for (const auto& r : results)
            rows.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
        OutputSet out;
        out.write_json(*out_flag, {{"checks", rows}, {"failures", failures}});
        out.commit();
    }
    std::printf("%zu checks, %d failed\n", results.size(), failures);
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowlab: expressivity experiments for volume-preserving and coupling flows"};
    app.require_subcommand(1);
    std::string config;
    std::optional<std::string> target, out, svg, flow;
    std::optional<std::uint64_t> seed, bins, samples;
    std::optional<double> angle;
    std::function<int()> action;

    auto* train = app.add_subcommand("train", "greedy layer-wise training of an affine coupling flow");
    std::optional<std::uint64_t> blocks;
    std::optional<double> damping;
    bool timing = false, quiet = false;
    train->add_option("--config", config, "TOML or JSON config with [target] and [train] tables");
    train->add_option("--target", target, "built-in density name or config file");
    train->add_option("--seed", seed);
    train->add_option("--blocks", blocks);
    train->add_option("--samples", samples);
    train->add_option("--bins", bins);
    train->add_option("--damping", damping);
    train->add_option("--trace", out, "trace CSV (default trace.csv)");
    train->add_option("--flow", flow, "write the fitted flow as JSON");
    train->add_option("--svg", svg, "KL curve");
    train->add_flag("--timing", timing, "record wall-clock seconds in the trace");
    train->add_flag("--quiet", quiet, "no per-block progress");
    train->callback([&] {
        action = [&] {
            return run_train(config, target, seed, blocks, samples, bins, damping, out, flow, svg, timing, quiet);
        };
    });

    auto* volpres = app.add_subcommand("volpres", "volume-preserving lower bound on a grid");
    std::optional<std::string> grid, dump;
    std::optional<double> spacing;
    volpres->add_option("--config", config);
    volpres->add_option("--target", target);
    volpres->add_option("--grid", grid, "cells per axis, e.g. 400x400");
    volpres->add_option("--spacing", spacing);
    volpres->add_option("--report", out, "bound JSON (default bound.json)");
    volpres->add_option("--svg", svg, "heatmaps of the target and its rearrangement");
    volpres->add_option("--grid-dump", dump, "binary dump of the target grid");
    volpres->callback([&] { action = [&] { return run_volpres(config, target, grid, spacing, out, svg, dump); }; });

    auto* counter = app.add_subcommand("counterexample", "lower bounds for the plateau-and-ramp target");
    std::optional<double> eps, plateau, j_min, j_max;
    std::optional<std::uint64_t> j_count;
    std::optional<std::string> json_out;
    counter->add_option("--config", config);
    counter->add_option("--epsilon", eps);
    counter->add_option("--plateau", plateau);
    counter->add_option("--j-min", j_min);
    counter->add_option("--j-max", j_max);
    counter->add_option("--j-count", j_count);
    counter->add_option("--out", out, "sweep CSV (default counterexample.csv)");
    counter->add_option("--json", json_out);
    counter->add_option("--svg", svg);
    counter->callback([&] {
        action = [&] { return run_counterexample(config, eps, plateau, j_min, j_max, j_count, out, json_out, svg); };
    });

    auto* decomp = app.add_subcommand("decompose", "loss decomposition P + J + S at a rotation");
    std::optional<std::uint64_t> scan;
    decomp->add_option("--config", config);
    decomp->add_option("--target", target);
    decomp->add_option("--angle", angle);
    decomp->add_option("--bins", bins);
    decomp->add_option("--samples", samples);
    decomp->add_option("--seed", seed);
    decomp->add_option("--scan", scan, "rotation scan size (0 disables)");
    decomp->add_option("--flow", flow, "decompose the latent of a saved flow");
    decomp->add_option("--out", out, "report JSON (default decomp.json)");
    decomp->callback([&] {
        action = [&] { return run_decompose(config, target, angle, bins, samples, seed, scan, flow, out); };
    });

    auto* delta = app.add_subcommand("delta", "one-shot affine improvement estimate");
    std::optional<std::uint64_t> candidates;
    delta->add_option("--config", config);
    delta->add_option("--target", target);
    delta->add_option("--angle", angle, "fixed rotation; otherwise the best random candidate");
    delta->add_option("--bins", bins);
    delta->add_option("--samples", samples);
    delta->add_option("--seed", seed);
    delta->add_option("--candidates", candidates);
    delta->add_option("--flow", flow);
    delta->add_option("--out", out, "JSON report (stdout when absent)");
    delta->callback([&] {
        action = [&] { return run_delta(config, target, angle, bins, samples, seed, candidates, flow, out); };
    });

    auto* checks = app.add_subcommand("checks", "run the invariant suite");
    std::vector<int> only;
    checks->add_option("--only", only, "check ids")->delimiter(',')->check(CLI::Range(1, kCheckCount));
    checks->add_option("--out", out, "JSON summary");
    checks->callback([&] { action = [&] { return run_checks_command(only, out); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        return action();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "flowlab: %s\n", e.what());
        return 2;
    }
}
