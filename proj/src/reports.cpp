#include "flowlab/reports.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace flowlab {

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

void write_trace_csv(std::ostream& out, const TrainTrace& trace, const std::string& hash, bool with_seconds) {
    out << "# flowlab train config_hash=" << hash << '\n';
    out << "block,delta_hat,kl_hat,kl_se,angle,seconds,delta_mean,delta_var,realized_decrease\n";
    for (const auto& r : trace.records) {
        out << r.block << ',' << num(r.delta_hat) << ',' << num(r.kl_hat) << ',' << num(r.kl_se) << ','
            << num(r.angle) << ',' << num(with_seconds ? r.seconds : 0.0) << ',' << num(r.delta_mean_term) << ','
            << num(r.delta_variance_term) << ',' << num(r.realized_decrease) << '\n';
    }
}

void write_counterexample_csv(std::ostream& out, const CounterexampleBounds& b, const std::string& hash) {
    out << "# flowlab counterexample config_hash=" << hash << '\n';
    out << "jacobian,volume_a,case,tv_bound,kl_bound\n";
    for (const auto& r : b.sweep)
        out << num(r.jacobian) << ',' << num(r.volume_a) << ',' << r.case_id << ',' << num(r.tv_bound) << ','
            << num(r.kl_bound) << '\n';
}

nlohmann::json counterexample_to_json(const CounterexampleBounds& b) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : b.sweep)
        rows.push_back({{"jacobian", r.jacobian},
                        {"volume_a", r.volume_a},
                        {"case", r.case_id},
                        {"tv_bound", r.tv_bound},
                        {"kl_bound", r.kl_bound}});
    return {{"epsilon", b.epsilon},
            {"plateau", b.plateau},
            {"case1_bound", b.case1_bound},
            {"case2_bound", b.case2_bound},
            {"max_volume_a", b.max_volume_a},
            {"argmax_jacobian", b.argmax_jacobian},
            {"overall_bound", b.overall_bound},
            {"sweep_minimum", b.sweep_minimum},
            {"sweep", rows}};
}

nlohmann::json bound_report_to_json(const BoundReport& r) {
    nlohmann::json j = {{"lower_bound", r.lower_bound},
                        {"optimal_scale", r.optimal_scale},
                        {"covariance_det", r.covariance_det},
                        {"variance", r.variance},
                        {"entropy", r.entropy},
                        {"mass", r.mass}};
    j["achieved_kl"] = r.achieved_kl ? nlohmann::json(*r.achieved_kl) : nlohmann::json(nullptr);
    if (r.achieved_kl && r.lower_bound > 0.0)
        j["relative_gap"] = (*r.achieved_kl - r.lower_bound) / r.lower_bound;
    if (r.counterexample) j["counterexample"] = counterexample_to_json(*r.counterexample);
    return j;
}

nlohmann::json level_table_to_json(const std::vector<LevelRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
        out.push_back({{"level", r.level}, {"superlevel_volume", r.superlevel_volume}, {"radius", r.radius}});
    return out;
}

nlohmann::json decomposition_to_json(const DecompositionReport& r) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : r.per_bin)
        bins.push_back({{"center", b.center}, {"mean", b.mean}, {"sd", b.sd}, {"S", b.S}, {"J", b.J}});
    nlohmann::json scan = nlohmann::json::array();
    for (std::size_t k = 0; k < r.scan_angles.size(); ++k)
        scan.push_back({{"angle", r.scan_angles[k]},
                        {"delta_affine", r.scan_affine[k]},
                        {"delta_universal", r.scan_universal[k]}});
    return {{"samples", r.samples},
            {"bins", r.bins},
            {"angle", r.angle},
            {"P", r.P},
            {"Jbar", r.Jbar},
            {"Sbar", r.Sbar},
            {"Dbar", r.Dbar},
            {"total", r.total},
            {"se", {{"P", r.se_P}, {"Jbar", r.se_J}, {"Sbar", r.se_S}, {"combined", r.combined_se()}}},
            {"delta_affine_at_q", r.delta_affine_at_q},
            {"delta_universal_at_q", r.delta_universal_at_q},
            {"delta_affine_star", r.delta_affine_star},
            {"delta_universal_star", r.delta_universal_star},
            {"se_affine_star", r.se_affine_star},
            {"se_universal_star", r.se_universal_star},
            {"angle_affine_star", r.angle_affine_star},
            {"angle_universal_star", r.angle_universal_star},
            {"rotation_scan", scan},
            {"per_bin", bins}};
}

OutputSet::~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : paths_) std::filesystem::remove(p + ".partial", ec);
}

void OutputSet::write(const std::string& path, const std::string& contents) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    const std::string tmp = path + ".partial";
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path));
    paths_.push_back(path);
    out << contents;
    out.close();
    if (!out) throw Error(fmt::format("failed writing '{}'", path));
}

void OutputSet::write_json(const std::string& path, const nlohmann::json& doc) { write(path, doc.dump(2) + "\n"); }

void OutputSet::commit() {
    for (const auto& p : paths_) std::filesystem::rename(p + ".partial", p);
    committed_ = true;
}

std::string provenance_path(const std::string& primary_output) {
    std::filesystem::path p(primary_output);
    return (p.parent_path() / (p.stem().string() + ".config.json")).string();
}

}  // namespace flowlab
