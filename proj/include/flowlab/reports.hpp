#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowlab/decomp.hpp"
#include "flowlab/trainer.hpp"
#include "flowlab/volpres.hpp"

namespace flowlab {

/// "# flowlab <what> config_hash=<hash>" header, then
/// block,delta_hat,kl_hat,kl_se,angle,seconds,delta_mean,delta_var,realized_decrease.
/// Seconds are written as 0 unless `with_seconds`, keeping runs byte-identical.
void write_trace_csv(std::ostream& out, const TrainTrace& trace, const std::string& hash, bool with_seconds);

/// jacobian,volume_a,case,tv_bound,kl_bound
void write_counterexample_csv(std::ostream& out, const CounterexampleBounds& bounds, const std::string& hash);

nlohmann::json counterexample_to_json(const CounterexampleBounds& bounds);
nlohmann::json bound_report_to_json(const BoundReport& report);
nlohmann::json level_table_to_json(const std::vector<LevelRow>& rows);
nlohmann::json decomposition_to_json(const DecompositionReport& report);

/// Files written by one run. Each file is first written as "<path>.partial"
/// and renamed on commit(); without commit the partial files are removed.
class OutputSet {
public:
    OutputSet() = default;
    OutputSet(const OutputSet&) = delete;
    OutputSet& operator=(const OutputSet&) = delete;
    ~OutputSet();

    void write(const std::string& path, const std::string& contents);
    void write_json(const std::string& path, const nlohmann::json& doc);
    void commit();
    const std::vector<std::string>& paths() const { return paths_; }

private:
    std::vector<std::string> paths_;
    bool committed_ = false;
};

/// "<dir>/<stem>.config.json" next to `primary_output`.
std::string provenance_path(const std::string& primary_output);

}  // namespace flowlab
