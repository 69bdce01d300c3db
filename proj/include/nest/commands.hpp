#pragma once

// Pipeline commands behind the `nest` executable.
//
//   gen     data_dir/{traces.jsonl, manifest.json}
//   prep    prep_dir/{train,val,test}.jsonl + stats.json
//   train   model_dir/{checkpoint.json, train_log.csv, baseline.json}
//   eval    report_dir/{metrics,latency,sweep,families,unseen}.csv + report.json
//   report  report_dir/fig{2,3,4}_*.csv
//
// The cmd_* functions throw; run_command maps errors to exit codes
// (2 input/config, 3 training divergence, 4 evaluation leakage).

#include "nest/config.hpp"
#include "nest/eval.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace nest {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitLeakage = 4;

struct CommandOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out; // overrides the command's output directory
    std::optional<double> scale;              // gen only
    bool table_faithful = false;              // prep only
};

/// Config file (or defaults) with command-line overrides applied.
RunConfig resolve_config(std::string_view command, const CommandOptions& opts);

void cmd_gen(const RunConfig& cfg, std::ostream& log);
void cmd_prep(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, std::ostream& log);
EvalReport cmd_eval(const RunConfig& cfg, std::ostream& log);
void cmd_report(const std::filesystem::path& report_dir, const std::filesystem::path& out_dir,
                std::ostream& log);

/// Runs one command end to end and returns its exit code; error messages go to `err`.
int run_command(std::string_view command, const CommandOptions& opts, std::ostream& out,
                std::ostream& err);

} // namespace nest
