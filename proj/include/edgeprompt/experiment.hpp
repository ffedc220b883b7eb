#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace edgeprompt {

// Flat key=value settings; keys match the command-line flag names without the
// leading dashes.
using Settings = std::map<std::string, std::string, std::less<>>;

// One `key = value` per line. Blank lines and lines starting with '#' are
// skipped; a repeated key or a line without '=' is a Config error.
Settings parse_settings(std::string_view text);
Settings load_settings(const std::filesystem::path& path);

// Keys in `overlay` replace keys in `base`.
Settings merge_settings(Settings base, const Settings& overlay);

// The commands below validate every key first (unknown keys and missing
// input files are Config errors), then run. Each returns a JSON document.

// Pre-trains a backbone and writes the checkpoint to `out`.
std::string run_pretrain(const Settings& settings);

// Tunes one method for every (anchor count, seed) pair. Writes report.json,
// report.csv and one prompt file per run under the directory `out`;
// classifier-only runs emit no prompt file.
std::string run_tune(const Settings& settings);

// Re-evaluates a prompt file against its checkpoint on the split it was
// tuned on. A digest mismatch is a Compatibility error.
std::string run_eval(const Settings& settings);

// Monte-Carlo check of the prompted-distance construction.
std::string run_verify_theorem1(const Settings& settings);

// Feature-prompt / edge-prompt sum-readout residuals on random graphs.
std::string run_verify_theorem2(const Settings& settings);

// Writes a CSBM dataset container. graphs > 1 builds a graph-classification
// set whose label-1 graphs swap p and q.
std::string run_gen_csbm(const Settings& settings);

// Dispatches on "pretrain", "tune", "eval", "verify-theorem1",
// "verify-theorem2" and "gen-csbm".
std::string run_command(std::string_view command, const Settings& settings);

// CSV columns of the tuning report, in order.
inline constexpr const char* kReportCsvHeader = "seed,method,strategy,shots,anchors,train_acc,test_acc,epochs";

// Sample standard deviation; 0 for fewer than two values.
double sample_std(const std::vector<double>& values);

}  // namespace edgeprompt
