#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dil/dataset.hpp"
#include "dil/deep_il.hpp"
#include "dil/factor_timing.hpp"
#include "dil/metrics.hpp"

namespace dil::app {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

/// Command-line values; each set field overrides the matching config entry.
struct Options {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> eras;  // gen: era count; other commands: "first:last"
  std::optional<int> features;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> groups;
  std::optional<std::filesystem::path> predictions;
  std::optional<std::filesystem::path> models;
  std::optional<std::string> target;
};

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kBudgetExceeded = 4 };

/// Maps an exception raised by a command onto the process exit code.
int exit_code(const std::exception& e) noexcept;

/// Runs one command, reporting failures on `err`; returns the exit code.
int run(const std::string& command, const Options& options, std::ostream& out, std::ostream& err);

void cmd_gen(const Options& options, std::ostream& out);
void cmd_backtest(const Options& options, std::ostream& out);
void cmd_sweep(const Options& options, std::ostream& out);
void cmd_score(const Options& options, std::ostream& out);
void cmd_inspect(const Options& options, std::ostream& out);

// ---- configuration ---------------------------------------------------------------------

Json read_json(const std::filesystem::path& path);
/// Stable 64-bit digest (hex) of the canonical JSON text.
std::string config_hash(const Json& resolved);

/// Inclusive era range parsed from "first:last".
struct EraRange {
  int first = 0;
  int last = 0;
};
EraRange parse_era_range(const std::string& text);

/// Fills defaults; a missing seed is derived from `fallback_seed`.
Json resolve_synth(const Json& config, std::uint64_t fallback_seed);
dataset::SynthConfig synth_from_json(const Json& resolved);

/// Resolved data section: {"path", "groups"} or {"synthetic": {...}}.
Json resolve_data(const Json& config, std::uint64_t global_seed);
dataset::TemporalTabularDataset load_data(const Json& resolved);

gbdt::Hyperparams hyperparams_from_json(const Json& config, const gbdt::Hyperparams& defaults = {});
Json hyperparams_to_json(const gbdt::Hyperparams& hp);

Json recipe_to_json(const deep_il::ModelRecipe& recipe, const dataset::TemporalTabularDataset& data);
deep_il::ModelRecipe recipe_from_json(const Json& config, const dataset::TemporalTabularDataset& data);

/// Expands strategy shorthands into explicit recipe lists and fills defaults. Resolving a
/// resolved plan returns it unchanged.
Json resolve_plan(const Json& config, const dataset::TemporalTabularDataset& data, std::uint64_t seed);
deep_il::DeepIlPlan plan_from_json(const Json& resolved, const dataset::TemporalTabularDataset& data);

struct NamedFactorTiming {
  std::string name;
  factor_timing::FactorTimingConfig config;
};
Json resolve_factor_timing(const Json& config, const dataset::TemporalTabularDataset& data, std::uint64_t seed);
std::vector<NamedFactorTiming> factor_timing_from_json(const Json& resolved,
                                                       const dataset::TemporalTabularDataset& data);

// ---- reporting -------------------------------------------------------------------------

/// Scores a series over [first, last]; eras whose predictions have no spread are skipped
/// and counted.
struct ScoredSeries {
  std::vector<metrics::EraScore> scores;
  std::vector<int> skipped_eras;
};
ScoredSeries score_strategy(const PredictionSeries& series, const dataset::TemporalTabularDataset& data,
                            std::size_t target_index, int first, int last);

struct NamedRange {
  std::string name;
  int first = 0;
  int last = 0;
};

/// `strategy,range,first_era,last_era,eras,mean_corr,std_corr,sharpe,calmar,max_drawdown`.
/// Ranges with fewer than two scored eras are omitted.
std::string summary_csv(const std::vector<std::pair<std::string, std::vector<metrics::EraScore>>>& scored,
                        const std::vector<NamedRange>& ranges);

}  // namespace dil::app
