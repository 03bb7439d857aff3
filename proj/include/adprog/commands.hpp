#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adprog/config.hpp"

namespace adprog {

struct CommandContext {
  RunConfig config;
  std::filesystem::path out_dir = "run";
  std::optional<std::filesystem::path> config_path;
  std::size_t jobs = 1;
  std::ostream* log = nullptr;  // progress lines; null silences them
};

// Artifact names inside the run directory.
namespace artifacts {
inline constexpr const char* kImages = "images.bin";
inline constexpr const char* kBiomarkers = "biomarkers.csv";
inline constexpr const char* kLabels = "labels.csv";
inline constexpr const char* kDiagnosticImages = "diagnostic_images.bin";
inline constexpr const char* kDiagnosticLabels = "diagnostic_labels.csv";
inline constexpr const char* kExtractor = "extractor.ckpt";
inline constexpr const char* kExtractorBest = "extractor_best.ckpt";
inline constexpr const char* kExtractorCurves = "extractor_curves.tsv";
inline constexpr const char* kFeatures = "features.csv";
inline constexpr const char* kExtractLog = "extract_log.tsv";
inline constexpr const char* kMetrics = "metrics.tsv";
inline constexpr const char* kCurves = "curves.tsv";
inline constexpr const char* kFolds = "folds.tsv";
inline constexpr const char* kFills = "fills.tsv";
inline constexpr const char* kExclusions = "exclusions.tsv";
inline constexpr const char* kEvaluation = "evaluation.tsv";
}  // namespace artifacts

std::string predictor_checkpoint_name(std::size_t fold, bool best = false);

// Each returns normally only when every declared output was written.
void cmd_synth(const CommandContext& ctx);
void cmd_train_extractor(const CommandContext& ctx);
void cmd_extract(const CommandContext& ctx);
void cmd_train_predictor(const CommandContext& ctx);
// Re-evaluates the saved fold checkpoints; returns the metrics table.
std::string cmd_evaluate(const CommandContext& ctx);
// modes empty means all three.
void cmd_ablate(const CommandContext& ctx, const std::vector<AblationMode>& modes);

// Assembled sequences from the synth and extract artifacts of a run.
AssemblyResult load_run_sequences(const std::filesystem::path& dir);

}  // namespace adprog
