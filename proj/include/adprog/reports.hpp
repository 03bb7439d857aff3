#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adprog/sequences.hpp"
#include "adprog/train.hpp"

namespace adprog {

// Tab-separated reports, one header row each.

// fold accuracy precision recall f1 loss tp tn fp fn; k rows then "mean".
std::string format_metrics_tsv(const CrossValidation& cv);
// fold epoch lr train_loss val_loss train_acc val_acc
std::string format_curves_tsv(std::span<const EpochRecord> rows);
std::string format_curves_tsv(const CrossValidation& cv);
// variant input_width recurrent_params bidirectional loss accuracy precision recall f1
std::string format_ablation_tsv(const AblationResult& result);
// fold subject_id role label
std::string format_fold_manifest_tsv(const CrossValidation& cv, const std::map<std::string, int>& labels);
// subject_id filled_visit source_visit field
std::string format_fills_tsv(std::span<const FillRecord> fills);
// sample_id reason
std::string format_exclusions_tsv(std::span<const SubjectExclusion> excluded);

struct ArtifactRecord {
  std::string path;  // relative to the run directory
  std::string sha256;
};

/// One per command invocation, written as manifest_<command>.json.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::vector<ArtifactRecord> inputs;
  std::vector<ArtifactRecord> outputs;
  nlohmann::json config = nlohmann::json::object();
};

std::string manifest_file_name(const std::string& command);
ArtifactRecord record_artifact(const std::filesystem::path& dir, const std::string& relative);
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& dir, const std::string& command);

/// Checks that `command`'s manifest exists in dir and every output it lists
/// still matches its checksum. Errors name the command that produces it.
RunManifest verify_upstream(const std::filesystem::path& dir, const std::string& command);

// UTC, ISO 8601.
std::string utc_timestamp();

}  // namespace adprog
