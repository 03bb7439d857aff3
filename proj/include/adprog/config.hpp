#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "adprog/conv_stem.hpp"
#include "adprog/recurrent.hpp"
#include "adprog/synth.hpp"
#include "adprog/train.hpp"

namespace adprog {

/// Every tunable of a pipeline run. Sections map to top-level keys of the
/// JSON config file: synth, diagnostic, extractor, predictor,
/// train_extractor, train_predictor, rebalance_multiplier.
struct RunConfig {
  static constexpr std::uint64_t kDefaultSeed = 42;

  SyntheticCohortConfig synth;
  DiagnosticCohortConfig diagnostic;
  ExtractorConfig extractor;
  BiLstmConfig predictor;
  TrainConfig train_extractor = TrainConfig::extractor_desk();
  TrainConfig train_predictor = TrainConfig::predictor_desk();
  std::optional<std::size_t> rebalance_multiplier;

  static RunConfig desk();
  static RunConfig paper_scale();
  // One seed for every stochastic stage.
  void set_seed(std::uint64_t seed);
  void validate() const;
};

nlohmann::json config_to_json(const VitConfig& cfg);
nlohmann::json config_to_json(const StemConfig& cfg);
nlohmann::json config_to_json(const ExtractorConfig& cfg);
nlohmann::json config_to_json(const BiLstmConfig& cfg);
nlohmann::json config_to_json(const TrainConfig& cfg);
nlohmann::json config_to_json(const SyntheticCohortConfig& cfg);
nlohmann::json config_to_json(const DiagnosticCohortConfig& cfg);
nlohmann::json config_to_json(const RunConfig& cfg);

// Overwrites only the keys present; unknown keys or wrong types are a
// ConfigError.
void merge_config(const nlohmann::json& j, VitConfig& cfg);
void merge_config(const nlohmann::json& j, StemConfig& cfg);
void merge_config(const nlohmann::json& j, ExtractorConfig& cfg);
void merge_config(const nlohmann::json& j, BiLstmConfig& cfg);
void merge_config(const nlohmann::json& j, TrainConfig& cfg);
void merge_config(const nlohmann::json& j, SyntheticCohortConfig& cfg);
void merge_config(const nlohmann::json& j, DiagnosticCohortConfig& cfg);
void merge_config(const nlohmann::json& j, RunConfig& cfg);

template <class T>
T config_from_json(const nlohmann::json& j) {
  T cfg;
  merge_config(j, cfg);
  return cfg;
}

// Desk or paper-scale defaults, then the file (if any) on top.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path, bool paper_scale);

}  // namespace adprog
