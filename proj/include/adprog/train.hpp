#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adprog/checkpoint.hpp"
#include "adprog/conv_stem.hpp"
#include "adprog/losses.hpp"
#include "adprog/metrics.hpp"
#include "adprog/optim.hpp"
#include "adprog/recurrent.hpp"
#include "adprog/sequences.hpp"
#include "adprog/synth.hpp"

namespace adprog {

enum class Phase { extractor, predictor };
enum class LossKind { cross_entropy, focal, bce };

std::string_view phase_name(Phase phase);
std::string_view loss_name(LossKind loss);
LossKind parse_loss(std::string_view name);

struct TrainConfig {
  Phase phase = Phase::predictor;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double base_lr = 1e-3;
  double late_lr = 1e-4;
  // Last epoch at base_lr (predictor only).
  std::size_t switch_epoch = 50;
  AdamConfig adam;
  LossKind loss = LossKind::focal;
  FocalLossConfig focal;
  std::uint64_t seed = 42;
  std::size_t folds = 5;

  static TrainConfig extractor_desk();
  static TrainConfig predictor_desk();
  static TrainConfig extractor_paper();
  static TrainConfig predictor_paper();
  void validate() const;
};

/// Predictor: base_lr through switch_epoch, late_lr afterwards. Extractor:
/// base_lr throughout. Epochs count from 1.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t fold = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct LabeledImage {
  std::string id;
  Tensor image;  // [3 x S x S]
  int label = 0;
};

/// Phase-one training of the feature extractor with cross-entropy over the
/// diagnostic classes.
class ExtractorTrainer {
 public:
  ExtractorTrainer(const ExtractorConfig& model_cfg, const TrainConfig& cfg, std::vector<LabeledImage> train,
                   std::vector<LabeledImage> validation, std::size_t fold = 0);

  EpochRecord run_epoch();
  std::size_t epoch() const { return epoch_; }
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);
  const FeatureExtractor& model() const { return model_; }

 private:
  ExtractorConfig model_cfg_;
  TrainConfig cfg_;
  std::vector<LabeledImage> train_;
  std::vector<LabeledImage> validation_;
  std::size_t fold_;
  FeatureExtractor model_;
  Adam optimizer_;
  Rng rng_;
  std::size_t epoch_ = 0;
};

struct ExtractorRun {
  std::vector<EpochRecord> curve;
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;  // highest validation accuracy, earliest on ties
  std::size_t best_epoch = 0;
};

// Trains on one stratified fold of the diagnostic cohort.
ExtractorRun train_extractor(const DiagnosticCohort& cohort, const ExtractorConfig& model_cfg, const TrainConfig& cfg,
                             std::size_t fold = 0);

FeatureExtractor extractor_from_checkpoint(const Checkpoint& ckpt);

// One 256-vector per image, inference mode, in input order.
std::vector<FeatureCacheRow> extract_features(const FeatureExtractor& model, std::span<const SliceImage> images);

/// Rotated copies of every minority-class subject's images, one angle per
/// copy shared by all of its visits. Ids follow augmented_sample_id.
std::vector<SliceImage> augment_minority(std::span<const SliceImage> images, const std::map<std::string, int>& labels,
                                         const RebalancePlan& plan, std::uint64_t seed);

struct Evaluation {
  ClassificationMetrics metrics;
  double loss = 0.0;
  std::vector<double> p_positive;  // P(pMCI) per sequence
};

// probs[B x C] against integer labels; BCE reads the positive column.
Tensor classification_loss(const Tensor& probs, std::span<const int> labels, LossKind kind, const FocalLossConfig& focal);

// Sequences must already be normalized.
Evaluation evaluate_classifier(const SequenceClassifier& model, std::span<const FeatureSequence> sequences,
                               LossKind loss, const FocalLossConfig& focal);

/// Phase-two training of one fold. Normalization statistics come from the
/// fold's training sequences only.
class PredictorTrainer {
 public:
  PredictorTrainer(const BiLstmConfig& model_cfg, const TrainConfig& cfg, std::span<const FeatureSequence> sequences,
                   const FoldIndices& split, std::size_t fold);

  EpochRecord run_epoch();
  std::size_t epoch() const { return epoch_; }
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);
  Evaluation evaluate_validation() const;

  const SequenceClassifier& model() const { return model_; }
  const ZScoreNormalizer& normalizer() const { return normalizer_; }

 private:
  BiLstmConfig model_cfg_;
  TrainConfig cfg_;
  std::size_t fold_;
  ZScoreNormalizer normalizer_;
  std::vector<FeatureSequence> train_;
  std::vector<FeatureSequence> validation_;
  SequenceClassifier model_;
  Adam optimizer_;
  Rng rng_;
  std::size_t epoch_ = 0;
};

// A trained predictor with its normalizer, rebuilt from a checkpoint.
struct Predictor {
  SequenceClassifier model;
  ZScoreNormalizer normalizer;
  LossKind loss;
  FocalLossConfig focal;
};
Predictor predictor_from_checkpoint(const Checkpoint& ckpt);
Evaluation evaluate_predictor(const Predictor& predictor, std::span<const FeatureSequence> raw_sequences);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<EpochRecord> curve;
  Evaluation final_eval;  // reported metrics: last epoch
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  std::vector<std::string> train_subjects;
  std::vector<std::string> validation_subjects;
  std::size_t train_sequences = 0;
  std::size_t validation_sequences = 0;
};

struct MetricSummary {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  double loss = 0.0;
  ConfusionMatrix confusion;  // summed over folds
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  MetricSummary mean;
};

// Per-fold means; a ratio undefined in some fold averages the others.
MetricSummary summarize(std::span<const FoldResult> folds);

struct PredictorRunConfig {
  BiLstmConfig model;
  TrainConfig train = TrainConfig::predictor_desk();
  bool drop_biomarkers = false;
  std::size_t jobs = 1;
};

/// k-fold training over assembled sequences. Folds run on up to `jobs`
/// threads; results are ordered by fold.
CrossValidation train_predictor(std::span<const FeatureSequence> sequences, const PredictorRunConfig& cfg);

enum class AblationMode { no_biomarkers, vanilla_lstm, bce_loss };
std::string_view ablation_name(AblationMode mode);
AblationMode parse_ablation(std::string_view name);

struct VariantInfo {
  std::string name;
  std::size_t input_width = 0;
  std::size_t recurrent_params = 0;
  bool bidirectional = true;
  LossKind loss = LossKind::focal;
};

VariantInfo describe_variant(const std::string& name, const PredictorRunConfig& cfg);
PredictorRunConfig ablated_config(AblationMode mode, const PredictorRunConfig& base);

struct AblationResult {
  AblationMode mode = AblationMode::no_biomarkers;
  VariantInfo baseline_info;
  VariantInfo ablated_info;
  CrossValidation baseline;
  CrossValidation ablated;
};

// Reuses `baseline` when given instead of retraining it.
AblationResult run_ablation(AblationMode mode, std::span<const FeatureSequence> sequences,
                            const PredictorRunConfig& base, const CrossValidation* baseline = nullptr);

}  // namespace adprog
