#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adprog/biomarkers.hpp"
#include "adprog/error.hpp"

namespace adprog {

inline constexpr std::size_t kImageFeatureWidth = 256;
inline constexpr std::size_t kSequenceWidth = kImageFeatureWidth + kBiomarkerCount;

// One imputation: `filled` took its value from `source`. An empty field
// means the whole visit was copied.
struct FillRecord {
  std::string subject_id;
  Visit filled = Visit::bl;
  Visit source = Visit::bl;
  std::string field;
};

class MissingBaseline : public InputError {
 public:
  explicit MissingBaseline(const std::string& subject_id, const std::string& what = "baseline visit missing")
      : InputError(subject_id + ": " + what) {}
};

template <class T>
struct FilledVisits {
  std::array<T, kTimepoints> visits{};
  std::vector<FillRecord> fills;
};

/// Replaces each missing non-baseline visit with the most recent earlier
/// one. Reads only visits before the one being filled.
template <class T>
FilledVisits<T> forward_fill(const std::string& subject_id, const std::array<std::optional<T>, kTimepoints>& visits) {
  if (!visits[0]) throw MissingBaseline(subject_id);
  FilledVisits<T> out;
  std::size_t last = 0;
  for (std::size_t t = 0; t < kTimepoints; ++t) {
    if (visits[t]) {
      out.visits[t] = *visits[t];
      last = t;
    } else {
      out.visits[t] = out.visits[last];
      out.fills.push_back({subject_id, kVisits[t], kVisits[last], {}});
    }
  }
  return out;
}

/// Per-field forward fill of missing biomarker values across visits that are
/// already complete at the visit level. A field missing at baseline throws
/// MissingBaseline.
std::vector<FillRecord> fill_biomarker_fields(std::array<BiomarkerRow, kTimepoints>& visits);

/// kTimepoints x width values, row-major; a timepoint holds 256 image
/// features followed by the 17 biomarkers in kBiomarkerNames order.
struct FeatureSequence {
  std::string sample_id;   // subject id, or "<subject>~aug<k>" for an augmented copy
  std::string subject_id;  // source subject
  int label = 0;           // 0 = sMCI, 1 = pMCI
  bool augmented = false;
  std::size_t width = kSequenceWidth;
  std::vector<double> values;

  std::span<const double> step(std::size_t t) const { return {values.data() + t * width, width}; }
};

std::string augmented_sample_id(const std::string& subject_id, std::size_t copy);
// Inverse of augmented_sample_id; plain ids map to themselves.
std::string source_subject(const std::string& sample_id);
bool is_augmented_id(const std::string& sample_id);

struct FeatureCacheRow {
  std::string sample_id;
  Visit visit = Visit::bl;
  std::vector<double> features;
};

// Columns: subject_id, visit_code, f000..f255.
void write_feature_cache(const std::filesystem::path& path, std::span<const FeatureCacheRow> rows);
std::vector<FeatureCacheRow> load_feature_cache(const std::filesystem::path& path);

struct SubjectExclusion {
  std::string sample_id;
  std::string reason;
};

struct AssemblyResult {
  std::vector<FeatureSequence> sequences;  // sorted by sample id
  std::vector<FillRecord> fills;
  std::vector<SubjectExclusion> excluded;
};

/// Builds one sequence per cached sample. Augmented samples reuse the
/// biomarkers and label of their source subject. Samples lacking either
/// modality, a label or a baseline are excluded with a reason.
AssemblyResult assemble_sequences(std::span<const FeatureCacheRow> image_features,
                                  std::span<const BiomarkerRow> biomarkers, const std::map<std::string, int>& labels);

// Keeps only the 256 image features of every timepoint.
FeatureSequence without_biomarkers(const FeatureSequence& seq);

/// Per-feature z-score. Features whose training std is below kStdFloor map
/// to 0.
class ZScoreNormalizer {
 public:
  static constexpr double kStdFloor = 1e-12;

  // Statistics over every timepoint of sequences[i] for i in train.
  void fit(std::span<const FeatureSequence> sequences, std::span<const std::size_t> train);
  static ZScoreNormalizer from_stats(std::vector<double> mean, std::vector<double> stddev);
  FeatureSequence apply(const FeatureSequence& seq) const;

  bool fitted() const { return !mean_.empty(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

struct SubjectLabel {
  std::string subject_id;
  int label = 0;
};

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

/// Subject-level stratified k-fold: each class is shuffled with the seed and
/// dealt round-robin over folds.
std::vector<Fold> kfold_split(std::span<const SubjectLabel> subjects, std::size_t k, std::uint64_t seed);

// One entry per distinct source subject, sorted by id.
std::vector<SubjectLabel> subjects_of(std::span<const FeatureSequence> sequences);

struct FoldIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Sequence indices by source-subject membership. Validation holds only
// original sequences; augmented copies of validation subjects are dropped.
FoldIndices fold_indices(std::span<const FeatureSequence> sequences, const Fold& fold);

struct RebalancePlan {
  int minority_label = 1;
  std::size_t majority_count = 0;
  std::size_t minority_count = 0;
  std::size_t copies_per_subject = 0;

  std::size_t minority_after() const { return minority_count * (copies_per_subject + 1); }
};

// Multiplier defaults to round(majority / minority); copies = multiplier - 1.
RebalancePlan plan_rebalance(std::size_t n_label0, std::size_t n_label1, std::optional<std::size_t> multiplier = {});

using SequenceAugmenter = std::function<FeatureSequence(const FeatureSequence& source, std::size_t copy)>;

/// Appends copies_per_subject augmented variants of every original minority
/// sequence. Copies carry the augmentation flag and their source subject.
std::vector<FeatureSequence> rebalance(std::vector<FeatureSequence> sequences, const RebalancePlan& plan,
                                       const SequenceAugmenter& augment);

}  // namespace adprog
