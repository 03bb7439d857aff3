#include "adprog/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "adprog/random.hpp"
#include "adprog/text_io.hpp"

namespace adprog {
namespace {

constexpr std::string_view kAugTag = "~aug";

std::string feature_column(std::size_t i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "f%03zu", i);
  return buf;
}

}  // namespace

std::vector<FillRecord> fill_biomarker_fields(std::array<BiomarkerRow, kTimepoints>& visits) {
  std::vector<FillRecord> fills;
  const std::string& subject = visits[0].subject_id;
  for (std::size_t f = 0; f < kBiomarkerCount; ++f) {
    if (!visits[0].values[f]) {
      throw MissingBaseline(subject, std::string(kBiomarkerNames[f]) + " missing at baseline");
    }
    std::size_t last = 0;
    for (std::size_t t = 1; t < kTimepoints; ++t) {
      if (visits[t].values[f]) {
        last = t;
      } else {
        visits[t].values[f] = visits[last].values[f];
        fills.push_back({subject, kVisits[t], kVisits[last], std::string(kBiomarkerNames[f])});
      }
    }
  }
  return fills;
}

std::string augmented_sample_id(const std::string& subject_id, std::size_t copy) {
  return subject_id + std::string(kAugTag) + std::to_string(copy);
}

std::string source_subject(const std::string& sample_id) {
  const std::size_t pos = sample_id.find(kAugTag);
  return pos == std::string::npos ? sample_id : sample_id.substr(0, pos);
}

bool is_augmented_id(const std::string& sample_id) { return sample_id.find(kAugTag) != std::string::npos; }

void write_feature_cache(const std::filesystem::path& path, std::span<const FeatureCacheRow> rows) {
  std::string out = "subject_id,visit_code";
  for (std::size_t i = 0; i < kImageFeatureWidth; ++i) out += "," + feature_column(i);
  out += '\n';
  for (const FeatureCacheRow& row : rows) {
    if (row.features.size() != kImageFeatureWidth) {
      throw DimensionError("feature cache: " + row.sample_id + " has " + std::to_string(row.features.size()) +
                           " features, expected 256");
    }
    out += row.sample_id;
    out += ',';
    out += visit_code(row.visit);
    for (double v : row.features) {
      out += ',';
      out += format_exact(v);
    }
    out += '\n';
  }
  write_file(path, out);
}

std::vector<FeatureCacheRow> load_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("feature cache: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("subject_id");
  const auto header = split(line, ',');
  if (header.empty() || trim(header[0]) != "subject_id") throw SchemaError("subject_id");
  if (header.size() < 2 || trim(header[1]) != "visit_code") throw SchemaError("visit_code");
  for (std::size_t i = 0; i < kImageFeatureWidth; ++i) {
    if (header.size() <= i + 2 || trim(header[i + 2]) != feature_column(i)) throw SchemaError(feature_column(i));
  }
  std::vector<FeatureCacheRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != kImageFeatureWidth + 2) throw ParseError(line_no, "feature cache: wrong cell count");
    FeatureCacheRow row;
    row.sample_id = std::string(trim(cells[0]));
    const auto visit = parse_visit(trim(cells[1]));
    if (!visit) throw ParseError(line_no, "feature cache: unknown visit_code");
    row.visit = *visit;
    row.features.resize(kImageFeatureWidth);
    for (std::size_t i = 0; i < kImageFeatureWidth; ++i) {
      if (!parse_double(cells[i + 2], row.features[i])) {
        throw ParseError(line_no, "feature cache: cannot parse " + feature_column(i));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

AssemblyResult assemble_sequences(std::span<const FeatureCacheRow> image_features,
                                  std::span<const BiomarkerRow> biomarkers, const std::map<std::string, int>& labels) {
  AssemblyResult result;
  std::map<std::string, std::array<std::optional<std::vector<double>>, kTimepoints>> images;
  std::set<std::string> bad_samples;
  for (const FeatureCacheRow& row : image_features) {
    auto& slot = images[row.sample_id][visit_index(row.visit)];
    if (slot || row.features.size() != kImageFeatureWidth) {
      if (bad_samples.insert(row.sample_id).second) {
        result.excluded.push_back({row.sample_id, slot ? "duplicate image features for visit " +
                                                             std::string(visit_code(row.visit))
                                                       : "image feature width is not 256"});
      }
      continue;
    }
    slot = row.features;
  }
  std::map<std::string, std::array<std::optional<BiomarkerRow>, kTimepoints>> markers;
  std::set<std::string> bad_subjects;
  for (const BiomarkerRow& row : biomarkers) {
    auto& slot = markers[row.subject_id][visit_index(row.visit)];
    if (slot) {
      bad_subjects.insert(row.subject_id);
      continue;
    }
    slot = row;
  }

  std::set<std::string> sources_with_images;
  for (const auto& [sample_id, visits] : images) {
    if (bad_samples.count(sample_id)) continue;
    const std::string subject = source_subject(sample_id);
    sources_with_images.insert(subject);
    const auto exclude = [&](std::string reason) { result.excluded.push_back({sample_id, std::move(reason)}); };
    if (bad_subjects.count(subject)) {
      exclude("duplicate biomarker visit rows");
      continue;
    }
    const auto label_it = labels.find(subject);
    if (label_it == labels.end()) {
      exclude("no label");
      continue;
    }
    const auto marker_it = markers.find(subject);
    if (marker_it == markers.end()) {
      exclude("modality mismatch: image features without biomarkers");
      continue;
    }
    try {
      FilledVisits<std::vector<double>> img = forward_fill(sample_id, visits);
      FilledVisits<BiomarkerRow> bio = forward_fill(subject, marker_it->second);
      std::vector<FillRecord> field_fills = fill_biomarker_fields(bio.visits);
      FeatureSequence seq;
      seq.sample_id = sample_id;
      seq.subject_id = subject;
      seq.label = label_it->second;
      seq.augmented = is_augmented_id(sample_id);
      seq.values.reserve(kTimepoints * kSequenceWidth);
      for (std::size_t t = 0; t < kTimepoints; ++t) {
        seq.values.insert(seq.values.end(), img.visits[t].begin(), img.visits[t].end());
        for (const auto& v : bio.visits[t].values) seq.values.push_back(*v);
      }
      for (double v : seq.values) {
        if (!std::isfinite(v)) throw InputError(sample_id + ": non-finite value");
      }
      result.fills.insert(result.fills.end(), img.fills.begin(), img.fills.end());
      if (!seq.augmented) {
        result.fills.insert(result.fills.end(), bio.fills.begin(), bio.fills.end());
        result.fills.insert(result.fills.end(), field_fills.begin(), field_fills.end());
      }
      result.sequences.push_back(std::move(seq));
    } catch (const InputError& e) {
      exclude(e.what());
    }
  }
  for (const auto& [subject, visits] : markers) {
    if (!sources_with_images.count(subject)) {
      result.excluded.push_back({subject, "modality mismatch: biomarkers without image features"});
    }
  }
  return result;
}

FeatureSequence without_biomarkers(const FeatureSequence& seq) {
  if (seq.width != kSequenceWidth) throw DimensionError("without_biomarkers: sequence is not 273 wide");
  FeatureSequence out = seq;
  out.width = kImageFeatureWidth;
  out.values.clear();
  for (std::size_t t = 0; t < kTimepoints; ++t) {
    const auto row = seq.step(t);
    out.values.insert(out.values.end(), row.begin(), row.begin() + kImageFeatureWidth);
  }
  return out;
}

void ZScoreNormalizer::fit(std::span<const FeatureSequence> sequences, std::span<const std::size_t> train) {
  if (train.empty()) throw InputError("normalizer: empty training split");
  const std::size_t width = sequences[train[0]].width;
  std::vector<double> sum(width, 0.0);
  std::size_t rows = 0;
  for (std::size_t i : train) {
    const FeatureSequence& s = sequences[i];
    if (s.width != width) throw DimensionError("normalizer: mixed sequence widths");
    for (std::size_t t = 0; t < kTimepoints; ++t) {
      const auto row = s.step(t);
      for (std::size_t f = 0; f < width; ++f) sum[f] += row[f];
    }
    rows += kTimepoints;
  }
  mean_.assign(width, 0.0);
  for (std::size_t f = 0; f < width; ++f) mean_[f] = sum[f] / static_cast<double>(rows);
  std::vector<double> sq(width, 0.0);
  for (std::size_t i : train) {
    for (std::size_t t = 0; t < kTimepoints; ++t) {
      const auto row = sequences[i].step(t);
      for (std::size_t f = 0; f < width; ++f) {
        const double d = row[f] - mean_[f];
        sq[f] += d * d;
      }
    }
  }
  std_.assign(width, 0.0);
  for (std::size_t f = 0; f < width; ++f) std_[f] = std::sqrt(sq[f] / static_cast<double>(rows));
}

ZScoreNormalizer ZScoreNormalizer::from_stats(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.empty() || mean.size() != stddev.size()) throw DimensionError("normalizer: mismatched statistics");
  ZScoreNormalizer n;
  n.mean_ = std::move(mean);
  n.std_ = std::move(stddev);
  return n;
}

FeatureSequence ZScoreNormalizer::apply(const FeatureSequence& seq) const {
  if (!fitted()) throw InputError("normalizer: apply before fit");
  if (seq.width != mean_.size()) throw DimensionError("normalizer: width differs from the fitted width");
  FeatureSequence out = seq;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    const std::size_t f = k % seq.width;
    out.values[k] = std_[f] < kStdFloor ? 0.0 : (seq.values[k] - mean_[f]) / std_[f];
  }
  return out;
}

std::vector<Fold> kfold_split(std::span<const SubjectLabel> subjects, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be at least 2");
  if (subjects.size() < k) {
    throw InputError("kfold: " + std::to_string(subjects.size()) + " subjects cannot fill " + std::to_string(k) +
                     " folds");
  }
  std::map<int, std::vector<std::string>> by_label;
  std::set<std::string> seen;
  for (const SubjectLabel& s : subjects) {
    if (!seen.insert(s.subject_id).second) throw InputError("kfold: duplicate subject " + s.subject_id);
    by_label[s.label].push_back(s.subject_id);
  }
  for (auto& [label, ids] : by_label) {
    if (ids.size() < k) {
      throw InputError("kfold: class " + std::to_string(label) + " has " + std::to_string(ids.size()) +
                       " subjects, too few for " + std::to_string(k) + " folds; use k <= " +
                       std::to_string(ids.size()));
    }
  }
  Rng rng = make_rng(seed, {0x4B464F4C44});
  std::vector<Fold> folds(k);
  std::size_t next = 0;
  for (auto& [label, ids] : by_label) {
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const std::string& id : ids) folds[next++ % k].validation.push_back(id);
  }
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(folds[f].validation.begin(), folds[f].validation.end());
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].validation.begin(), folds[g].validation.end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

std::vector<SubjectLabel> subjects_of(std::span<const FeatureSequence> sequences) {
  std::map<std::string, int> labels;
  for (const FeatureSequence& s : sequences) {
    const auto [it, inserted] = labels.emplace(s.subject_id, s.label);
    if (!inserted && it->second != s.label) throw InputError("subject " + s.subject_id + " has conflicting labels");
  }
  std::vector<SubjectLabel> out;
  for (const auto& [id, label] : labels) out.push_back({id, label});
  return out;
}

FoldIndices fold_indices(std::span<const FeatureSequence> sequences, const Fold& fold) {
  const std::set<std::string> train(fold.train.begin(), fold.train.end());
  const std::set<std::string> validation(fold.validation.begin(), fold.validation.end());
  FoldIndices out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const std::string& subject = sequences[i].subject_id;
    if (train.count(subject)) {
      out.train.push_back(i);
    } else if (validation.count(subject)) {
      if (!sequences[i].augmented) out.validation.push_back(i);
    } else {
      throw InputError("fold: subject " + subject + " is in neither split");
    }
  }
  return out;
}

RebalancePlan plan_rebalance(std::size_t n_label0, std::size_t n_label1, std::optional<std::size_t> multiplier) {
  if (n_label0 == 0 || n_label1 == 0) throw InputError("rebalance: both classes must be present");
  if (multiplier && *multiplier == 0) throw ConfigError("rebalance: multiplier must be at least 1");
  RebalancePlan plan;
  plan.minority_label = n_label1 <= n_label0 ? 1 : 0;
  plan.majority_count = std::max(n_label0, n_label1);
  plan.minority_count = std::min(n_label0, n_label1);
  const std::size_t m =
      multiplier ? *multiplier
                 : static_cast<std::size_t>(std::llround(static_cast<double>(plan.majority_count) /
                                                         static_cast<double>(plan.minority_count)));
  plan.copies_per_subject = std::max<std::size_t>(m, 1) - 1;
  return plan;
}

std::vector<FeatureSequence> rebalance(std::vector<FeatureSequence> sequences, const RebalancePlan& plan,
                                       const SequenceAugmenter& augment) {
  std::size_t originals = 0;
  for (const FeatureSequence& s : sequences) {
    if (!s.augmented && s.label == plan.minority_label) ++originals;
  }
  if (originals == 0 || originals == sequences.size()) throw InputError("rebalance: both classes must be present");
  const std::size_t n = sequences.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (sequences[i].augmented || sequences[i].label != plan.minority_label) continue;
    for (std::size_t c = 1; c <= plan.copies_per_subject; ++c) {
      FeatureSequence copy = augment(sequences[i], c);
      copy.sample_id = augmented_sample_id(sequences[i].subject_id, c);
      copy.subject_id = sequences[i].subject_id;
      copy.label = sequences[i].label;
      copy.augmented = true;
      if (copy.width != sequences[i].width || copy.values.size() != sequences[i].values.size()) {
        throw DimensionError("rebalance: augmenter changed the sequence shape");
      }
      sequences.push_back(std::move(copy));
    }
  }
  return sequences;
}

}  // namespace adprog
