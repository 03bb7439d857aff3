#include "adprog/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>
#include <thread>

#include "adprog/augment.hpp"
#include "adprog/config.hpp"
#include "adprog/error.hpp"
#include "adprog/ops.hpp"

namespace adprog {
namespace {

constexpr std::size_t kEvalChunk = 256;

void check_loss(const Tensor& loss, std::size_t fold, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss.item())) {
    throw NumericError("training diverged: loss is " + std::to_string(loss.item()) + " at fold " +
                       std::to_string(fold) + ", epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
}

std::vector<Tensor> batch_steps(std::span<const FeatureSequence> seqs, std::span<const std::size_t> idx) {
  const std::size_t width = seqs[idx[0]].width;
  std::vector<Tensor> steps;
  steps.reserve(kTimepoints);
  for (std::size_t t = 0; t < kTimepoints; ++t) {
    std::vector<double> v;
    v.reserve(idx.size() * width);
    for (std::size_t i : idx) {
      const auto row = seqs[i].step(t);
      v.insert(v.end(), row.begin(), row.end());
    }
    steps.emplace_back(Shape{idx.size(), width}, std::move(v));
  }
  return steps;
}

std::size_t argmax_row(std::span<const double> p, std::size_t row, std::size_t cols) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < cols; ++c)
    if (p[row * cols + c] > p[row * cols + best]) best = c;
  return best;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

nlohmann::json predictor_architecture(const BiLstmConfig& model, const TrainConfig& train) {
  return {{"model", config_to_json(model)}, {"train", config_to_json(train)}};
}

nlohmann::json extractor_architecture(const ExtractorConfig& model, const TrainConfig& train) {
  return {{"model", config_to_json(model)}, {"train", config_to_json(train)}};
}

void check_architecture(const Checkpoint& ckpt, const std::string& kind, const nlohmann::json& expected) {
  if (ckpt.kind != kind) throw InputError("checkpoint: expected a " + kind + " checkpoint, found " + ckpt.kind);
  if (ckpt.architecture != expected) throw InputError("checkpoint: architecture differs from the trainer's config");
}

struct ImageEval {
  double loss = 0.0;
  double accuracy = 0.0;
};

ImageEval evaluate_images(const FeatureExtractor& model, std::span<const LabeledImage> images) {
  if (images.empty()) return {};
  std::vector<Tensor> rows;
  std::vector<int> labels;
  for (const LabeledImage& img : images) {
    rows.push_back(model.forward(img.image).logits.detach());
    labels.push_back(img.label);
  }
  const Tensor probs = softmax(concat_rows(rows), 1);
  const Tensor loss = cross_entropy(probs, one_hot(labels, model.config().stem.classes));
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (static_cast<int>(argmax_row(probs.values(), r, probs.dim(1))) == labels[r]) ++correct;
  }
  return {loss.item(), static_cast<double>(correct) / static_cast<double>(labels.size())};
}

}  // namespace

std::string_view phase_name(Phase phase) { return phase == Phase::extractor ? "extractor" : "predictor"; }

std::string_view loss_name(LossKind loss) {
  switch (loss) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::focal: return "focal";
    case LossKind::bce: return "bce";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  if (name == "cross_entropy" || name == "ce") return LossKind::cross_entropy;
  if (name == "focal") return LossKind::focal;
  if (name == "bce") return LossKind::bce;
  throw ConfigError("unknown loss '" + std::string(name) + "' (expected cross_entropy, focal or bce)");
}

TrainConfig TrainConfig::extractor_desk() {
  TrainConfig cfg;
  cfg.phase = Phase::extractor;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.switch_epoch = cfg.epochs;
  cfg.loss = LossKind::cross_entropy;
  return cfg;
}

TrainConfig TrainConfig::predictor_desk() { return TrainConfig{}; }

TrainConfig TrainConfig::extractor_paper() {
  TrainConfig cfg = extractor_desk();
  cfg.epochs = 100;
  cfg.batch_size = 32;
  cfg.switch_epoch = cfg.epochs;
  return cfg;
}

TrainConfig TrainConfig::predictor_paper() {
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.batch_size = 64;
  cfg.switch_epoch = 200;
  return cfg;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("train: batch size must be at least 1");
  if (switch_epoch > epochs) {
    throw ConfigError("train: switch epoch " + std::to_string(switch_epoch) + " exceeds epochs " +
                      std::to_string(epochs));
  }
  if (!(base_lr > 0.0) || !(late_lr > 0.0)) throw ConfigError("train: learning rates must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("train: Adam epsilon must be positive");
  if (folds < 2) throw ConfigError("train: k must be at least 2");
  if (loss == LossKind::focal) focal.validate(2);
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch < 1 || epoch > cfg.epochs) {
    throw InputError("lr_schedule: epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(cfg.epochs) +
                     "]");
  }
  if (cfg.phase == Phase::extractor) return cfg.base_lr;
  return epoch <= cfg.switch_epoch ? cfg.base_lr : cfg.late_lr;
}

ExtractorTrainer::ExtractorTrainer(const ExtractorConfig& model_cfg, const TrainConfig& cfg,
                                   std::vector<LabeledImage> train, std::vector<LabeledImage> validation,
                                   std::size_t fold)
    : model_cfg_(model_cfg),
      cfg_(cfg),
      train_(std::move(train)),
      validation_(std::move(validation)),
      fold_(fold),
      model_(model_cfg, cfg.seed),
      optimizer_(model_.parameters(), cfg.adam),
      rng_(make_rng(cfg.seed, {fold, 0x45585452})) {
  cfg_.validate();
  if (cfg_.phase != Phase::extractor) throw ConfigError("extractor trainer needs an extractor-phase config");
  if (train_.empty()) throw InputError("extractor trainer: empty training set");
  for (const auto* set : {&train_, &validation_}) {
    for (const LabeledImage& img : *set) {
      if (img.label < 0 || static_cast<std::size_t>(img.label) >= model_cfg_.stem.classes) {
        throw InputError("extractor trainer: label of " + img.id + " outside the class range");
      }
    }
  }
}

EpochRecord ExtractorTrainer::run_epoch() {
  if (epoch_ >= cfg_.epochs) throw InputError("extractor trainer: all epochs already run");
  ++epoch_;
  const double lr = lr_schedule(epoch_, cfg_);
  const ParamList params = model_.parameters();
  const std::vector<std::size_t> order = shuffled(train_.size(), rng_);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg_.batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    std::vector<Tensor> rows;
    std::vector<int> labels;
    for (std::size_t k = start; k < end; ++k) {
      rows.push_back(model_.forward(train_[order[k]].image).logits);
      labels.push_back(train_[order[k]].label);
    }
    const Tensor probs = softmax(concat_rows(rows), 1);
    const Tensor loss = cross_entropy(probs, one_hot(labels, model_cfg_.stem.classes));
    check_loss(loss, fold_, epoch_, batch);
    zero_grads(params);
    loss.backward();
    optimizer_.step(lr);
    loss_sum += loss.item() * static_cast<double>(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (static_cast<int>(argmax_row(probs.values(), r, probs.dim(1))) == labels[r]) ++correct;
    }
  }
  zero_grads(params);
  const ImageEval val = evaluate_images(model_, validation_);
  const double n = static_cast<double>(train_.size());
  return {fold_, epoch_, lr, loss_sum / n, val.loss, static_cast<double>(correct) / n, val.accuracy};
}

Checkpoint ExtractorTrainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "extractor";
  ckpt.architecture = extractor_architecture(model_cfg_, cfg_);
  ckpt.epoch = epoch_;
  ckpt.fold = fold_;
  ckpt.rng_state = rng_to_string(rng_);
  ckpt.tensors = snapshot(model_.parameters());
  ckpt.moments = optimizer_.moments();
  return ckpt;
}

void ExtractorTrainer::restore(const Checkpoint& ckpt) {
  check_architecture(ckpt, "extractor", extractor_architecture(model_cfg_, cfg_));
  if (ckpt.fold != fold_) throw InputError("checkpoint: fold differs from the trainer's fold");
  load_params(model_.parameters(), ckpt.tensors);
  optimizer_.set_moments(ckpt.moments);
  rng_ = rng_from_string(ckpt.rng_state);
  epoch_ = ckpt.epoch;
}

ExtractorRun train_extractor(const DiagnosticCohort& cohort, const ExtractorConfig& model_cfg, const TrainConfig& cfg,
                             std::size_t fold) {
  cfg.validate();
  if (fold >= cfg.folds) throw ConfigError("train_extractor: fold index out of range");
  std::vector<SubjectLabel> subjects;
  for (const auto& [id, label] : cohort.labels) subjects.push_back({id, label});
  const std::vector<Fold> folds = kfold_split(subjects, cfg.folds, cfg.seed);
  const std::set<std::string> validation(folds[fold].validation.begin(), folds[fold].validation.end());
  std::vector<LabeledImage> train_set, val_set;
  for (const SliceImage& img : cohort.images) {
    const auto label = cohort.labels.find(img.sample_id);
    if (label == cohort.labels.end()) throw InputError("train_extractor: no label for " + img.sample_id);
    LabeledImage item{img.sample_id, img.to_tensor(), label->second};
    (validation.count(img.sample_id) ? val_set : train_set).push_back(std::move(item));
  }
  ExtractorTrainer trainer(model_cfg, cfg, std::move(train_set), std::move(val_set), fold);
  ExtractorRun run;
  double best = -1.0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    run.curve.push_back(trainer.run_epoch());
    if (run.curve.back().val_acc > best) {
      best = run.curve.back().val_acc;
      run.best_epoch = trainer.epoch();
      run.best_checkpoint = trainer.checkpoint();
    }
  }
  run.final_checkpoint = trainer.checkpoint();
  return run;
}

FeatureExtractor extractor_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "extractor") throw InputError("checkpoint: expected an extractor checkpoint, found " + ckpt.kind);
  const auto cfg = config_from_json<ExtractorConfig>(ckpt.architecture.at("model"));
  FeatureExtractor model(cfg, 0);
  load_params(model.parameters(), ckpt.tensors);
  return model;
}

std::vector<FeatureCacheRow> extract_features(const FeatureExtractor& model, std::span<const SliceImage> images) {
  std::vector<FeatureCacheRow> rows;
  rows.reserve(images.size());
  for (const SliceImage& img : images) {
    const Tensor features = model.forward(img.to_tensor()).features;
    rows.push_back({img.sample_id, img.visit, std::vector<double>(features.values().begin(), features.values().end())});
  }
  return rows;
}

std::vector<SliceImage> augment_minority(std::span<const SliceImage> images, const std::map<std::string, int>& labels,
                                         const RebalancePlan& plan, std::uint64_t seed) {
  std::map<std::string, std::vector<const SliceImage*>> by_subject;
  for (const SliceImage& img : images) {
    if (is_augmented_id(img.sample_id)) continue;
    const auto it = labels.find(img.sample_id);
    if (it != labels.end() && it->second == plan.minority_label) by_subject[img.sample_id].push_back(&img);
  }
  std::vector<SliceImage> out;
  std::size_t subject_index = 0;
  for (const auto& [subject, visits] : by_subject) {
    for (std::size_t c = 1; c <= plan.copies_per_subject; ++c) {
      Rng rng = make_rng(seed, {0x524F54, subject_index, c});
      const double angle = random_rotation_angle(rng);
      for (const SliceImage* img : visits) {
        const Tensor rotated = rotate_augment(img->to_tensor(), angle);
        SliceImage copy;
        copy.sample_id = augmented_sample_id(subject, c);
        copy.visit = img->visit;
        copy.side = img->side;
        const auto v = rotated.values();
        copy.pixels.resize(img->side * img->side);
        for (std::size_t i = 0; i < copy.pixels.size(); ++i) copy.pixels[i] = static_cast<float>(v[i]);
        out.push_back(std::move(copy));
      }
    }
    ++subject_index;
  }
  return out;
}

Tensor classification_loss(const Tensor& probs, std::span<const int> labels, LossKind kind,
                           const FocalLossConfig& focal) {
  switch (kind) {
    case LossKind::cross_entropy: return cross_entropy(probs, one_hot(labels, probs.dim(1)));
    case LossKind::focal: return focal_loss(probs, one_hot(labels, probs.dim(1)), focal);
    case LossKind::bce: return bce_loss(slice_cols(probs, probs.dim(1) - 1, probs.dim(1)), labels);
  }
  throw ConfigError("unknown loss kind");
}

Evaluation evaluate_classifier(const SequenceClassifier& model, std::span<const FeatureSequence> sequences,
                               LossKind loss, const FocalLossConfig& focal) {
  if (sequences.empty()) throw InputError("evaluate: no sequences");
  Evaluation out;
  std::vector<int> predictions, labels;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < sequences.size(); start += kEvalChunk) {
    const std::size_t end = std::min(sequences.size(), start + kEvalChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    std::vector<int> chunk_labels;
    for (std::size_t i : idx) chunk_labels.push_back(sequences[i].label);
    const Tensor logits = model.forward(batch_steps(sequences, idx), false, nullptr);
    const Tensor probs = model.probabilities(logits).detach();
    loss_sum += classification_loss(probs, chunk_labels, loss, focal).item() * static_cast<double>(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double p = probs.at(r, 1);
      out.p_positive.push_back(p);
      predictions.push_back(p >= 0.5 ? 1 : 0);
    }
    labels.insert(labels.end(), chunk_labels.begin(), chunk_labels.end());
  }
  out.metrics = confusion_and_metrics(predictions, labels);
  out.loss = loss_sum / static_cast<double>(sequences.size());
  return out;
}

PredictorTrainer::PredictorTrainer(const BiLstmConfig& model_cfg, const TrainConfig& cfg,
                                   std::span<const FeatureSequence> sequences, const FoldIndices& split,
                                   std::size_t fold)
    : model_cfg_(model_cfg),
      cfg_(cfg),
      fold_(fold),
      model_(model_cfg, make_rng(cfg.seed, {fold, 0x4D4F44454C})()),
      optimizer_(model_.parameters(), cfg.adam),
      rng_(make_rng(cfg.seed, {fold})) {
  cfg_.validate();
  if (cfg_.phase != Phase::predictor) throw ConfigError("predictor trainer needs a predictor-phase config");
  if (split.train.empty() || split.validation.empty()) throw InputError("predictor trainer: empty split");
  normalizer_.fit(sequences, split.train);
  if (normalizer_.mean().size() != model_cfg_.input_width) {
    throw DimensionError("predictor trainer: sequences are " + std::to_string(normalizer_.mean().size()) +
                         " wide, model expects " + std::to_string(model_cfg_.input_width));
  }
  for (std::size_t i : split.train) train_.push_back(normalizer_.apply(sequences[i]));
  for (std::size_t i : split.validation) validation_.push_back(normalizer_.apply(sequences[i]));
}

EpochRecord PredictorTrainer::run_epoch() {
  if (epoch_ >= cfg_.epochs) throw InputError("predictor trainer: all epochs already run");
  ++epoch_;
  const double lr = lr_schedule(epoch_, cfg_);
  const ParamList params = model_.parameters();
  const std::vector<std::size_t> order = shuffled(train_.size(), rng_);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg_.batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    std::vector<int> labels;
    for (std::size_t i : idx) labels.push_back(train_[i].label);
    const Tensor logits = model_.forward(batch_steps(train_, idx), true, &rng_);
    const Tensor probs = model_.probabilities(logits);
    const Tensor loss = classification_loss(probs, labels, cfg_.loss, cfg_.focal);
    check_loss(loss, fold_, epoch_, batch);
    zero_grads(params);
    loss.backward();
    optimizer_.step(lr);
    loss_sum += loss.item() * static_cast<double>(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if ((probs.at(r, 1) >= 0.5 ? 1 : 0) == labels[r]) ++correct;
    }
  }
  zero_grads(params);
  const Evaluation val = evaluate_validation();
  const double n = static_cast<double>(train_.size());
  return {fold_, epoch_, lr, loss_sum / n, val.loss, static_cast<double>(correct) / n, val.metrics.accuracy};
}

Evaluation PredictorTrainer::evaluate_validation() const {
  return evaluate_classifier(model_, validation_, cfg_.loss, cfg_.focal);
}

Checkpoint PredictorTrainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "predictor";
  ckpt.architecture = predictor_architecture(model_cfg_, cfg_);
  ckpt.epoch = epoch_;
  ckpt.fold = fold_;
  ckpt.rng_state = rng_to_string(rng_);
  ckpt.tensors = snapshot(model_.parameters());
  ckpt.tensors.emplace_back("norm.mean", Tensor({normalizer_.mean().size()}, normalizer_.mean()));
  ckpt.tensors.emplace_back("norm.std", Tensor({normalizer_.stddev().size()}, normalizer_.stddev()));
  ckpt.moments = optimizer_.moments();
  return ckpt;
}

void PredictorTrainer::restore(const Checkpoint& ckpt) {
  check_architecture(ckpt, "predictor", predictor_architecture(model_cfg_, cfg_));
  if (ckpt.fold != fold_) throw InputError("checkpoint: fold differs from the trainer's fold");
  const auto mean = ckpt.tensor("norm.mean").values();
  const auto stddev = ckpt.tensor("norm.std").values();
  if (!std::equal(mean.begin(), mean.end(), normalizer_.mean().begin(), normalizer_.mean().end()) ||
      !std::equal(stddev.begin(), stddev.end(), normalizer_.stddev().begin(), normalizer_.stddev().end())) {
    throw InputError("checkpoint: normalization statistics differ; it was trained on other data");
  }
  load_params(model_.parameters(), ckpt.tensors);
  optimizer_.set_moments(ckpt.moments);
  rng_ = rng_from_string(ckpt.rng_state);
  epoch_ = ckpt.epoch;
}

Predictor predictor_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "predictor") throw InputError("checkpoint: expected a predictor checkpoint, found " + ckpt.kind);
  const auto model_cfg = config_from_json<BiLstmConfig>(ckpt.architecture.at("model"));
  const auto train_cfg = config_from_json<TrainConfig>(ckpt.architecture.at("train"));
  SequenceClassifier model(model_cfg, 0);
  load_params(model.parameters(), ckpt.tensors);
  const auto mean = ckpt.tensor("norm.mean").values();
  const auto stddev = ckpt.tensor("norm.std").values();
  return {std::move(model),
          ZScoreNormalizer::from_stats({mean.begin(), mean.end()}, {stddev.begin(), stddev.end()}), train_cfg.loss,
          train_cfg.focal};
}

Evaluation evaluate_predictor(const Predictor& predictor, std::span<const FeatureSequence> raw_sequences) {
  std::vector<FeatureSequence> normalized;
  normalized.reserve(raw_sequences.size());
  const bool strip = predictor.model.config().input_width == kImageFeatureWidth;
  for (const FeatureSequence& s : raw_sequences) {
    normalized.push_back(predictor.normalizer.apply(strip && s.width == kSequenceWidth ? without_biomarkers(s) : s));
  }
  return evaluate_classifier(predictor.model, normalized, predictor.loss, predictor.focal);
}

MetricSummary summarize(std::span<const FoldResult> folds) {
  MetricSummary out;
  if (folds.empty()) return out;
  const auto mean_of = [&](auto get) -> std::optional<double> {
    double total = 0.0;
    std::size_t n = 0;
    for (const FoldResult& f : folds) {
      if (const std::optional<double> v = get(f.final_eval.metrics)) {
        total += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
  };
  out.accuracy = *mean_of([](const ClassificationMetrics& m) { return std::optional<double>(m.accuracy); });
  out.precision = mean_of([](const ClassificationMetrics& m) { return m.precision; });
  out.recall = mean_of([](const ClassificationMetrics& m) { return m.recall; });
  out.f1 = mean_of([](const ClassificationMetrics& m) { return m.f1; });
  double loss = 0.0;
  for (const FoldResult& f : folds) {
    loss += f.final_eval.loss;
    out.confusion += f.final_eval.metrics.confusion;
  }
  out.loss = loss / static_cast<double>(folds.size());
  return out;
}

CrossValidation train_predictor(std::span<const FeatureSequence> sequences, const PredictorRunConfig& cfg) {
  cfg.train.validate();
  if (sequences.empty()) throw InputError("train_predictor: no sequences");
  std::vector<FeatureSequence> data;
  data.reserve(sequences.size());
  for (const FeatureSequence& s : sequences) data.push_back(cfg.drop_biomarkers ? without_biomarkers(s) : s);
  BiLstmConfig model_cfg = cfg.model;
  model_cfg.input_width = data.front().width;
  model_cfg.validate();

  const std::vector<Fold> folds = kfold_split(subjects_of(data), cfg.train.folds, cfg.train.seed);
  std::vector<FoldResult> results(folds.size());
  std::vector<std::exception_ptr> errors(folds.size());
  const auto run_fold = [&](std::size_t f) {
    FoldResult& r = results[f];
    r.fold = f;
    r.train_subjects = folds[f].train;
    r.validation_subjects = folds[f].validation;
    const FoldIndices split = fold_indices(data, folds[f]);
    r.train_sequences = split.train.size();
    r.validation_sequences = split.validation.size();
    PredictorTrainer trainer(model_cfg, cfg.train, data, split, f);
    double best = -1.0;
    for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
      r.curve.push_back(trainer.run_epoch());
      if (r.curve.back().val_acc > best) {
        best = r.curve.back().val_acc;
        r.best_epoch = trainer.epoch();
        r.best_val_acc = best;
        r.best_checkpoint = trainer.checkpoint();
        r.best_checkpoint.meta["validation_subjects"] = folds[f].validation;
      }
    }
    r.final_eval = trainer.evaluate_validation();
    r.final_checkpoint = trainer.checkpoint();
    r.final_checkpoint.meta["validation_subjects"] = folds[f].validation;
  };

  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, folds.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t f = next++; f < folds.size(); f = next++) {
      try {
        run_fold(f);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  CrossValidation cv;
  cv.folds = std::move(results);
  cv.mean = summarize(cv.folds);
  return cv;
}

std::string_view ablation_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::no_biomarkers: return "no_biomarkers";
    case AblationMode::vanilla_lstm: return "vanilla_lstm";
    case AblationMode::bce_loss: return "bce_loss";
  }
  return "?";
}

AblationMode parse_ablation(std::string_view name) {
  for (AblationMode m : {AblationMode::no_biomarkers, AblationMode::vanilla_lstm, AblationMode::bce_loss}) {
    if (ablation_name(m) == name) return m;
  }
  throw ConfigError("unknown ablation mode '" + std::string(name) +
                    "' (expected no_biomarkers, vanilla_lstm or bce_loss)");
}

VariantInfo describe_variant(const std::string& name, const PredictorRunConfig& cfg) {
  VariantInfo info;
  info.name = name;
  info.input_width = cfg.drop_biomarkers ? kImageFeatureWidth : kSequenceWidth;
  BiLstmConfig model = cfg.model;
  model.input_width = info.input_width;
  info.recurrent_params = count_recurrent_params(model);
  info.bidirectional = model.bidirectional;
  info.loss = cfg.train.loss;
  return info;
}

PredictorRunConfig ablated_config(AblationMode mode, const PredictorRunConfig& base) {
  PredictorRunConfig cfg = base;
  switch (mode) {
    case AblationMode::no_biomarkers: cfg.drop_biomarkers = true; break;
    case AblationMode::vanilla_lstm: cfg.model.bidirectional = false; break;
    case AblationMode::bce_loss: cfg.train.loss = LossKind::bce; break;
  }
  return cfg;
}

AblationResult run_ablation(AblationMode mode, std::span<const FeatureSequence> sequences,
                            const PredictorRunConfig& base, const CrossValidation* baseline) {
  AblationResult result;
  result.mode = mode;
  const PredictorRunConfig ablated = ablated_config(mode, base);
  result.baseline_info = describe_variant("baseline", base);
  result.ablated_info = describe_variant(std::string(ablation_name(mode)), ablated);
  result.baseline = baseline ? *baseline : train_predictor(sequences, base);
  result.ablated = train_predictor(sequences, ablated);
  return result;
}

}  // namespace adprog
