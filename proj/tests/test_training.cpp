#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "adprog/checkpoint.hpp"
#include "adprog/error.hpp"
#include "adprog/optim.hpp"
#include "adprog/train.hpp"
#include "support.hpp"

using namespace adprog;

namespace {

// Sequences whose first few features drift upward over time for label 1.
std::vector<FeatureSequence> drifting_sequences(std::size_t n0, std::size_t n1, std::size_t width, std::uint64_t seed) {
  std::vector<FeatureSequence> out;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < n0 + n1; ++i) {
    FeatureSequence s;
    char id[16];
    std::snprintf(id, sizeof id, "S%04zu", i);
    s.sample_id = s.subject_id = id;
    s.label = i < n0 ? 0 : 1;
    s.width = width;
    s.values.resize(kTimepoints * width);
    for (std::size_t t = 0; t < kTimepoints; ++t)
      for (std::size_t f = 0; f < width; ++f) {
        const double drift = f < 4 && s.label == 1 ? 0.6 * static_cast<double>(t) : 0.0;
        s.values[t * width + f] = drift + g(rng);
      }
    out.push_back(std::move(s));
  }
  return out;
}

BiLstmConfig small_lstm(std::size_t width) {
  BiLstmConfig cfg;
  cfg.input_width = width;
  cfg.hidden = 6;
  return cfg;
}

FoldIndices first_fold(std::span<const FeatureSequence> seqs, std::size_t k = 5) {
  return fold_indices(seqs, kfold_split(subjects_of(seqs), k, 42)[0]);
}

DiagnosticCohort tiny_diagnostic(std::size_t per_class, std::size_t side) {
  DiagnosticCohortConfig cfg;
  cfg.per_class = per_class;
  cfg.image_side = side;
  return synth_diagnostic(cfg);
}

void check_same_params(const ParamList& a, const ParamList& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CAPTURE(a[i].name);
    CHECK(testing::bit_equal(a[i].tensor.values(), b[i].tensor.values()));
  }
}

}  // namespace

TEST_CASE("adam: a zero gradient never moves the parameter") {
  std::vector<double> w{1.0, -2.0, 3.5};
  const std::vector<double> zero(3, 0.0);
  AdamMoments state;
  for (int i = 0; i < 100; ++i) adam_step(w, zero, state, 1e-2);
  CHECK(w == std::vector<double>{1.0, -2.0, 3.5});
}

TEST_CASE("adam: the first step has magnitude lr whatever the gradient scale") {
  for (double g : {1e-6, 1.0, 1e6}) {
    std::vector<double> w{0.0};
    const std::vector<double> grad{g};
    AdamMoments state;
    adam_step(w, grad, state, 1e-3);
    CHECK(w[0] == doctest::Approx(-1e-3).epsilon(1e-4));
  }
}

TEST_CASE("adam: w^2 from w=1 at lr 0.1 falls monotonically to 0 and ends below 0.1") {
  std::vector<double> w{1.0};
  AdamMoments state;
  std::vector<double> path{1.0};
  for (std::size_t step = 1; step <= 200; ++step) {
    const std::vector<double> grad{2.0 * w[0]};
    adam_step(w, grad, state, 0.1);
    path.push_back(w[0]);
  }
  // Momentum carries w past 0 once; the approach itself is strictly decreasing.
  std::size_t cross = 1;
  while (cross < path.size() && path[cross] > 0.0) ++cross;
  REQUIRE(cross < path.size());
  for (std::size_t i = 1; i <= cross; ++i) CHECK(path[i] < path[i - 1]);
  std::size_t first_below = 0;
  while (std::abs(path[first_below]) >= 0.1) ++first_below;
  CHECK(first_below <= 200);
  for (std::size_t i = 150; i <= 200; ++i) CHECK(std::abs(path[i]) < 0.1);
}

TEST_CASE("adam: a non-finite gradient names the parameter and changes nothing") {
  Tensor a = Tensor::full({2}, 1.0, true);
  Tensor b = Tensor::full({2}, 1.0, true);
  Adam adam({{"alpha", "g", a}, {"beta", "g", b}});
  sum(add(a, mul(b, Tensor({2}, {1.0, NAN})))).backward();
  try {
    adam.step(0.1);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
  CHECK(a.at(0) == 1.0);
  CHECK(b.at(0) == 1.0);
  for (const auto& [name, m] : adam.moments()) CHECK(m.step == 0);
}

TEST_CASE("adam skips frozen parameters") {
  Tensor frozen = Tensor::full({2}, 1.0, false);
  Tensor live = Tensor::full({2}, 1.0, true);
  Adam adam({{"frozen", "g", frozen}, {"live", "g", live}});
  sum(mul(live, frozen)).backward();
  adam.step(0.1);
  CHECK(frozen.at(0) == 1.0);
  CHECK(live.at(0) < 1.0);
}

TEST_CASE("learning-rate schedule") {
  const TrainConfig paper = TrainConfig::predictor_paper();
  CHECK(lr_schedule(1, paper) == 1e-3);
  CHECK(lr_schedule(200, paper) == 1e-3);
  CHECK(lr_schedule(201, paper) == 1e-4);
  CHECK(lr_schedule(400, paper) == 1e-4);
  CHECK_THROWS_AS(lr_schedule(0, paper), InputError);
  CHECK_THROWS_AS(lr_schedule(401, paper), InputError);
  const TrainConfig desk = TrainConfig::predictor_desk();
  CHECK(lr_schedule(50, desk) == 1e-3);
  CHECK(lr_schedule(51, desk) == 1e-4);
  for (const TrainConfig& ext : {TrainConfig::extractor_desk(), TrainConfig::extractor_paper()}) {
    for (std::size_t e = 1; e <= ext.epochs; ++e) CHECK(lr_schedule(e, ext) == 1e-3);
  }
}

TEST_CASE("train config defaults and validation") {
  const TrainConfig p = TrainConfig::predictor_paper();
  CHECK(p.epochs == 400);
  CHECK(p.batch_size == 64);
  CHECK(p.adam.beta1 == 0.9);
  CHECK(p.adam.beta2 == 0.999);
  CHECK(p.adam.epsilon == 1e-8);
  CHECK(p.focal.gamma == 2.0);
  CHECK(p.folds == 5);
  CHECK(TrainConfig::extractor_paper().batch_size == 32);
  TrainConfig bad = p;
  bad.switch_epoch = 401;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(parse_loss("hinge"), ConfigError);
  CHECK(parse_loss("bce") == LossKind::bce);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  const auto seqs = drifting_sequences(12, 8, 5, 1);
  TrainConfig cfg = TrainConfig::predictor_desk();
  cfg.batch_size = 8;
  PredictorTrainer trainer(small_lstm(5), cfg, seqs, first_fold(seqs), 0);
  trainer.run_epoch();
  const Checkpoint ckpt = trainer.checkpoint();
  const std::string bytes = serialize_checkpoint(ckpt);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.epoch == 1);
  CHECK(back.kind == "predictor");
  CHECK(back.tensors.size() == ckpt.tensors.size());
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), InputError);
  std::string wrong = bytes;
  wrong[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(wrong), InputError);
}

TEST_CASE("predictor resume continues bit-exactly") {
  const auto seqs = drifting_sequences(15, 10, 5, 2);
  TrainConfig cfg = TrainConfig::predictor_desk();
  cfg.batch_size = 8;
  cfg.epochs = 6;
  cfg.switch_epoch = 3;
  const FoldIndices split = first_fold(seqs);
  PredictorTrainer straight(small_lstm(5), cfg, seqs, split, 0);
  PredictorTrainer first(small_lstm(5), cfg, seqs, split, 0);
  for (int e = 0; e < 4; ++e) {
    straight.run_epoch();
    first.run_epoch();
  }
  const auto dir = testing::scratch_dir("resume");
  save_checkpoint(dir / "p.ckpt", first.checkpoint());
  PredictorTrainer resumed(small_lstm(5), cfg, seqs, split, 0);
  resumed.restore(load_checkpoint(dir / "p.ckpt"));
  for (int e = 0; e < 2; ++e) {
    const EpochRecord a = straight.run_epoch();
    const EpochRecord b = resumed.run_epoch();
    CHECK(a.train_loss == b.train_loss);
    CHECK(a.val_loss == b.val_loss);
    CHECK(a.val_acc == b.val_acc);
  }
  check_same_params(straight.model().parameters(), resumed.model().parameters());
  CHECK(serialize_checkpoint(straight.checkpoint()) == serialize_checkpoint(resumed.checkpoint()));
}

TEST_CASE("restore rejects a mismatched architecture") {
  const auto seqs = drifting_sequences(10, 10, 5, 3);
  TrainConfig cfg = TrainConfig::predictor_desk();
  const FoldIndices split = first_fold(seqs);
  PredictorTrainer a(small_lstm(5), cfg, seqs, split, 0);
  BiLstmConfig other = small_lstm(5);
  other.hidden = 7;
  PredictorTrainer b(other, cfg, seqs, split, 0);
  CHECK_THROWS_AS(b.restore(a.checkpoint()), InputError);
}

TEST_CASE("normalizer statistics come from the fold's training subjects") {
  auto seqs = drifting_sequences(10, 10, 3, 4);
  const FoldIndices split = first_fold(seqs);
  PredictorTrainer base(small_lstm(3), TrainConfig::predictor_desk(), seqs, split, 0);
  for (std::size_t i : split.validation) seqs[i].values.assign(seqs[i].values.size(), 1e6);
  PredictorTrainer poked(small_lstm(3), TrainConfig::predictor_desk(), seqs, split, 0);
  CHECK(base.normalizer().mean() == poked.normalizer().mean());
  CHECK(base.normalizer().stddev() == poked.normalizer().stddev());
}

TEST_CASE("predictor learns a drifting signal and cross-validation reports every fold") {
  const auto seqs = drifting_sequences(40, 40, 5, 5);
  PredictorRunConfig cfg;
  cfg.model = small_lstm(5);
  cfg.train.epochs = 30;
  cfg.train.switch_epoch = 20;
  cfg.train.batch_size = 16;
  const CrossValidation cv = train_predictor(seqs, cfg);
  REQUIRE(cv.folds.size() == 5);
  std::set<std::string> validated;
  for (const FoldResult& f : cv.folds) {
    CHECK(f.curve.size() == 30);
    CHECK(f.final_eval.metrics.confusion.total() == f.validation_sequences);
    for (const auto& id : f.validation_subjects) CHECK(validated.insert(id).second);
    std::set<std::string> train(f.train_subjects.begin(), f.train_subjects.end());
    for (const auto& id : f.validation_subjects) CHECK(train.count(id) == 0);
  }
  CHECK(validated.size() == 80);
  CHECK(cv.mean.confusion.total() == 80);
  CHECK(cv.mean.accuracy > 0.75);
}

TEST_CASE("parallel folds match sequential folds") {
  const auto seqs = drifting_sequences(15, 15, 4, 6);
  PredictorRunConfig cfg;
  cfg.model = small_lstm(4);
  cfg.train.epochs = 3;
  cfg.train.switch_epoch = 2;
  cfg.train.batch_size = 8;
  const CrossValidation one = train_predictor(seqs, cfg);
  cfg.jobs = 3;
  const CrossValidation three = train_predictor(seqs, cfg);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(serialize_checkpoint(one.folds[f].final_checkpoint) == serialize_checkpoint(three.folds[f].final_checkpoint));
  }
}

TEST_CASE("train loss does not rise across the schedule switch") {
  const auto seqs = drifting_sequences(60, 60, 8, 7);
  TrainConfig cfg = TrainConfig::predictor_desk();
  cfg.epochs = 60;
  cfg.switch_epoch = 50;
  cfg.batch_size = 16;
  PredictorTrainer trainer(small_lstm(8), cfg, seqs, first_fold(seqs), 0);
  std::vector<EpochRecord> curve;
  for (std::size_t e = 0; e < cfg.epochs; ++e) curve.push_back(trainer.run_epoch());
  double before = 0.0, after = 0.0;
  for (std::size_t e = 41; e <= 50; ++e) before += curve[e - 1].train_loss / 10.0;
  for (std::size_t e = 51; e <= 60; ++e) after += curve[e - 1].train_loss / 10.0;
  CHECK(after <= before);
}

TEST_CASE("summary averages defined ratios and sums confusion") {
  FoldResult a, b;
  a.final_eval.metrics = metrics_from_confusion({2, 2, 0, 0});
  b.final_eval.metrics = metrics_from_confusion({0, 4, 0, 0});
  const FoldResult folds[] = {a, b};
  const MetricSummary s = summarize(folds);
  CHECK(s.accuracy == 1.0);
  CHECK(*s.precision == 1.0);
  CHECK(s.confusion.total() == 8);
}

TEST_CASE("ablation variants") {
  PredictorRunConfig base;
  base.model.hidden = 256;
  const VariantInfo b = describe_variant("baseline", base);
  CHECK(b.input_width == 273);
  CHECK(b.recurrent_params == 1085440);
  const VariantInfo v = describe_variant("vanilla", ablated_config(AblationMode::vanilla_lstm, base));
  CHECK(v.recurrent_params == 542720);
  CHECK_FALSE(v.bidirectional);
  CHECK(describe_variant("nb", ablated_config(AblationMode::no_biomarkers, base)).input_width == 256);
  CHECK(ablated_config(AblationMode::bce_loss, base).train.loss == LossKind::bce);
  CHECK_THROWS_AS(parse_ablation("dropout"), ConfigError);
  CHECK(parse_ablation("vanilla_lstm") == AblationMode::vanilla_lstm);
}

TEST_CASE("extractor smoke run beats 3-class chance on training data") {
  const DiagnosticCohort cohort = tiny_diagnostic(20, 64);
  TrainConfig cfg = TrainConfig::extractor_desk();
  cfg.epochs = cfg.switch_epoch = 10;
  cfg.batch_size = 4;
  const ExtractorRun run = train_extractor(cohort, ExtractorConfig{}, cfg);
  REQUIRE(run.curve.size() == 10);
  CHECK(run.curve.back().train_acc > 0.40);
  CHECK(run.best_epoch >= 1);

  // Frozen encoder weights match a freshly built model with the same seed.
  const FeatureExtractor fresh(ExtractorConfig{}, cfg.seed);
  const FeatureExtractor trained = extractor_from_checkpoint(run.final_checkpoint);
  const ParamList before = fresh.parameters(), after = trained.parameters();
  std::size_t frozen = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].tensor.requires_grad()) continue;
    ++frozen;
    CAPTURE(before[i].name);
    CHECK(testing::bit_equal(before[i].tensor.values(), after[i].tensor.values()));
  }
  CHECK(frozen > 0);
}

TEST_CASE("extractor resume continues bit-exactly") {
  const DiagnosticCohort cohort = tiny_diagnostic(3, 32);
  std::vector<LabeledImage> train, val;
  for (const SliceImage& img : cohort.images) {
    (train.size() < 6 ? train : val).push_back({img.sample_id, img.to_tensor(), cohort.labels.at(img.sample_id)});
  }
  TrainConfig cfg = TrainConfig::extractor_desk();
  cfg.epochs = cfg.switch_epoch = 3;
  cfg.batch_size = 4;
  ExtractorTrainer straight(ExtractorConfig{}, cfg, train, val);
  ExtractorTrainer first(ExtractorConfig{}, cfg, train, val);
  straight.run_epoch();
  first.run_epoch();
  ExtractorTrainer resumed(ExtractorConfig{}, cfg, train, val);
  resumed.restore(deserialize_checkpoint(serialize_checkpoint(first.checkpoint())));
  for (int e = 0; e < 2; ++e) {
    const EpochRecord a = straight.run_epoch(), b = resumed.run_epoch();
    CHECK(a.train_loss == b.train_loss);
    CHECK(a.val_loss == b.val_loss);
  }
  check_same_params(straight.model().parameters(), resumed.model().parameters());
}

TEST_CASE("feature extraction is deterministic and tracks progression") {
  const FeatureExtractor model(ExtractorConfig{}, 3);
  SyntheticCohortConfig cfg;
  cfg.n_smci = 1;
  cfg.n_pmci = 1;
  cfg.missing_m18_rate = 0.0;
  const SyntheticCohort c = synth_generate(cfg);
  const auto a = extract_features(model, c.images), b = extract_features(model, c.images);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].features.size() == 256);
    CHECK(testing::bit_equal(a[i].features, b[i].features));
  }
  // The pMCI subject is rows 4..7; its baseline and m18 features differ.
  double d2 = 0.0;
  for (std::size_t f = 0; f < 256; ++f) d2 += std::pow(a[4].features[f] - a[7].features[f], 2);
  CHECK(d2 > 0.0);
}

TEST_CASE("minority augmentation shares one angle per copy and keeps ids traceable") {
  SyntheticCohortConfig cfg;
  cfg.n_smci = 4;
  cfg.n_pmci = 2;
  cfg.image_side = 32;
  cfg.missing_m18_rate = 0.0;
  const SyntheticCohort c = synth_generate(cfg);
  const RebalancePlan plan = plan_rebalance(4, 2, 3);
  const auto copies = augment_minority(c.images, c.labels, plan, 42);
  CHECK(copies.size() == 2 * 2 * 4);
  for (const SliceImage& img : copies) {
    CHECK(is_augmented_id(img.sample_id));
    CHECK(c.labels.at(source_subject(img.sample_id)) == 1);
  }
  const auto again = augment_minority(c.images, c.labels, plan, 42);
  for (std::size_t i = 0; i < copies.size(); ++i) CHECK(copies[i].pixels == again[i].pixels);
}
