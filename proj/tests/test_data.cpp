#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "adprog/augment.hpp"
#include "adprog/error.hpp"
#include "adprog/sequences.hpp"
#include "adprog/synth.hpp"
#include "support.hpp"

using namespace adprog;

namespace {

const std::filesystem::path kFixtures = ADPROG_FIXTURE_DIR;

BiomarkerRow full_row(const std::string& id, Visit v, double base) {
  BiomarkerRow r;
  r.subject_id = id;
  r.visit = v;
  for (std::size_t f = 0; f < kBiomarkerCount; ++f) r.values[f] = base + static_cast<double>(f);
  return r;
}

FeatureCacheRow cache_row(const std::string& id, Visit v, double base) {
  FeatureCacheRow r;
  r.sample_id = id;
  r.visit = v;
  r.features.resize(kImageFeatureWidth);
  for (std::size_t f = 0; f < kImageFeatureWidth; ++f) r.features[f] = base + 0.001 * static_cast<double>(f);
  return r;
}

FeatureSequence constant_sequence(const std::string& id, int label, std::size_t width, double value) {
  FeatureSequence s;
  s.sample_id = s.subject_id = id;
  s.label = label;
  s.width = width;
  s.values.assign(kTimepoints * width, value);
  return s;
}

std::vector<SubjectLabel> make_subjects(std::size_t n0, std::size_t n1) {
  std::vector<SubjectLabel> out;
  for (std::size_t i = 0; i < n0 + n1; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "S%04zu", i);
    out.push_back({id, i < n0 ? 0 : 1});
  }
  return out;
}

}  // namespace

TEST_CASE("well-formed biomarker file parses every field") {
  const BiomarkerTable t = load_biomarkers(kFixtures / "biomarkers_valid.csv");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.warnings.empty());
  CHECK(t.rows[0].complete());
  CHECK(t.rows[1].visit == Visit::m06);
  CHECK(*t.rows[0].values[*biomarker_index("MMSE")] == 27.0);
  CHECK(*t.rows[1].values[*biomarker_index("ICV")] == 1534900.0);
}

TEST_CASE("missing MMSE column is a schema error naming it") {
  try {
    load_biomarkers(kFixtures / "biomarkers_no_mmse.csv");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.column() == "MMSE");
  }
}

TEST_CASE("NA marks a missing value; column order is free and extras warn") {
  const BiomarkerTable t = load_biomarkers(kFixtures / "biomarkers_na_reordered.csv");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].subject_id == "S0002");
  CHECK(t.rows[0].complete());
  CHECK_FALSE(t.rows[1].values[*biomarker_index("Hippocampus")].has_value());
  CHECK(*t.rows[1].values[*biomarker_index("CDRSB")] == 2.0);
  REQUIRE(t.warnings.size() == 1);
  CHECK(t.warnings[0].find("site") != std::string::npos);
}

TEST_CASE("an unparseable value reports its line") {
  try {
    load_biomarkers(kFixtures / "biomarkers_bad_value.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("CDRSB") != std::string::npos);
  }
}

TEST_CASE("unknown visit codes and short rows are rejected") {
  std::ostringstream head;
  head << "subject_id,visit_code";
  for (auto n : kBiomarkerNames) head << ',' << n;
  std::string cells;
  for (std::size_t i = 0; i < kBiomarkerCount; ++i) cells += ",1";
  std::istringstream bad_visit(head.str() + "\nS1,m24" + cells + "\n");
  CHECK_THROWS_AS(parse_biomarkers(bad_visit), ParseError);
  std::istringstream short_row(head.str() + "\nS1,bl,1,2\n");
  CHECK_THROWS_AS(parse_biomarkers(short_row), ParseError);
}

TEST_CASE("biomarker files round-trip exactly") {
  std::vector<BiomarkerRow> rows{full_row("S1", Visit::bl, 0.1), full_row("S1", Visit::m06, 1.0 / 3.0)};
  rows[1].values[4].reset();
  std::istringstream in(format_biomarkers(rows));
  const BiomarkerTable back = parse_biomarkers(in);
  REQUIRE(back.rows.size() == 2);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t f = 0; f < kBiomarkerCount; ++f) CHECK(back.rows[r].values[f] == rows[r].values[f]);
}

TEST_CASE("forward fill: m18 takes m12") {
  const std::array<std::optional<int>, kTimepoints> visits{0, 6, 12, std::nullopt};
  const FilledVisits<int> out = forward_fill("S1", visits);
  CHECK(out.visits == std::array<int, kTimepoints>{0, 6, 12, 12});
  REQUIRE(out.fills.size() == 1);
  CHECK(out.fills[0].filled == Visit::m18);
  CHECK(out.fills[0].source == Visit::m12);
}

TEST_CASE("forward fill: complete visits are unchanged") {
  const FilledVisits<int> out = forward_fill<int>("S1", {0, 6, 12, 18});
  CHECK(out.visits == std::array<int, kTimepoints>{0, 6, 12, 18});
  CHECK(out.fills.empty());
}

TEST_CASE("forward fill: baseline only fills three visits") {
  const FilledVisits<int> out = forward_fill<int>("S1", {0, std::nullopt, std::nullopt, std::nullopt});
  CHECK(out.visits == std::array<int, kTimepoints>{0, 0, 0, 0});
  REQUIRE(out.fills.size() == 3);
  for (const FillRecord& f : out.fills) CHECK(f.source == Visit::bl);
}

TEST_CASE("forward fill never reads later visits") {
  const FilledVisits<int> out = forward_fill<int>("S1", {0, std::nullopt, 12, std::nullopt});
  CHECK(out.visits == std::array<int, kTimepoints>{0, 0, 12, 12});
  CHECK_THROWS_AS(forward_fill<int>("S1", {std::nullopt, 6, 12, 18}), MissingBaseline);
}

TEST_CASE("field-level fill copies the previous visit's value") {
  std::array<BiomarkerRow, kTimepoints> v{full_row("S1", Visit::bl, 0), full_row("S1", Visit::m06, 10),
                                          full_row("S1", Visit::m12, 20), full_row("S1", Visit::m18, 30)};
  v[2].values[3].reset();
  v[3].values[3].reset();
  const auto fills = fill_biomarker_fields(v);
  CHECK(fills.size() == 2);
  CHECK(*v[2].values[3] == 13.0);
  CHECK(*v[3].values[3] == 13.0);
  CHECK(fills[0].field == kBiomarkerNames[3]);
  v[0].values[0].reset();
  CHECK_THROWS_AS(fill_biomarker_fields(v), MissingBaseline);
}

TEST_CASE("one subject with four visits becomes one 4x273 sequence") {
  std::vector<FeatureCacheRow> cache;
  std::vector<BiomarkerRow> markers;
  for (Visit v : kVisits) {
    cache.push_back(cache_row("S1", v, 100.0 * static_cast<double>(visit_index(v))));
    markers.push_back(full_row("S1", v, 1000.0 * static_cast<double>(visit_index(v) + 1)));
  }
  const AssemblyResult r = assemble_sequences(cache, markers, {{"S1", 1}});
  REQUIRE(r.sequences.size() == 1);
  const FeatureSequence& s = r.sequences[0];
  CHECK(s.width == 273);
  CHECK(s.values.size() == 4 * 273);
  CHECK(s.label == 1);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(s.step(t)[0] == 100.0 * static_cast<double>(t));
    CHECK(s.step(t)[255] == doctest::Approx(100.0 * static_cast<double>(t) + 0.255));
    CHECK(s.step(t)[256] == 1000.0 * static_cast<double>(t + 1));
    CHECK(s.step(t)[272] == 1000.0 * static_cast<double>(t + 1) + 16.0);
  }
  CHECK(without_biomarkers(s).values.size() == 4 * 256);
}

TEST_CASE("assembly fills a missing m18 and excludes broken subjects") {
  std::vector<FeatureCacheRow> cache;
  std::vector<BiomarkerRow> markers;
  for (Visit v : {Visit::bl, Visit::m06, Visit::m12}) {
    cache.push_back(cache_row("A", v, static_cast<double>(visit_index(v))));
    markers.push_back(full_row("A", v, 10.0 * static_cast<double>(visit_index(v))));
  }
  // B has images but no biomarkers at all; C lacks a baseline; D has no label.
  for (Visit v : kVisits) cache.push_back(cache_row("B", v, 0));
  for (Visit v : {Visit::m06, Visit::m12}) {
    cache.push_back(cache_row("C", v, 0));
    markers.push_back(full_row("C", v, 0));
  }
  for (Visit v : kVisits) {
    cache.push_back(cache_row("D", v, 0));
    markers.push_back(full_row("D", v, 0));
  }
  const AssemblyResult r = assemble_sequences(cache, markers, {{"A", 0}, {"B", 1}, {"C", 0}});
  REQUIRE(r.sequences.size() == 1);
  const FeatureSequence& a = r.sequences[0];
  CHECK(testing::bit_equal(a.step(3), a.step(2)));
  CHECK_FALSE(r.fills.empty());
  std::set<std::string> excluded;
  for (const SubjectExclusion& e : r.excluded) excluded.insert(e.sample_id);
  CHECK(excluded == std::set<std::string>{"B", "C", "D"});
}

TEST_CASE("augmented samples reuse the source subject's biomarkers and label") {
  std::vector<FeatureCacheRow> cache;
  std::vector<BiomarkerRow> markers;
  for (Visit v : kVisits) {
    cache.push_back(cache_row("S7", v, 1.0));
    cache.push_back(cache_row(augmented_sample_id("S7", 1), v, 2.0));
    markers.push_back(full_row("S7", v, 5.0));
  }
  const AssemblyResult r = assemble_sequences(cache, markers, {{"S7", 1}});
  REQUIRE(r.sequences.size() == 2);
  const FeatureSequence& copy = r.sequences[1];
  CHECK(copy.augmented);
  CHECK(copy.subject_id == "S7");
  CHECK(copy.label == 1);
  CHECK(copy.step(0)[0] == 2.0);
  CHECK(copy.step(0)[256] == r.sequences[0].step(0)[256]);
  CHECK(source_subject("S7~aug2") == "S7");
  CHECK(is_augmented_id("S7~aug2"));
  CHECK_FALSE(is_augmented_id("S7"));
}

TEST_CASE("feature cache round-trips exactly") {
  const auto dir = testing::scratch_dir("cache");
  std::vector<FeatureCacheRow> rows{cache_row("S1", Visit::bl, 1.0 / 7.0), cache_row("S1~aug1", Visit::m18, -2.5e-9)};
  write_feature_cache(dir / "f.tsv", rows);
  const auto back = load_feature_cache(dir / "f.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].sample_id == "S1~aug1");
  CHECK(back[1].visit == Visit::m18);
  CHECK(testing::bit_equal(back[0].features, rows[0].features));
  CHECK(testing::bit_equal(back[1].features, rows[1].features));
}

TEST_CASE("normalizer statistics come from the training split only") {
  std::vector<FeatureSequence> seqs{constant_sequence("a", 0, 2, 1.0), constant_sequence("b", 0, 2, 3.0),
                                    constant_sequence("c", 1, 2, 1000.0)};
  for (std::size_t t = 0; t < 4; ++t) seqs[1].values[t * 2 + 1] = static_cast<double>(t);
  ZScoreNormalizer norm;
  const std::size_t train[] = {0, 1};
  norm.fit(seqs, train);
  CHECK(norm.mean()[0] == 2.0);
  CHECK(norm.stddev()[0] == 1.0);
  // Changing a validation value leaves the statistics alone.
  seqs[2].values.assign(seqs[2].values.size(), -5.0e6);
  ZScoreNormalizer again;
  again.fit(seqs, train);
  CHECK(again.mean() == norm.mean());
  CHECK(again.stddev() == norm.stddev());
  CHECK(norm.apply(seqs[1]).values[0] == 1.0);
}

TEST_CASE("a zero-variance training feature normalizes to 0") {
  std::vector<FeatureSequence> seqs{constant_sequence("a", 0, 3, 4.0), constant_sequence("b", 1, 3, 4.0)};
  seqs[1].values[1] = 9.0;
  ZScoreNormalizer norm;
  const std::size_t train[] = {0, 1};
  norm.fit(seqs, train);
  const FeatureSequence out = norm.apply(constant_sequence("c", 0, 3, 123.0));
  CHECK(out.values[0] == 0.0);
  CHECK(out.values[2] == 0.0);
  CHECK(std::isfinite(out.values[1]));
  CHECK(out.values[1] != 0.0);
}

TEST_CASE("kfold: 10 subjects into 5 folds of 2") {
  const auto subjects = make_subjects(5, 5);
  const auto folds = kfold_split(subjects, 5, 3);
  REQUIRE(folds.size() == 5);
  std::multiset<std::string> seen;
  for (const Fold& f : folds) {
    CHECK(f.validation.size() == 2);
    CHECK(f.train.size() == 8);
    seen.insert(f.validation.begin(), f.validation.end());
  }
  CHECK(seen.size() == 10);
  CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == 10);
}

TEST_CASE("kfold: per-fold class ratio stays within one subject of the global ratio") {
  const auto subjects = make_subjects(390, 140);
  std::map<std::string, int> label;
  for (const auto& s : subjects) label[s.subject_id] = s.label;
  const auto folds = kfold_split(subjects, 5, 42);
  for (const Fold& f : folds) {
    double pos = 0;
    for (const auto& id : f.validation) pos += label[id];
    const double expected = 140.0 * static_cast<double>(f.validation.size()) / 530.0;
    CHECK(std::abs(pos - expected) <= 1.0);
    std::set<std::string> train(f.train.begin(), f.train.end());
    for (const auto& id : f.validation) CHECK(train.count(id) == 0);
  }
}

TEST_CASE("kfold is deterministic per seed") {
  const auto subjects = make_subjects(40, 20);
  const auto a = kfold_split(subjects, 5, 9), b = kfold_split(subjects, 5, 9), c = kfold_split(subjects, 5, 10);
  bool differs = false;
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(a[f].validation == b[f].validation);
    differs |= a[f].validation != c[f].validation;
  }
  CHECK(differs);
}

TEST_CASE("kfold errors") {
  CHECK_THROWS_AS(kfold_split(make_subjects(5, 5), 1, 0), ConfigError);
  try {
    kfold_split(make_subjects(8, 3), 5, 0);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("k <= 3") != std::string::npos);
  }
}

TEST_CASE("rebalance 390/140 with multiplier 3 gives 390/420") {
  const RebalancePlan plan = plan_rebalance(390, 140, 3);
  CHECK(plan.minority_label == 1);
  CHECK(plan.copies_per_subject == 2);
  CHECK(plan.minority_after() == 420);
  CHECK(plan_rebalance(390, 140).minority_after() == 420);
  CHECK(plan_rebalance(200, 200).copies_per_subject == 0);
  CHECK_THROWS_AS(plan_rebalance(10, 0), InputError);
}

TEST_CASE("rebalanced copies keep provenance and stay out of other folds") {
  std::vector<FeatureSequence> seqs;
  for (const auto& s : make_subjects(20, 8)) seqs.push_back(constant_sequence(s.subject_id, s.label, 3, 1.0));
  const RebalancePlan plan = plan_rebalance(20, 8, 3);
  const auto out = rebalance(seqs, plan, [](const FeatureSequence& src, std::size_t copy) {
    FeatureSequence s = src;
    for (double& v : s.values) v += static_cast<double>(copy);
    return s;
  });
  CHECK(out.size() == 20 + 8 * 3);
  std::size_t copies = 0;
  for (const auto& s : out) {
    if (!s.augmented) continue;
    ++copies;
    CHECK(s.label == 1);
    CHECK(source_subject(s.sample_id) == s.subject_id);
  }
  CHECK(copies == 16);
  const auto folds = kfold_split(subjects_of(out), 4, 1);
  for (const Fold& f : folds) {
    const FoldIndices idx = fold_indices(out, f);
    std::set<std::string> val(f.validation.begin(), f.validation.end());
    for (std::size_t i : idx.train) CHECK(val.count(out[i].subject_id) == 0);
    for (std::size_t i : idx.validation) CHECK_FALSE(out[i].augmented);
  }
  std::vector<FeatureSequence> balanced;
  for (const auto& s : make_subjects(4, 4)) balanced.push_back(constant_sequence(s.subject_id, s.label, 3, 1.0));
  CHECK(rebalance(balanced, plan_rebalance(4, 4), nullptr).size() == 8);
}

TEST_CASE("rotation by 0 degrees is the identity") {
  Rng rng = make_rng(1);
  const Tensor img = normal_tensor({3, 17, 17}, 1.0, rng);
  CHECK(testing::max_abs_diff(rotate_augment(img, 0.0).values(), img.values()) <= 1e-12);
}

TEST_CASE("rotating +5 then -5 approximately recovers a smooth image") {
  const std::size_t side = 48;
  std::vector<double> v(3 * side * side);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const double u = (static_cast<double>(x) - 23.5) / 10.0, w = (static_cast<double>(y) - 23.5) / 10.0;
        v[(c * side + y) * side + x] = std::exp(-(u * u + w * w)) * (1.0 + 0.1 * static_cast<double>(c));
      }
  const Tensor img({3, side, side}, v);
  const Tensor back = rotate_augment(rotate_augment(img, 5.0), -5.0);
  CHECK(testing::max_abs_diff(back.values(), img.values()) <= 0.1);
}

TEST_CASE("a constant image keeps a constant interior") {
  const std::size_t side = 40;
  const Tensor img = Tensor::full({3, side, side}, 2.5);
  const Tensor out = rotate_augment(img, 4.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 6; y < side - 6; ++y)
      for (std::size_t x = 6; x < side - 6; ++x) CHECK(out.values()[(c * side + y) * side + x] == doctest::Approx(2.5));
  // Corners rotate in from outside the frame.
  CHECK(out.values()[0] < 2.5);
}

TEST_CASE("rotation limits") {
  const Tensor img = Tensor::full({1, 8, 8}, 1.0);
  CHECK_THROWS_AS(rotate_augment(img, 5.01), ConfigError);
  CHECK_THROWS_AS(rotate_augment(img, -6.0), ConfigError);
  CHECK_NOTHROW(rotate_augment(img, -5.0));
  Rng rng = make_rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double a = random_rotation_angle(rng);
    CHECK(std::abs(a) <= 5.0);
  }
}

TEST_CASE("synthetic cohort is a pure function of its config") {
  SyntheticCohortConfig cfg;
  cfg.n_smci = 12;
  cfg.n_pmci = 6;
  cfg.image_side = 32;
  const SyntheticCohort a = synth_generate(cfg), b = synth_generate(cfg);
  REQUIRE(a.images.size() == b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i].pixels == b.images[i].pixels);
  CHECK(format_biomarkers(a.biomarkers) == format_biomarkers(b.biomarkers));
  CHECK(a.labels == b.labels);
  cfg.seed += 1;
  CHECK(format_biomarkers(synth_generate(cfg).biomarkers) != format_biomarkers(a.biomarkers));
}

TEST_CASE("synthetic cohort shape") {
  SyntheticCohortConfig cfg;
  cfg.n_smci = 30;
  cfg.n_pmci = 10;
  cfg.image_side = 32;
  cfg.missing_m18_rate = 0.5;
  const SyntheticCohort c = synth_generate(cfg);
  CHECK(c.labels.size() == 40);
  std::size_t pos = 0;
  for (const auto& [id, l] : c.labels) pos += l;
  CHECK(pos == 10);
  CHECK(c.images.size() == c.biomarkers.size());
  CHECK(c.images.size() < 160);
  CHECK(c.images.size() > 100);
  for (const BiomarkerRow& r : c.biomarkers) {
    if (r.visit == Visit::bl) CHECK(r.complete());
  }
  for (const SliceImage& img : c.images) {
    double mean = 0.0;
    for (float p : img.pixels) mean += p;
    CHECK(std::abs(mean / static_cast<double>(img.pixels.size())) < 1e-5);
  }
}

TEST_CASE("image and label files round-trip") {
  SyntheticCohortConfig cfg;
  cfg.n_smci = 3;
  cfg.n_pmci = 2;
  cfg.image_side = 32;
  const SyntheticCohort c = synth_generate(cfg);
  const auto dir = testing::scratch_dir("images");
  write_images(dir / "i.bin", c.images);
  const auto back = load_images(dir / "i.bin");
  REQUIRE(back.size() == c.images.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].sample_id == c.images[i].sample_id);
    CHECK(back[i].visit == c.images[i].visit);
    CHECK(back[i].pixels == c.images[i].pixels);
  }
  const std::string groups[] = {"sMCI", "pMCI"};
  write_labels(dir / "l.csv", c.labels, groups);
  CHECK(load_labels(dir / "l.csv") == c.labels);
  std::ofstream(dir / "junk.bin") << "NOTANIMG";
  CHECK_THROWS(load_images(dir / "junk.bin"));
}

TEST_CASE("logistic regression on raw biomarkers separates the default cohort") {
  SyntheticCohortConfig cfg;
  cfg.seed = 42;
  cfg.image_side = 32;
  const SyntheticCohort c = synth_generate(cfg);
  // Features: the 17 biomarkers at every visit, forward-filled, z-scored.
  std::map<std::string, std::array<std::optional<BiomarkerRow>, kTimepoints>> by_subject;
  for (const BiomarkerRow& r : c.biomarkers) by_subject[r.subject_id][visit_index(r.visit)] = r;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& [id, visits] : by_subject) {
    auto filled = forward_fill(id, visits).visits;
    fill_biomarker_fields(filled);
    std::vector<double> row;
    for (const BiomarkerRow& r : filled)
      for (const auto& v : r.values) row.push_back(*v);
    x.push_back(row);
    y.push_back(c.labels.at(id));
  }
  const std::size_t n = x.size(), d = x[0].size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(5);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = n * 7 / 10;
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t k = 0; k < n_train; ++k)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[order[k]][j] / static_cast<double>(n_train);
  for (std::size_t k = 0; k < n_train; ++k)
    for (std::size_t j = 0; j < d; ++j) sd[j] += std::pow(x[order[k]][j] - mu[j], 2) / static_cast<double>(n_train);
  for (double& s : sd) s = std::sqrt(s) + 1e-12;
  for (auto& row : x)
    for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - mu[j]) / sd[j];
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int epoch = 0; epoch < 500; ++epoch) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t k = 0; k < n_train; ++k) {
      const auto& row = x[order[k]];
      double z = b;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * row[j];
      const double err = 1.0 / (1.0 + std::exp(-z)) - y[order[k]];
      for (std::size_t j = 0; j < d; ++j) gw[j] += err * row[j];
      gb += err;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= 0.5 * (gw[j] / static_cast<double>(n_train) + 1e-3 * w[j]);
    b -= 0.5 * gb / static_cast<double>(n_train);
  }
  std::size_t correct = 0;
  for (std::size_t k = n_train; k < n; ++k) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[order[k]][j];
    correct += (z > 0.0) == (y[order[k]] == 1);
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(n - n_train);
  MESSAGE("held-out accuracy " << acc);
  CHECK(acc >= 0.80);
}
