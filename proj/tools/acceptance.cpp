// Acceptance suite: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "adprog/commands.hpp"
#include "adprog/error.hpp"
#include "adprog/grad_check.hpp"
#include "adprog/ops.hpp"
#include "adprog/reports.hpp"
#include "adprog/text_io.hpp"

namespace fs = std::filesystem;
using namespace adprog;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& note) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "!") + note);
  }
};

std::vector<std::string> lines_of(const fs::path& p) {
  std::string text = read_file(p);
  while (!text.empty() && text.back() == '\n') text.pop_back();
  std::vector<std::string> out;
  for (auto line : split(text, '\n')) out.emplace_back(line);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  for (auto c : split(line, '\t')) out.emplace_back(c);
  return out;
}

// --- run directories ---------------------------------------------------------

struct Pipeline {
  fs::path dir;
  double seconds = 0.0;
};

CommandContext context(const RunConfig& cfg, const fs::path& dir, bool verbose) {
  CommandContext ctx;
  ctx.config = cfg;
  ctx.out_dir = dir;
  ctx.log = verbose ? &std::cerr : nullptr;
  return ctx;
}

Pipeline run_chain(const RunConfig& cfg, const fs::path& dir, bool verbose) {
  fs::remove_all(dir);
  const auto start = Clock::now();
  const CommandContext ctx = context(cfg, dir, verbose);
  cmd_synth(ctx);
  cmd_train_extractor(ctx);
  cmd_extract(ctx);
  cmd_train_predictor(ctx);
  return {dir, seconds_since(start)};
}

double mean_accuracy(const fs::path& metrics) {
  const auto rows = lines_of(metrics);
  const auto header = cells(rows.front());
  const auto last = cells(rows.back());
  if (last.at(0) != "mean") throw InputError(metrics.string() + ": no mean row");
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == "accuracy") return std::stod(last.at(c));
  throw InputError(metrics.string() + ": no accuracy column");
}

// --- criterion 1 -------------------------------------------------------------

Tensor weighted(const Tensor& y, std::uint64_t seed) {
  Rng rng = make_rng(seed, {99});
  return sum(mul(y, normal_tensor(y.shape(), 1.0, rng)));
}

struct Worst {
  double value = 0.0;
  void add(const GradCheckReport& r) { value = std::max(value, r.max_rel_error); }
};

ExtractorConfig tiny_extractor() {
  ExtractorConfig cfg;
  cfg.stem.stage_channels = {4, 4};
  cfg.stem.strides = {2, 2};
  cfg.stem.bridge_channels = {4, 3, 3};
  cfg.stem.bridge_side = 16;
  cfg.vit.blocks = 1;
  cfg.vit.dim = 8;
  cfg.vit.heads = 2;
  cfg.vit.rank = 2;
  cfg.vit.patch = 8;
  cfg.vit.side = 16;
  cfg.vit.mlp_ratio = 2;
  cfg.image_side = 32;
  return cfg;
}

std::vector<GradCheckInput> trainable(const ParamList& params) {
  std::vector<GradCheckInput> out;
  for (const NamedParam& p : params)
    if (p.tensor.requires_grad()) out.push_back({p.name, p.tensor});
  return out;
}

Outcome gradient_integrity() {
  const auto start = Clock::now();
  Worst ops, recurrent, losses, lora, phase1, phase2;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    Rng rng = make_rng(1000 + trial);
    Tensor a = normal_tensor({3, 4}, 1.0, rng, true);
    Tensor b = normal_tensor({3, 4}, 1.0, rng, true);
    Tensor w = normal_tensor({4, 5}, 1.0, rng, true);
    Tensor bias = normal_tensor({4}, 1.0, rng, true);
    Tensor gamma = normal_tensor({4}, 1.0, rng, true);
    const auto check = [&](Worst& into, const std::function<Tensor()>& f, const std::vector<GradCheckInput>& in) {
      into.add(grad_check(f, in));
    };
    check(ops, [&] { return weighted(add(a, b), trial); }, {{"a", a}, {"b", b}});
    check(ops, [&] { return weighted(sub(a, b), trial); }, {{"a", a}, {"b", b}});
    check(ops, [&] { return weighted(mul(a, b), trial); }, {{"a", a}, {"b", b}});
    check(ops, [&] { return weighted(add_scalar(scale(a, 1.5), 0.3), trial); }, {{"a", a}});
    check(ops, [&] { return weighted(add_bias(a, bias), trial); }, {{"a", a}, {"bias", bias}});
    check(ops, [&] { return weighted(matmul(a, w), trial); }, {{"a", a}, {"w", w}});
    check(ops, [&] { return weighted(matmul_nt(a, b), trial); }, {{"a", a}, {"b", b}});
    check(ops, [&] { return weighted(transpose(a), trial); }, {{"a", a}});
    check(ops, [&] { return weighted(reshape(a, {2, 6}), trial); }, {{"a", a}});
    check(ops, [&] { return weighted(concat_cols({a, b}), trial); }, {{"a", a}, {"b", b}});
    check(ops, [&] { return weighted(concat_rows({a, b}), trial); }, {{"a", a}, {"b", b}});
    check(ops, [&] { return weighted(slice_rows(slice_cols(a, 1, 3), 1, 3), trial); }, {{"a", a}});
    check(ops, [&] { return mean(mul(a, a)); }, {{"a", a}});
    for (Activation act : {Activation::sigmoid, Activation::tanh, Activation::swish, Activation::gelu})
      check(ops, [&] { return weighted(activate(a, act), trial); }, {{"a", a}});
    check(ops, [&] { return weighted(softmax(a, 1), trial); }, {{"a", a}});
    check(ops, [&] { return weighted(softmax(a, 0), trial); }, {{"a", a}});
    check(ops, [&] { return weighted(layer_norm(a, gamma, bias), trial); }, {{"a", a}, {"g", gamma}, {"b", bias}});

    Tensor img = normal_tensor({2, 6, 6}, 1.0, rng, true);
    Tensor k = normal_tensor({3, 2, 3, 3}, 0.5, rng, true);
    Tensor cb = normal_tensor({3}, 1.0, rng, true);
    check(ops, [&] { return weighted(add_channel_bias(conv2d(img, k, 1 + trial % 2, 1), cb), trial); },
          {{"img", img}, {"k", k}, {"cb", cb}});
    check(ops, [&] { return weighted(bilinear_resize(img, 9, 4), trial); }, {{"img", img}});
    check(ops, [&] { return weighted(extract_patches(img, 3), trial); }, {{"img", img}});
    const Rng drop_rng = make_rng(2000 + trial);
    check(ops,
          [&] {
            Rng r = drop_rng;
            return weighted(dropout(img, 0.3, true, r), trial);
          },
          {{"img", img}});

    // Recurrent kernels.
    const LstmCellParams p = LstmCellParams::random(3, 4, 0.5, 1.0, rng);
    Tensor x = normal_tensor({2, 3}, 1.0, rng, true);
    Tensor h = normal_tensor({2, 4}, 1.0, rng, true);
    Tensor c = normal_tensor({2, 4}, 1.0, rng, true);
    const Tensor hw = normal_tensor({2, 4}, 1.0, rng);
    check(recurrent,
          [&] {
            const LstmState s = lstm_cell_step(x, h, c, p);
            return add(sum(mul(s.h, hw)), sum(mul(s.c, s.c)));
          },
          {{"x", x}, {"h", h}, {"c", c}, {"W_f", p.w_f}, {"W_i", p.w_i}, {"W_c", p.w_c}, {"W_o", p.w_o},
           {"b_f", p.b_f}, {"b_i", p.b_i}, {"b_c", p.b_c}, {"b_o", p.b_o}});
    Tensor seq = normal_tensor({4, 3}, 1.0, rng, true);
    const LstmCellParams q = LstmCellParams::random(3, 4, 0.5, 1.0, rng);
    const Tensor sw = normal_tensor({4, 8}, 1.0, rng);
    check(recurrent, [&] { return sum(mul(bilstm_forward(seq, p, q), sw)); },
          {{"seq", seq}, {"fwd.W_f", p.w_f}, {"bwd.W_o", q.w_o}, {"bwd.b_c", q.b_c}});

    // Loss kernels through softmax and sigmoid.
    Tensor logits = normal_tensor({5, 3}, 1.5, rng, true);
    Tensor z1 = normal_tensor({5, 1}, 1.5, rng, true);
    const std::vector<int> labels3{0, 2, 1, 2, 0};
    const std::vector<int> labels2{0, 1, 1, 0, 1};
    const Tensor y = one_hot(labels3, 3);
    FocalLossConfig focal;
    focal.alpha = {0.25, 0.5, 0.75};
    check(losses, [&] { return cross_entropy(softmax(logits, 1), y); }, {{"z", logits}});
    check(losses, [&] { return focal_loss(softmax(logits, 1), y, focal); }, {{"z", logits}});
    check(losses, [&] { return bce_loss(sigmoid(z1), labels2); }, {{"z", z1}});

    // LoRA adapters inside an encoder block.
    VitConfig vit;
    vit.blocks = 1;
    vit.dim = 16;
    vit.heads = 2;
    vit.rank = 4;
    vit.patch = 8;
    vit.side = 16;
    vit.mlp_ratio = 2;
    EncoderBlock block = EncoderBlock::random(vit, rng);
    for (auto* slot : {&block.lora_q, &block.lora_k, &block.lora_v})
      *slot = LoraAdapter((*slot)->a(), normal_tensor((*slot)->b().shape(), 0.3, rng, true));
    const Tensor tokens = normal_tensor({4, 16}, 1.0, rng);
    const Tensor tw = normal_tensor({4, 16}, 1.0, rng);
    check(lora, [&] { return sum(mul(encoder_block_forward(tokens, block), tw)); },
          {{"qA", block.lora_q->a()}, {"qB", block.lora_q->b()}, {"kA", block.lora_k->a()},
           {"kB", block.lora_k->b()}, {"vA", block.lora_v->a()}, {"vB", block.lora_v->b()}});

    // Phase one end to end: image -> extractor -> softmax -> cross-entropy.
    const FeatureExtractor extractor(tiny_extractor(), 3000 + trial);
    const Tensor image = normal_tensor({3, 32, 32}, 1.0, rng);
    const int diag[] = {static_cast<int>(trial % 3)};
    phase1.add(grad_check(
        [&] { return classification_loss(softmax(extractor.forward(image).logits, 1), diag, LossKind::cross_entropy, {}); },
        trainable(extractor.parameters()), {1e-6, 16}));

    // Phase two end to end: sequence -> BiLSTM -> probabilities -> focal loss.
    BiLstmConfig lstm;
    lstm.input_width = 5;
    lstm.hidden = 3;
    const SequenceClassifier model(lstm, 4000 + trial);
    std::vector<Tensor> steps;
    for (int t = 0; t < 4; ++t) steps.push_back(normal_tensor({3, 5}, 1.0, rng));
    const int pmci[] = {0, 1, 1};
    phase2.add(grad_check(
        [&] {
          return classification_loss(model.probabilities(model.forward(steps, false, nullptr)), pmci, LossKind::focal,
                                     {});
        },
        trainable(model.parameters())));
  }
  const double elapsed = seconds_since(start);
  Outcome out;
  out.expect(ops.value <= 1e-4, fmt("ops %.1e", ops.value));
  out.expect(lora.value <= 1e-4, fmt("lora %.1e", lora.value));
  out.expect(recurrent.value <= 1e-5, fmt("recurrent %.1e", recurrent.value));
  out.expect(losses.value <= 1e-5, fmt("losses %.1e", losses.value));
  out.expect(phase1.value <= 1e-4, fmt("extractor e2e %.1e", phase1.value));
  out.expect(phase2.value <= 1e-4, fmt("predictor e2e %.1e", phase2.value));
  out.expect(elapsed < 120.0, fmt("%.1fs", elapsed));
  return out;
}

// --- criterion 2 -------------------------------------------------------------

Outcome parameter_counts() {
  BiLstmConfig cfg = BiLstmConfig::paper_scale();
  cfg.input_width = 273;
  cfg.bidirectional = false;
  const std::size_t vanilla = count_recurrent_params(cfg);
  cfg.bidirectional = true;
  const std::size_t bilstm = count_recurrent_params(cfg);
  const SequenceClassifier built(cfg, 1);
  std::size_t in_encoder = 0;
  for (const NamedParam& p : built.parameters())
    if (p.group != "head") in_encoder += p.tensor.numel();
  Outcome out;
  out.expect(vanilla == 542720, fmt("vanilla %zu", vanilla));
  out.expect(bilstm == 1085440, fmt("bilstm %zu", bilstm));
  out.expect(std::round(static_cast<double>(vanilla) / 1e5) / 10.0 == 0.5, "0.5M");
  out.expect(std::round(static_cast<double>(bilstm) / 1e6) == 1.0, "1M");
  out.expect(in_encoder == bilstm, fmt("built %zu", in_encoder));
  return out;
}

// --- criterion 3 -------------------------------------------------------------

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// One row of the cell, gate by gate.
void scalar_step(const std::vector<double>& x, std::vector<double>& h, std::vector<double>& c, const LstmCellParams& p) {
  const std::size_t hidden = h.size(), input = x.size();
  const auto gate = [&](const Tensor& w, const Tensor& b, std::size_t j) {
    double z = b.at(j);
    for (std::size_t k = 0; k < hidden; ++k) z += w.at(j, k) * h[k];
    for (std::size_t k = 0; k < input; ++k) z += w.at(j, hidden + k) * x[k];
    return z;
  };
  std::vector<double> h_new(hidden), c_new(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    const double f = sig(gate(p.w_f, p.b_f, j));
    const double i = sig(gate(p.w_i, p.b_i, j));
    const double cand = std::tanh(gate(p.w_c, p.b_c, j));
    const double o = sig(gate(p.w_o, p.b_o, j));
    c_new[j] = f * c[j] + i * cand;
    h_new[j] = o * std::tanh(c_new[j]);
  }
  h = h_new;
  c = c_new;
}

Outcome equation_fidelity() {
  double lstm_err = 0.0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng = make_rng(5000, {trial});
    const std::size_t input = 1 + trial % 7, hidden = 1 + (trial / 7) % 6;
    LstmCellParams p = LstmCellParams::random(input, hidden, 0.8, 0.5, rng, false);
    p.b_i = normal_tensor({hidden}, 0.5, rng);
    p.b_c = normal_tensor({hidden}, 0.5, rng);
    p.b_o = normal_tensor({hidden}, 0.5, rng);
    const Tensor x = normal_tensor({1, input}, 1.0, rng);
    const Tensor h = normal_tensor({1, hidden}, 1.0, rng);
    const Tensor c = normal_tensor({1, hidden}, 1.0, rng);
    const LstmState got = lstm_cell_step(x, h, c, p);
    std::vector<double> hv(h.values().begin(), h.values().end()), cv(c.values().begin(), c.values().end());
    scalar_step({x.values().begin(), x.values().end()}, hv, cv, p);
    for (std::size_t j = 0; j < hidden; ++j) {
      lstm_err = std::max(lstm_err, std::abs(got.h.values()[j] - hv[j]));
      lstm_err = std::max(lstm_err, std::abs(got.c.values()[j] - cv[j]));
    }
  }
  double focal_err = 0.0;
  FocalLossConfig gamma0;
  gamma0.gamma = 0.0;
  gamma0.alpha = {1.0};
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    Rng rng = make_rng(6000, {trial});
    const std::size_t classes = 2 + trial % 4;
    const Tensor probs = softmax(normal_tensor({1, classes}, 2.0, rng), 1);
    const int label[] = {static_cast<int>(trial % classes)};
    const Tensor y = one_hot(label, classes);
    focal_err = std::max(focal_err, std::abs(focal_loss(probs, y, gamma0).item() - cross_entropy(probs, y).item()));
  }
  FocalLossConfig gamma2;
  gamma2.gamma = 2.0;
  gamma2.alpha = {1.0};
  const std::vector<double> p{0.9, 0.1}, y{1.0, 0.0};
  const double value = focal_loss(p, y, gamma2);
  Outcome out;
  out.expect(lstm_err <= 1e-12, fmt("lstm %.1e", lstm_err));
  out.expect(focal_err <= 1e-12, fmt("focal~ce %.1e", focal_err));
  out.expect(std::abs(value - 1.0536e-3) <= 1e-7, fmt("focal(0.9) %.7e", value));
  return out;
}

// --- criterion 4 -------------------------------------------------------------

Outcome lora_contracts() {
  Outcome out;
  const VitConfig cfg;
  Rng rng = make_rng(7000);
  const VitEncoder encoder(cfg, rng);
  const Tensor image = normal_tensor({3, cfg.side, cfg.side}, 1.0, rng);
  Tensor tokens = patchify(image, encoder.embedding());
  Tensor frozen = tokens;
  for (const EncoderBlock& b : encoder.blocks()) {
    tokens = encoder_block_forward(tokens, b);
    frozen = encoder_block_forward(frozen, b.without_adapters());
  }
  const auto tv = tokens.values(), fv = frozen.values();
  out.expect(std::equal(tv.begin(), tv.end(), fv.begin(), fv.end()), "zero-init bit-identical");

  ParamList params;
  encoder.append_params(params);
  std::vector<std::vector<double>> before;
  for (const NamedParam& p : params) before.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  Adam adam(params);
  for (int step = 0; step < 50; ++step) {
    const Tensor y = encoder.forward(image);
    sum(mul(y, y)).backward();
    adam.step(1e-2);
    zero_grads(params);
  }
  std::size_t frozen_changed = 0, adapters_moved = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto now = params[i].tensor.values();
    const bool same = std::equal(now.begin(), now.end(), before[i].begin(), before[i].end());
    if (params[i].tensor.requires_grad()) {
      adapters_moved += !same;
    } else {
      frozen_changed += !same;
    }
  }
  out.expect(frozen_changed == 0, fmt("frozen changed %zu", frozen_changed));
  out.expect(adapters_moved == 6 * cfg.blocks, fmt("adapters moved %zu", adapters_moved));

  for (std::size_t rank : {4, 8, 16, 32}) {
    VitConfig rcfg;
    rcfg.rank = rank;
    Rng r = make_rng(7001);
    const VitEncoder enc(rcfg, r);
    ParamList ps;
    enc.append_params(ps);
    const std::size_t got = count_trainable_params(ps).trainable;
    const std::size_t want = rcfg.blocks * 3 * rank * (rcfg.dim + rcfg.dim);
    out.expect(got == want, fmt("r=%zu %zu", rank, got));
  }
  return out;
}

// --- criterion 5 -------------------------------------------------------------

Outcome sequence_shapes(const fs::path& run) {
  Outcome out;
  const AssemblyResult assembled = load_run_sequences(run);
  std::size_t bad = 0;
  for (const FeatureSequence& s : assembled.sequences) bad += s.width != 273 || s.values.size() != 4 * 273;
  out.expect(!assembled.sequences.empty() && bad == 0,
             fmt("%zu sequences 4x273, %zu off", assembled.sequences.size(), bad));

  const FilledVisits<int> whole = forward_fill<int>("S", {0, 6, 12, std::nullopt});
  out.expect(whole.visits[3] == 12 && whole.fills.size() == 1 && whole.fills[0].source == Visit::m12,
             "visit m18<-m12");

  std::array<BiomarkerRow, kTimepoints> visits;
  for (std::size_t t = 0; t < kTimepoints; ++t) {
    visits[t].subject_id = "S";
    visits[t].visit = kVisits[t];
    for (std::size_t f = 0; f < kBiomarkerCount; ++f) visits[t].values[f] = 10.0 * static_cast<double>(t) + f;
  }
  visits[3].values[4].reset();
  const auto fills = fill_biomarker_fields(visits);
  out.expect(fills.size() == 1 && *visits[3].values[4] == *visits[2].values[4] && fills[0].source == Visit::m12,
             "field m18<-m12");

  // Every logged m18 fill in the run reads from m12 unless m12 was itself filled.
  std::set<std::pair<std::string, std::string>> m12_filled;
  for (const FillRecord& f : assembled.fills)
    if (f.filled == Visit::m12) m12_filled.insert({f.subject_id, f.field});
  std::size_t m18 = 0, wrong = 0;
  for (const FillRecord& f : assembled.fills) {
    if (f.filled != Visit::m18) continue;
    ++m18;
    const bool chained = m12_filled.count({f.subject_id, f.field}) > 0;
    wrong += !chained && f.source != Visit::m12;
  }
  out.expect(wrong == 0, fmt("%zu m18 fills in run", m18));
  return out;
}

// --- criterion 6 -------------------------------------------------------------

Outcome end_to_end(const Pipeline& run) {
  Outcome out;
  const SyntheticCohortConfig defaults;
  const std::size_t labelled = load_labels(run.dir / artifacts::kLabels).size();
  out.expect(defaults.n_smci == 390 && defaults.n_pmci == 140 && labelled == 530, fmt("cohort %zu", labelled));
  const double acc = mean_accuracy(run.dir / artifacts::kMetrics);
  out.expect(acc >= 0.90, fmt("mean acc %.4f", acc));
  out.expect(run.seconds < 900.0, fmt("%.0fs", run.seconds));
  const auto header = cells(lines_of(run.dir / artifacts::kMetrics).front());
  std::size_t found = 0;
  for (const char* col : {"accuracy", "precision", "recall", "f1", "tp", "tn", "fp", "fn"})
    found += std::find(header.begin(), header.end(), col) != header.end();
  out.expect(found == 8, "4 metrics + confusion");
  const RunConfig cfg = RunConfig::desk();
  out.expect(cfg.train_predictor.epochs <= 100 && cfg.train_predictor.folds == 5, "5 folds, 100 epochs");
  return out;
}

// --- criterion 7 -------------------------------------------------------------

Outcome ablation_directions(const Pipeline& run, bool verbose) {
  CommandContext ctx = context(RunConfig::desk(), run.dir, verbose);
  cmd_ablate(ctx, {});
  const auto accuracy_pair = [&](const char* mode) {
    const fs::path table = run.dir / (std::string("ablation_") + mode + ".tsv");
    const auto rows = lines_of(table);
    const auto header = cells(rows.at(0));
    const std::size_t col = std::find(header.begin(), header.end(), "accuracy") - header.begin();
    return std::pair{std::stod(cells(rows.at(1)).at(col)), std::stod(cells(rows.at(2)).at(col))};
  };
  Outcome out;
  const auto [base_nb, no_bio] = accuracy_pair("no_biomarkers");
  out.expect(base_nb > no_bio, fmt("multimodal %.4f > no_biomarkers %.4f", base_nb, no_bio));
  const auto [base_vl, vanilla] = accuracy_pair("vanilla_lstm");
  out.expect(base_vl >= vanilla, fmt("bilstm %.4f >= vanilla %.4f", base_vl, vanilla));
  const auto [base_bce, bce] = accuracy_pair("bce_loss");
  out.expect(base_bce >= bce - 0.01, fmt("focal %.4f >= bce %.4f - 0.01", base_bce, bce));
  return out;
}

// --- criterion 8 -------------------------------------------------------------

RunConfig tiny_run() {
  RunConfig cfg = RunConfig::desk();
  cfg.synth.n_smci = 24;
  cfg.synth.n_pmci = 10;
  cfg.synth.image_side = 32;
  cfg.diagnostic.per_class = 6;
  cfg.diagnostic.image_side = 32;
  cfg.extractor.image_side = 32;
  cfg.predictor.hidden = 4;
  cfg.train_extractor.epochs = cfg.train_extractor.switch_epoch = 2;
  cfg.train_extractor.batch_size = 8;
  cfg.train_predictor.epochs = 4;
  cfg.train_predictor.switch_epoch = 2;
  cfg.train_predictor.batch_size = 16;
  cfg.train_predictor.folds = 3;
  return cfg;
}

bool same_params(const ParamList& a, const ParamList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].tensor.values(), y = b[i].tensor.values();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

Outcome determinism(const Pipeline& run, const fs::path& work, bool verbose) {
  Outcome out;
  const Pipeline a = run_chain(tiny_run(), work / "det_a", verbose);
  const Pipeline b = run_chain(tiny_run(), work / "det_b", verbose);
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(a.dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("manifest_", 0) == 0) continue;
    ++compared;
    differing += sha256_file(entry.path()) != sha256_file(b.dir / name);
  }
  for (const char* cmd : {"synth", "train-extractor", "extract", "train-predictor"}) {
    const RunManifest ma = load_manifest(a.dir, cmd), mb = load_manifest(b.dir, cmd);
    for (std::size_t i = 0; i < ma.outputs.size(); ++i)
      differing += i >= mb.outputs.size() || ma.outputs[i].sha256 != mb.outputs[i].sha256;
  }
  out.expect(compared > 10 && differing == 0, fmt("rerun: %zu files, %zu differ", compared, differing));

  // Default-cohort regeneration matches the main run.
  const fs::path again = work / "det_synth";
  fs::remove_all(again);
  cmd_synth(context(RunConfig::desk(), again, false));
  bool synth_same = true;
  for (const char* name : {artifacts::kImages, artifacts::kBiomarkers, artifacts::kLabels, artifacts::kDiagnosticImages})
    synth_same = synth_same && sha256_file(again / name) == sha256_file(run.dir / name);
  out.expect(synth_same, "default synth rerun");

  // Predictor on the default cohort: 4 epochs, disk round trip, 2 more.
  const auto seqs = load_run_sequences(run.dir).sequences;
  const FoldIndices split = fold_indices(seqs, kfold_split(subjects_of(seqs), 5, 42)[0]);
  const RunConfig desk = RunConfig::desk();
  PredictorTrainer straight(desk.predictor, desk.train_predictor, seqs, split, 0);
  PredictorTrainer first(desk.predictor, desk.train_predictor, seqs, split, 0);
  for (int e = 0; e < 4; ++e) {
    straight.run_epoch();
    first.run_epoch();
  }
  save_checkpoint(work / "resume_predictor.ckpt", first.checkpoint());
  PredictorTrainer resumed(desk.predictor, desk.train_predictor, seqs, split, 0);
  resumed.restore(load_checkpoint(work / "resume_predictor.ckpt"));
  bool curves_same = true;
  for (int e = 0; e < 2; ++e) {
    const EpochRecord x = straight.run_epoch(), y = resumed.run_epoch();
    curves_same = curves_same && x.train_loss == y.train_loss && x.val_loss == y.val_loss && x.val_acc == y.val_acc;
  }
  out.expect(curves_same && same_params(straight.model().parameters(), resumed.model().parameters()) &&
                 serialize_checkpoint(straight.checkpoint()) == serialize_checkpoint(resumed.checkpoint()),
             "predictor resume");

  // Extractor on a slice of the diagnostic cohort.
  DiagnosticCohortConfig dcfg;
  dcfg.per_class = 4;
  const DiagnosticCohort cohort = synth_diagnostic(dcfg);
  std::vector<LabeledImage> train, val;
  for (const SliceImage& img : cohort.images)
    (train.size() < 8 ? train : val).push_back({img.sample_id, img.to_tensor(), cohort.labels.at(img.sample_id)});
  TrainConfig ecfg = TrainConfig::extractor_desk();
  ecfg.epochs = ecfg.switch_epoch = 3;
  ecfg.batch_size = 4;
  ExtractorTrainer e_straight(ExtractorConfig{}, ecfg, train, val);
  ExtractorTrainer e_first(ExtractorConfig{}, ecfg, train, val);
  e_straight.run_epoch();
  e_first.run_epoch();
  save_checkpoint(work / "resume_extractor.ckpt", e_first.checkpoint());
  ExtractorTrainer e_resumed(ExtractorConfig{}, ecfg, train, val);
  e_resumed.restore(load_checkpoint(work / "resume_extractor.ckpt"));
  bool e_same = true;
  for (int e = 0; e < 2; ++e) {
    const EpochRecord x = e_straight.run_epoch(), y = e_resumed.run_epoch();
    e_same = e_same && x.train_loss == y.train_loss && x.val_loss == y.val_loss;
  }
  out.expect(e_same && same_params(e_straight.model().parameters(), e_resumed.model().parameters()),
             "extractor resume");
  return out;
}

// --- criterion 9 -------------------------------------------------------------

Outcome null_signal(const fs::path& work, bool verbose) {
  RunConfig cfg = RunConfig::desk();
  cfg.synth = SyntheticCohortConfig::null_signal();
  const Pipeline run = run_chain(cfg, work / "null", verbose);
  const double acc = mean_accuracy(run.dir / artifacts::kMetrics);
  Outcome out;
  out.expect(acc >= 0.40 && acc <= 0.60, fmt("mean acc %.4f", acc));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string work_dir = (fs::temp_directory_path() / "adprog_acceptance").string();
  std::vector<int> only;
  bool verbose = false;
  app.add_option("--work", work_dir, "Scratch directory for pipeline runs")->capture_default_str();
  app.add_option("--only", only, "Criteria to run (default all)")->check(CLI::Range(1, 9));
  app.add_flag("-v,--verbose", verbose, "Show pipeline progress");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_dir;
  fs::create_directories(work);
  const auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  std::optional<Pipeline> main_run;
  const auto default_run = [&]() -> const Pipeline& {
    if (!main_run) main_run = run_chain(RunConfig::desk(), work / "default", verbose);
    return *main_run;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"recurrent parameter counts", parameter_counts},
      {"cell, focal and cross-entropy fidelity", equation_fidelity},
      {"LoRA contracts", lora_contracts},
      {"sequence shape and forward fill", [&] { return sequence_shapes(default_run().dir); }},
      {"end-to-end synthetic run", [&] { return end_to_end(default_run()); }},
      {"ablation directions", [&] { return ablation_directions(default_run(), verbose); }},
      {"determinism and checkpoint resume", [&] { return determinism(default_run(), work, verbose); }},
      {"null-signal control", [&] { return null_signal(work, verbose); }},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!wanted(n)) continue;
    Outcome result;
    const auto start = Clock::now();
    try {
      result = criteria[i].second();
    } catch (const std::exception& e) {
      result.expect(false, std::string("error: ") + e.what());
    }
    std::ostringstream notes;
    for (std::size_t k = 0; k < result.notes.size(); ++k) notes << (k ? "; " : "") << result.notes[k];
    std::cout << "criterion " << n << " " << (result.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << "  ["
              << notes.str() << "] " << fmt("(%.1fs)", seconds_since(start)) << std::endl;
    all = all && result.pass;
  }
  return all ? 0 : 1;
}
