#include "adprog/commands.hpp"

#include <ostream>
#include <set>

#include "adprog/error.hpp"
#include "adprog/reports.hpp"
#include "adprog/text_io.hpp"

namespace adprog {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kConversionGroups = {"sMCI", "pMCI"};
const std::vector<std::string> kDiagnosticGroups = {"CN", "MCI", "AD"};

class ManifestScope {
 public:
  ManifestScope(const CommandContext& ctx, std::string command) : ctx_(ctx) {
    ctx_.config.validate();
    fs::create_directories(ctx_.out_dir);
    manifest_.command = std::move(command);
    manifest_.config_path = ctx_.config_path ? ctx_.config_path->string() : "";
    manifest_.seed = ctx_.config.train_predictor.seed;
    manifest_.started = utc_timestamp();
    manifest_.config = config_to_json(ctx_.config);
  }

  void input(const RunManifest& upstream) {
    manifest_.inputs.insert(manifest_.inputs.end(), upstream.outputs.begin(), upstream.outputs.end());
  }
  void write(const std::string& name, const std::string& content) {
    write_file(ctx_.out_dir / name, content);
    output(name);
  }
  void output(const std::string& name) { manifest_.outputs.push_back(record_artifact(ctx_.out_dir, name)); }
  void finish() {
    manifest_.finished = utc_timestamp();
    write_manifest(ctx_.out_dir, manifest_);
  }

 private:
  const CommandContext& ctx_;
  RunManifest manifest_;
};

void say(const CommandContext& ctx, const std::string& line) {
  if (ctx.log) *ctx.log << line << '\n' << std::flush;
}

PredictorRunConfig predictor_run(const CommandContext& ctx) {
  PredictorRunConfig run;
  run.model = ctx.config.predictor;
  run.train = ctx.config.train_predictor;
  run.jobs = ctx.jobs;
  return run;
}

std::string fold_summary(const FoldResult& f) {
  return "fold " + std::to_string(f.fold) + ": accuracy " + format_fixed(f.final_eval.metrics.accuracy, 4) +
         ", best epoch " + std::to_string(f.best_epoch);
}

CrossValidation evaluate_saved_folds(const CommandContext& ctx, std::span<const FeatureSequence> sequences) {
  CrossValidation cv;
  for (std::size_t f = 0; f < ctx.config.train_predictor.folds; ++f) {
    const fs::path path = ctx.out_dir / predictor_checkpoint_name(f);
    if (!fs::exists(path)) throw InputError(path.string() + " is missing; rerun `adprog train-predictor`");
    const Checkpoint ckpt = load_checkpoint(path);
    const auto subjects = ckpt.meta.at("validation_subjects").get<std::vector<std::string>>();
    const std::set<std::string> validation(subjects.begin(), subjects.end());
    std::vector<FeatureSequence> held_out;
    for (const FeatureSequence& s : sequences) {
      if (validation.count(s.subject_id) && !s.augmented) held_out.push_back(s);
    }
    FoldResult r;
    r.fold = ckpt.fold;
    r.validation_subjects = subjects;
    r.validation_sequences = held_out.size();
    r.final_eval = evaluate_predictor(predictor_from_checkpoint(ckpt), held_out);
    r.final_checkpoint = ckpt;
    cv.folds.push_back(std::move(r));
  }
  cv.mean = summarize(cv.folds);
  return cv;
}

}  // namespace

std::string predictor_checkpoint_name(std::size_t fold, bool best) {
  return "predictor_fold" + std::to_string(fold) + (best ? "_best.ckpt" : ".ckpt");
}

void cmd_synth(const CommandContext& ctx) {
  ManifestScope scope(ctx, "synth");
  const SyntheticCohort cohort = synth_generate(ctx.config.synth);
  write_images(ctx.out_dir / artifacts::kImages, cohort.images);
  scope.output(artifacts::kImages);
  scope.write(artifacts::kBiomarkers, format_biomarkers(cohort.biomarkers));
  write_labels(ctx.out_dir / artifacts::kLabels, cohort.labels, kConversionGroups);
  scope.output(artifacts::kLabels);
  const DiagnosticCohort diag = synth_diagnostic(ctx.config.diagnostic);
  write_images(ctx.out_dir / artifacts::kDiagnosticImages, diag.images);
  scope.output(artifacts::kDiagnosticImages);
  write_labels(ctx.out_dir / artifacts::kDiagnosticLabels, diag.labels, kDiagnosticGroups);
  scope.output(artifacts::kDiagnosticLabels);
  scope.finish();
  say(ctx, "synth: " + std::to_string(cohort.labels.size()) + " subjects, " + std::to_string(cohort.images.size()) +
               " visit images, " + std::to_string(diag.images.size()) + " diagnostic images");
}

void cmd_train_extractor(const CommandContext& ctx) {
  ManifestScope scope(ctx, "train-extractor");
  scope.input(verify_upstream(ctx.out_dir, "synth"));
  DiagnosticCohort cohort;
  cohort.images = load_images(ctx.out_dir / artifacts::kDiagnosticImages);
  cohort.labels = load_labels(ctx.out_dir / artifacts::kDiagnosticLabels);
  const ExtractorRun run = train_extractor(cohort, ctx.config.extractor, ctx.config.train_extractor);
  for (const EpochRecord& r : run.curve) {
    say(ctx, "extractor epoch " + std::to_string(r.epoch) + ": train loss " + format_fixed(r.train_loss, 4) +
                 ", train acc " + format_fixed(r.train_acc, 3) + ", val acc " + format_fixed(r.val_acc, 3));
  }
  save_checkpoint(ctx.out_dir / artifacts::kExtractor, run.final_checkpoint);
  scope.output(artifacts::kExtractor);
  save_checkpoint(ctx.out_dir / artifacts::kExtractorBest, run.best_checkpoint);
  scope.output(artifacts::kExtractorBest);
  scope.write(artifacts::kExtractorCurves, format_curves_tsv(run.curve));
  scope.finish();
}

void cmd_extract(const CommandContext& ctx) {
  ManifestScope scope(ctx, "extract");
  scope.input(verify_upstream(ctx.out_dir, "synth"));
  scope.input(verify_upstream(ctx.out_dir, "train-extractor"));
  const FeatureExtractor model = extractor_from_checkpoint(load_checkpoint(ctx.out_dir / artifacts::kExtractor));
  const std::vector<SliceImage> images = load_images(ctx.out_dir / artifacts::kImages);
  const std::map<std::string, int> labels = load_labels(ctx.out_dir / artifacts::kLabels);

  std::size_t n0 = 0, n1 = 0;
  for (const auto& [id, label] : labels) (label == 1 ? n1 : n0) += 1;
  const RebalancePlan plan = plan_rebalance(n0, n1, ctx.config.rebalance_multiplier);
  const std::vector<SliceImage> augmented = augment_minority(images, labels, plan, ctx.config.train_predictor.seed);

  std::vector<FeatureCacheRow> rows = extract_features(model, images);
  const std::vector<FeatureCacheRow> aug_rows = extract_features(model, augmented);
  rows.insert(rows.end(), aug_rows.begin(), aug_rows.end());
  write_feature_cache(ctx.out_dir / artifacts::kFeatures, rows);
  scope.output(artifacts::kFeatures);

  std::map<std::string, std::set<Visit>> present;
  for (const SliceImage& img : images) present[img.sample_id].insert(img.visit);
  std::string log = "subject_id\tevent\tdetail\n";
  log += "*\trebalance\tminority label " + std::to_string(plan.minority_label) + ", " +
         std::to_string(plan.minority_count) + " -> " + std::to_string(plan.minority_after()) + " vs " +
         std::to_string(plan.majority_count) + "\n";
  for (const auto& [id, label] : labels) {
    for (Visit v : kVisits) {
      if (!present[id].count(v)) log += id + "\tmissing_visit\t" + std::string(visit_code(v)) + "\n";
    }
  }
  scope.write(artifacts::kExtractLog, log);
  scope.finish();
  say(ctx, "extract: " + std::to_string(rows.size()) + " feature rows (" + std::to_string(aug_rows.size()) +
               " from augmented copies)");
}

AssemblyResult load_run_sequences(const fs::path& dir) {
  const std::vector<FeatureCacheRow> features = load_feature_cache(dir / artifacts::kFeatures);
  const BiomarkerTable biomarkers = load_biomarkers(dir / artifacts::kBiomarkers);
  const std::map<std::string, int> labels = load_labels(dir / artifacts::kLabels);
  return assemble_sequences(features, biomarkers.rows, labels);
}

void cmd_train_predictor(const CommandContext& ctx) {
  ManifestScope scope(ctx, "train-predictor");
  scope.input(verify_upstream(ctx.out_dir, "synth"));
  scope.input(verify_upstream(ctx.out_dir, "extract"));
  const AssemblyResult assembled = load_run_sequences(ctx.out_dir);
  say(ctx, "train-predictor: " + std::to_string(assembled.sequences.size()) + " sequences, " +
               std::to_string(assembled.excluded.size()) + " excluded, " + std::to_string(assembled.fills.size()) +
               " fills");
  const CrossValidation cv = train_predictor(assembled.sequences, predictor_run(ctx));
  for (const FoldResult& f : cv.folds) {
    save_checkpoint(ctx.out_dir / predictor_checkpoint_name(f.fold), f.final_checkpoint);
    scope.output(predictor_checkpoint_name(f.fold));
    save_checkpoint(ctx.out_dir / predictor_checkpoint_name(f.fold, true), f.best_checkpoint);
    scope.output(predictor_checkpoint_name(f.fold, true));
    say(ctx, fold_summary(f));
  }
  scope.write(artifacts::kMetrics, format_metrics_tsv(cv));
  scope.write(artifacts::kCurves, format_curves_tsv(cv));
  scope.write(artifacts::kFolds, format_fold_manifest_tsv(cv, load_labels(ctx.out_dir / artifacts::kLabels)));
  scope.write(artifacts::kFills, format_fills_tsv(assembled.fills));
  scope.write(artifacts::kExclusions, format_exclusions_tsv(assembled.excluded));
  scope.finish();
  say(ctx, "mean accuracy " + format_fixed(cv.mean.accuracy, 4));
}

std::string cmd_evaluate(const CommandContext& ctx) {
  ManifestScope scope(ctx, "evaluate");
  scope.input(verify_upstream(ctx.out_dir, "synth"));
  scope.input(verify_upstream(ctx.out_dir, "extract"));
  scope.input(verify_upstream(ctx.out_dir, "train-predictor"));
  const AssemblyResult assembled = load_run_sequences(ctx.out_dir);
  const std::string table = format_metrics_tsv(evaluate_saved_folds(ctx, assembled.sequences));
  scope.write(artifacts::kEvaluation, table);
  scope.finish();
  return table;
}

void cmd_ablate(const CommandContext& ctx, const std::vector<AblationMode>& requested) {
  ManifestScope scope(ctx, "ablate");
  scope.input(verify_upstream(ctx.out_dir, "synth"));
  scope.input(verify_upstream(ctx.out_dir, "extract"));
  scope.input(verify_upstream(ctx.out_dir, "train-predictor"));
  const std::vector<AblationMode> modes =
      requested.empty()
          ? std::vector<AblationMode>{AblationMode::no_biomarkers, AblationMode::vanilla_lstm, AblationMode::bce_loss}
          : requested;
  const AssemblyResult assembled = load_run_sequences(ctx.out_dir);
  const PredictorRunConfig base = predictor_run(ctx);
  // The baseline is the saved train-predictor run, re-evaluated.
  const CrossValidation baseline = evaluate_saved_folds(ctx, assembled.sequences);
  for (AblationMode mode : modes) {
    const AblationResult result = run_ablation(mode, assembled.sequences, base, &baseline);
    const std::string name(ablation_name(mode));
    scope.write("ablation_" + name + ".tsv", format_ablation_tsv(result));
    scope.write("ablation_" + name + "_metrics.tsv", format_metrics_tsv(result.ablated));
    say(ctx, "ablate " + name + ": baseline " + format_fixed(result.baseline.mean.accuracy, 4) + ", ablated " +
                 format_fixed(result.ablated.mean.accuracy, 4));
  }
  scope.finish();
}

}  // namespace adprog
