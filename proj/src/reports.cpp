#include "adprog/reports.hpp"

#include <chrono>
#include <ctime>

#include "adprog/error.hpp"
#include "adprog/text_io.hpp"

namespace adprog {
namespace {

std::string metric_cells(double accuracy, const std::optional<double>& precision, const std::optional<double>& recall,
                         const std::optional<double>& f1) {
  return format_fixed(accuracy) + '\t' + format_metric(precision) + '\t' + format_metric(recall) + '\t' +
         format_metric(f1);
}

std::string confusion_cells(const ConfusionMatrix& cm) {
  return std::to_string(cm.tp) + '\t' + std::to_string(cm.tn) + '\t' + std::to_string(cm.fp) + '\t' +
         std::to_string(cm.fn);
}

}  // namespace

std::string format_metrics_tsv(const CrossValidation& cv) {
  std::string out = "fold\taccuracy\tprecision\trecall\tf1\tloss\ttp\ttn\tfp\tfn\n";
  for (const FoldResult& f : cv.folds) {
    const ClassificationMetrics& m = f.final_eval.metrics;
    out += std::to_string(f.fold) + '\t' + metric_cells(m.accuracy, m.precision, m.recall, m.f1) + '\t' +
           format_fixed(f.final_eval.loss) + '\t' + confusion_cells(m.confusion) + '\n';
  }
  const MetricSummary& s = cv.mean;
  out += "mean\t" + metric_cells(s.accuracy, s.precision, s.recall, s.f1) + '\t' + format_fixed(s.loss) + '\t' +
         confusion_cells(s.confusion) + '\n';
  return out;
}

std::string format_curves_tsv(std::span<const EpochRecord> rows) {
  std::string out = "fold\tepoch\tlr\ttrain_loss\tval_loss\ttrain_acc\tval_acc\n";
  for (const EpochRecord& r : rows) {
    out += std::to_string(r.fold) + '\t' + std::to_string(r.epoch) + '\t' + format_exact(r.lr) + '\t' +
           format_exact(r.train_loss) + '\t' + format_exact(r.val_loss) + '\t' + format_exact(r.train_acc) + '\t' +
           format_exact(r.val_acc) + '\n';
  }
  return out;
}

std::string format_curves_tsv(const CrossValidation& cv) {
  std::vector<EpochRecord> rows;
  for (const FoldResult& f : cv.folds) rows.insert(rows.end(), f.curve.begin(), f.curve.end());
  return format_curves_tsv(rows);
}

std::string format_ablation_tsv(const AblationResult& result) {
  std::string out = "variant\tinput_width\trecurrent_params\tbidirectional\tloss\taccuracy\tprecision\trecall\tf1\n";
  const auto row = [&out](const VariantInfo& info, const MetricSummary& s) {
    out += info.name + '\t' + std::to_string(info.input_width) + '\t' + std::to_string(info.recurrent_params) + '\t' +
           (info.bidirectional ? "yes" : "no") + '\t' + std::string(loss_name(info.loss)) + '\t' +
           metric_cells(s.accuracy, s.precision, s.recall, s.f1) + '\n';
  };
  row(result.baseline_info, result.baseline.mean);
  row(result.ablated_info, result.ablated.mean);
  return out;
}

std::string format_fold_manifest_tsv(const CrossValidation& cv, const std::map<std::string, int>& labels) {
  std::string out = "fold\tsubject_id\trole\tlabel\n";
  const auto label_of = [&labels](const std::string& id) {
    const auto it = labels.find(id);
    return it == labels.end() ? std::string("NA") : std::to_string(it->second);
  };
  for (const FoldResult& f : cv.folds) {
    for (const std::string& id : f.train_subjects)
      out += std::to_string(f.fold) + '\t' + id + "\ttrain\t" + label_of(id) + '\n';
    for (const std::string& id : f.validation_subjects)
      out += std::to_string(f.fold) + '\t' + id + "\tval\t" + label_of(id) + '\n';
  }
  return out;
}

std::string format_fills_tsv(std::span<const FillRecord> fills) {
  std::string out = "subject_id\tfilled_visit\tsource_visit\tfield\n";
  for (const FillRecord& f : fills) {
    out += f.subject_id + '\t' + std::string(visit_code(f.filled)) + '\t' + std::string(visit_code(f.source)) + '\t' +
           (f.field.empty() ? std::string("*") : f.field) + '\n';
  }
  return out;
}

std::string format_exclusions_tsv(std::span<const SubjectExclusion> excluded) {
  std::string out = "sample_id\treason\n";
  for (const SubjectExclusion& e : excluded) out += e.sample_id + '\t' + e.reason + '\n';
  return out;
}

std::string manifest_file_name(const std::string& command) { return "manifest_" + command + ".json"; }

ArtifactRecord record_artifact(const std::filesystem::path& dir, const std::string& relative) {
  return {relative, sha256_file(dir / relative)};
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_path"] = m.config_path;
  j["seed"] = m.seed;
  j["started"] = m.started;
  j["finished"] = m.finished;
  const auto list = [](const std::vector<ArtifactRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ArtifactRecord& r : records) arr.push_back({{"path", r.path}, {"sha256", r.sha256}});
    return arr;
  };
  j["inputs"] = list(m.inputs);
  j["outputs"] = list(m.outputs);
  j["config"] = m.config;
  write_file(dir / manifest_file_name(m.command), j.dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& dir, const std::string& command) {
  const std::filesystem::path path = dir / manifest_file_name(command);
  if (!std::filesystem::exists(path)) {
    throw InputError(path.string() + " not found; run `adprog " + command + "` first");
  }
  try {
    const nlohmann::json j = nlohmann::json::parse(read_file(path));
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_path = j.at("config_path").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    for (const auto& r : j.at("inputs")) m.inputs.push_back({r.at("path"), r.at("sha256")});
    for (const auto& r : j.at("outputs")) m.outputs.push_back({r.at("path"), r.at("sha256")});
    m.config = j.at("config");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + " is malformed (" + e.what() + "); rerun `adprog " + command + "`");
  }
}

RunManifest verify_upstream(const std::filesystem::path& dir, const std::string& command) {
  RunManifest m = load_manifest(dir, command);
  for (const ArtifactRecord& r : m.outputs) {
    const std::filesystem::path path = dir / r.path;
    if (!std::filesystem::exists(path)) {
      throw InputError(path.string() + " is missing; rerun `adprog " + command + "`");
    }
    if (sha256_file(path) != r.sha256) {
      throw InputError(path.string() + " does not match its recorded checksum; rerun `adprog " + command + "`");
    }
  }
  return m;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace adprog
