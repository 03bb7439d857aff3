#include "adprog/config.hpp"

#include <set>

#include "adprog/error.hpp"
#include "adprog/text_io.hpp"

namespace adprog {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + key + "' in section '" + name_ + "'");
    }
  }

  template <class T>
  void read(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: '" + name_ + "." + key + "' has the wrong type");
    }
  }

  template <class F>
  void read_with(const char* key, F&& apply) {
    seen_.insert(key);
    if (j_.contains(key)) apply(j_.at(key));
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

template <class T>
void read_enum(Section& s, const char* key, T& field, T (*parse)(std::string_view)) {
  s.read_with(key, [&](const json& v) {
    if (!v.is_string()) throw ConfigError(std::string("config: '") + key + "' must be a string");
    field = parse(v.get<std::string>());
  });
}

Readout parse_readout(std::string_view name) {
  if (name == "final_state") return Readout::final_state;
  if (name == "mean_pool") return Readout::mean_pool;
  throw ConfigError("unknown readout '" + std::string(name) + "'");
}

OutputMode parse_output(std::string_view name) {
  if (name == "single_logit") return OutputMode::single_logit;
  if (name == "two_logit") return OutputMode::two_logit;
  throw ConfigError("unknown output mode '" + std::string(name) + "'");
}

Phase parse_phase(std::string_view name) {
  if (name == "extractor") return Phase::extractor;
  if (name == "predictor") return Phase::predictor;
  throw ConfigError("unknown phase '" + std::string(name) + "'");
}

json dynamics_json(const ClassDynamics& d) {
  return {{"baseline_mean", d.baseline_mean}, {"baseline_sd", d.baseline_sd}, {"rate_mean", d.rate_mean},
          {"rate_sd", d.rate_sd}};
}

void merge_dynamics(const json& j, ClassDynamics& d, const std::string& name) {
  Section s(j, name);
  s.read("baseline_mean", d.baseline_mean);
  s.read("baseline_sd", d.baseline_sd);
  s.read("rate_mean", d.rate_mean);
  s.read("rate_sd", d.rate_sd);
}

}  // namespace

RunConfig RunConfig::desk() {
  RunConfig cfg;
  cfg.set_seed(kDefaultSeed);
  return cfg;
}

RunConfig RunConfig::paper_scale() {
  RunConfig cfg = desk();
  cfg.synth = SyntheticCohortConfig::paper_scale();
  cfg.diagnostic.image_side = 224;
  cfg.extractor = ExtractorConfig::paper_scale();
  cfg.predictor = BiLstmConfig::paper_scale();
  cfg.train_extractor = TrainConfig::extractor_paper();
  cfg.train_predictor = TrainConfig::predictor_paper();
  return cfg;
}

void RunConfig::set_seed(std::uint64_t seed) {
  synth.seed = seed;
  diagnostic.seed = seed;
  train_extractor.seed = seed;
  train_predictor.seed = seed;
}

void RunConfig::validate() const {
  synth.validate();
  extractor.validate();
  predictor.validate();
  train_extractor.validate();
  train_predictor.validate();
  if (train_extractor.phase != Phase::extractor) throw ConfigError("config: train_extractor.phase must be extractor");
  if (train_predictor.phase != Phase::predictor) throw ConfigError("config: train_predictor.phase must be predictor");
  if (synth.image_side != extractor.image_side || diagnostic.image_side != extractor.image_side) {
    throw ConfigError("config: cohort image side must equal extractor.image_side");
  }
  if (predictor.input_width != kSequenceWidth) throw ConfigError("config: predictor.input_width must be 273");
  if (rebalance_multiplier && *rebalance_multiplier == 0) throw ConfigError("config: rebalance_multiplier must be >= 1");
}

json config_to_json(const VitConfig& c) {
  return {{"blocks", c.blocks}, {"dim", c.dim},         {"heads", c.heads},
          {"rank", c.rank},     {"patch", c.patch},     {"side", c.side},
          {"mlp_ratio", c.mlp_ratio}, {"lora_alpha", c.lora_alpha}, {"lora_init_std", c.lora_init_std},
          {"ln_eps", c.ln_eps}};
}

void merge_config(const json& j, VitConfig& c) {
  Section s(j, "vit");
  s.read("blocks", c.blocks);
  s.read("dim", c.dim);
  s.read("heads", c.heads);
  s.read("rank", c.rank);
  s.read("patch", c.patch);
  s.read("side", c.side);
  s.read("mlp_ratio", c.mlp_ratio);
  s.read("lora_alpha", c.lora_alpha);
  s.read("lora_init_std", c.lora_init_std);
  s.read("ln_eps", c.ln_eps);
}

json config_to_json(const StemConfig& c) {
  return {{"stage_channels", c.stage_channels}, {"strides", c.strides},
          {"kernel", c.kernel},                 {"activation", std::string(activation_name(c.activation))},
          {"bridge_channels", c.bridge_channels}, {"bridge_side", c.bridge_side},
          {"feature_width", c.feature_width},   {"classes", c.classes},
          {"freeze_stem", c.freeze_stem}};
}

void merge_config(const json& j, StemConfig& c) {
  Section s(j, "stem");
  s.read("stage_channels", c.stage_channels);
  s.read("strides", c.strides);
  s.read("kernel", c.kernel);
  read_enum(s, "activation", c.activation, &parse_activation);
  s.read("bridge_channels", c.bridge_channels);
  s.read("bridge_side", c.bridge_side);
  s.read("feature_width", c.feature_width);
  s.read("classes", c.classes);
  s.read("freeze_stem", c.freeze_stem);
}

json config_to_json(const ExtractorConfig& c) {
  return {{"stem", config_to_json(c.stem)}, {"vit", config_to_json(c.vit)}, {"image_side", c.image_side}};
}

void merge_config(const json& j, ExtractorConfig& c) {
  Section s(j, "extractor");
  s.read_with("stem", [&](const json& v) { merge_config(v, c.stem); });
  s.read_with("vit", [&](const json& v) { merge_config(v, c.vit); });
  s.read("image_side", c.image_side);
}

json config_to_json(const BiLstmConfig& c) {
  return {{"input_width", c.input_width},
          {"hidden", c.hidden},
          {"dropout", c.dropout},
          {"bidirectional", c.bidirectional},
          {"readout", c.readout == Readout::final_state ? "final_state" : "mean_pool"},
          {"output", c.output == OutputMode::single_logit ? "single_logit" : "two_logit"},
          {"init_std", c.init_std},
          {"forget_bias", c.forget_bias}};
}

void merge_config(const json& j, BiLstmConfig& c) {
  Section s(j, "predictor");
  s.read("input_width", c.input_width);
  s.read("hidden", c.hidden);
  s.read("dropout", c.dropout);
  s.read("bidirectional", c.bidirectional);
  read_enum(s, "readout", c.readout, &parse_readout);
  read_enum(s, "output", c.output, &parse_output);
  s.read("init_std", c.init_std);
  s.read("forget_bias", c.forget_bias);
}

json config_to_json(const TrainConfig& c) {
  return {{"phase", std::string(phase_name(c.phase))},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"late_lr", c.late_lr},
          {"switch_epoch", c.switch_epoch},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
          {"loss", std::string(loss_name(c.loss))},
          {"focal", {{"alpha", c.focal.alpha}, {"gamma", c.focal.gamma}}},
          {"seed", c.seed},
          {"folds", c.folds}};
}

void merge_config(const json& j, TrainConfig& c) {
  Section s(j, "train");
  read_enum(s, "phase", c.phase, &parse_phase);
  s.read("epochs", c.epochs);
  s.read("batch_size", c.batch_size);
  s.read("base_lr", c.base_lr);
  s.read("late_lr", c.late_lr);
  s.read("switch_epoch", c.switch_epoch);
  s.read_with("adam", [&](const json& v) {
    Section a(v, "adam");
    a.read("beta1", c.adam.beta1);
    a.read("beta2", c.adam.beta2);
    a.read("epsilon", c.adam.epsilon);
  });
  read_enum(s, "loss", c.loss, &parse_loss);
  s.read_with("focal", [&](const json& v) {
    Section f(v, "focal");
    f.read("alpha", c.focal.alpha);
    f.read("gamma", c.focal.gamma);
  });
  s.read("seed", c.seed);
  s.read("folds", c.folds);
}

json config_to_json(const SyntheticCohortConfig& c) {
  return {{"n_smci", c.n_smci},
          {"n_pmci", c.n_pmci},
          {"seed", c.seed},
          {"image_side", c.image_side},
          {"smci", dynamics_json(c.smci)},
          {"pmci", dynamics_json(c.pmci)},
          {"biomarker_noise", c.biomarker_noise},
          {"image_noise", c.image_noise},
          {"scan_severity_sd", c.scan_severity_sd},
          {"label_noise", c.label_noise},
          {"missing_m18_rate", c.missing_m18_rate},
          {"missing_value_rate", c.missing_value_rate}};
}

void merge_config(const json& j, SyntheticCohortConfig& c) {
  Section s(j, "synth");
  s.read_with("null_signal", [&](const json& v) {
    if (!v.is_boolean()) throw ConfigError("config: 'synth.null_signal' must be a boolean");
    if (v.get<bool>()) {
      const SyntheticCohortConfig null_cfg = SyntheticCohortConfig::null_signal();
      c.n_smci = null_cfg.n_smci;
      c.n_pmci = null_cfg.n_pmci;
      c.smci = null_cfg.smci;
      c.pmci = null_cfg.pmci;
    }
  });
  s.read("n_smci", c.n_smci);
  s.read("n_pmci", c.n_pmci);
  s.read("seed", c.seed);
  s.read("image_side", c.image_side);
  s.read_with("smci", [&](const json& v) { merge_dynamics(v, c.smci, "synth.smci"); });
  s.read_with("pmci", [&](const json& v) { merge_dynamics(v, c.pmci, "synth.pmci"); });
  s.read("biomarker_noise", c.biomarker_noise);
  s.read("image_noise", c.image_noise);
  s.read("scan_severity_sd", c.scan_severity_sd);
  s.read("label_noise", c.label_noise);
  s.read("missing_m18_rate", c.missing_m18_rate);
  s.read("missing_value_rate", c.missing_value_rate);
}

json config_to_json(const DiagnosticCohortConfig& c) {
  return {{"per_class", c.per_class}, {"seed", c.seed}, {"image_side", c.image_side}, {"image_noise", c.image_noise}};
}

void merge_config(const json& j, DiagnosticCohortConfig& c) {
  Section s(j, "diagnostic");
  s.read("per_class", c.per_class);
  s.read("seed", c.seed);
  s.read("image_side", c.image_side);
  s.read("image_noise", c.image_noise);
}

json config_to_json(const RunConfig& c) {
  json j = {{"synth", config_to_json(c.synth)},
            {"diagnostic", config_to_json(c.diagnostic)},
            {"extractor", config_to_json(c.extractor)},
            {"predictor", config_to_json(c.predictor)},
            {"train_extractor", config_to_json(c.train_extractor)},
            {"train_predictor", config_to_json(c.train_predictor)}};
  j["rebalance_multiplier"] = c.rebalance_multiplier ? json(*c.rebalance_multiplier) : json(nullptr);
  return j;
}

void merge_config(const json& j, RunConfig& c) {
  Section s(j, "root");
  s.read_with("synth", [&](const json& v) { merge_config(v, c.synth); });
  s.read_with("diagnostic", [&](const json& v) { merge_config(v, c.diagnostic); });
  s.read_with("extractor", [&](const json& v) { merge_config(v, c.extractor); });
  s.read_with("predictor", [&](const json& v) { merge_config(v, c.predictor); });
  s.read_with("train_extractor", [&](const json& v) { merge_config(v, c.train_extractor); });
  s.read_with("train_predictor", [&](const json& v) { merge_config(v, c.train_predictor); });
  s.read_with("rebalance_multiplier", [&](const json& v) {
    if (v.is_null()) {
      c.rebalance_multiplier.reset();
    } else if (v.is_number_unsigned()) {
      c.rebalance_multiplier = v.get<std::size_t>();
    } else {
      throw ConfigError("config: 'rebalance_multiplier' must be a positive integer or null");
    }
  });
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path, bool paper_scale) {
  RunConfig cfg = paper_scale ? RunConfig::paper_scale() : RunConfig::desk();
  if (path) {
    json j;
    try {
      j = json::parse(read_file(*path));
    } catch (const json::parse_error& e) {
      throw ConfigError("config: " + path->string() + " is not valid JSON: " + e.what());
    }
    merge_config(j, cfg);
  }
  return cfg;
}

}  // namespace adprog
