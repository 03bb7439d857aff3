#include "adprog/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "adprog/error.hpp"
#include "adprog/text_io.hpp"

namespace adprog {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr char kImageMagic[8] = {'A', 'D', 'P', 'I', 'M', 'G', '0', '1'};

struct MarkerModel {
  double mean;
  double subject_sd;
  double effect;  // per unit severity
  double noise_sd;
  double lo;
  double hi;
};

// Same order as kBiomarkerNames.
constexpr MarkerModel kMarkers[kBiomarkerCount] = {
    {1.5, 0.8, 1.0, 0.3, 0.0, 18.0},            // CDRSB
    {10.0, 3.5, 3.5, 1.0, 0.0, 70.0},           // ADAS11
    {17.0, 5.0, 5.0, 1.5, 0.0, 85.0},           // ADAS13
    {5.5, 2.0, 1.8, 0.7, 0.0, 10.0},            // ADASQ4
    {27.5, 1.6, -1.5, 0.6, 0.0, 30.0},          // MMSE
    {33.0, 8.0, -6.0, 2.5, 0.0, 75.0},          // RAVLT_immediate
    {4.0, 2.3, -1.3, 0.9, -5.0, 14.0},          // RAVLT_learning
    {4.5, 2.3, 0.8, 0.9, -5.0, 15.0},           // RAVLT_forgetting
    {55.0, 28.0, 15.0, 8.0, -100.0, 100.0},     // RAVLT_perc_forgetting
    {3.0, 3.5, 3.0, 1.0, 0.0, 30.0},            // FAQ
    {40000.0, 18000.0, 6000.0, 1500.0, 5000.0, 2e5},       // Ventricles
    {6800.0, 950.0, -550.0, 150.0, 2000.0, 12000.0},       // Hippocampus
    {1.02e6, 1.0e5, -1.5e4, 5.0e3, 5e5, 1.6e6},            // WholeBrain
    {3500.0, 650.0, -300.0, 120.0, 1000.0, 6500.0},        // Entorhinal
    {17000.0, 2400.0, -800.0, 400.0, 8000.0, 30000.0},     // Fusiform
    {19300.0, 2800.0, -1000.0, 450.0, 8000.0, 33000.0},    // MidTemp
    {1.53e6, 1.6e5, 0.0, 1.0e4, 1e6, 2.2e6},               // ICV
};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Smooth indicator of the ellipse interior.
double soft_ellipse(double u, double v, double cu, double cv, double ru, double rv, double edge) {
  const double du = (u - cu) / ru, dv = (v - cv) / rv;
  const double rho = std::sqrt(du * du + dv * dv);
  return logistic((1.0 - rho) * std::min(ru, rv) / edge);
}

std::string subject_name(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04zu", prefix, i + 1);
  return buf;
}

}  // namespace

SyntheticCohortConfig SyntheticCohortConfig::null_signal() {
  SyntheticCohortConfig cfg;
  cfg.n_smci = 265;
  cfg.n_pmci = 265;
  cfg.smci = {0.5, 0.35, 0.5, 0.25};
  cfg.pmci = cfg.smci;
  return cfg;
}

SyntheticCohortConfig SyntheticCohortConfig::paper_scale() {
  SyntheticCohortConfig cfg;
  cfg.image_side = 224;
  return cfg;
}

void SyntheticCohortConfig::validate() const {
  if (image_side < 32) throw ConfigError("synth: image side must be at least 32");
  for (const ClassDynamics* d : {&smci, &pmci}) {
    if (!(d->baseline_sd >= 0.0) || !(d->rate_sd >= 0.0)) throw ConfigError("synth: spreads must be non-negative");
    if (!std::isfinite(d->baseline_mean) || !std::isfinite(d->rate_mean)) throw ConfigError("synth: non-finite mean");
  }
  if (!(biomarker_noise >= 0.0) || !(image_noise >= 0.0) || !(scan_severity_sd >= 0.0)) throw ConfigError("synth: noise must be non-negative");
  for (double p : {label_noise, missing_m18_rate, missing_value_rate}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: rates must lie in [0, 1]");
  }
}

Tensor SliceImage::to_tensor() const {
  const std::size_t plane = side * side;
  if (pixels.size() != plane) throw DimensionError("image " + sample_id + ": pixel count does not match side");
  std::vector<double> v(3 * plane);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) v[c * plane + i] = static_cast<double>(pixels[i]);
  return Tensor({3, side, side}, std::move(v));
}

std::vector<float> render_phantom(std::size_t side, double severity, double shape_jitter_x, double shape_jitter_y,
                                  double noise_sd, Rng& rng) {
  const double edge = 0.012;
  const double brain_a = 0.40 * (1.0 + 0.04 * shape_jitter_x);
  const double brain_b = 0.33 * (1.0 + 0.04 * shape_jitter_y);
  // Cortical rim thins, ventricles grow and hippocampal blobs shrink with severity.
  const double rim = std::clamp(0.08 * (1.0 - 0.15 * severity), 0.02, 0.12);
  const double ventricle = std::clamp(0.06 * (1.0 + 0.35 * severity), 0.02, 0.2);
  const double hippocampus = std::clamp(0.05 * (1.0 - 0.18 * severity), 0.012, 0.08);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> img(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(side) - 0.5;
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(side) - 0.5;
      const double outer = soft_ellipse(u, v, 0.0, 0.0, brain_a, brain_b, edge);
      const double inner = soft_ellipse(u, v, 0.0, 0.0, brain_a - rim, brain_b - rim, edge);
      double value = 1.0 * (outer - inner) + 0.6 * inner;
      value -= 0.5 * soft_ellipse(u, v, 0.0, -0.02, ventricle * 1.3, ventricle, edge);
      for (double side_sign : {-1.0, 1.0}) {
        value += 0.4 * soft_ellipse(u, v, side_sign * 0.15, 0.09, hippocampus * 1.4, hippocampus, edge);
      }
      if (noise_sd > 0.0) value += noise_sd * noise(rng);
      img[y * side + x] = value;
    }
  }
  double mean = 0.0;
  for (double p : img) mean += p;
  mean /= static_cast<double>(img.size());
  double var = 0.0;
  for (double p : img) var += (p - mean) * (p - mean);
  const double sd = std::sqrt(var / static_cast<double>(img.size()));
  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(sd > 0.0 ? (img[i] - mean) / sd : 0.0);
  return out;
}

SyntheticCohort synth_generate(const SyntheticCohortConfig& cfg) {
  cfg.validate();
  SyntheticCohort cohort;
  const std::size_t total = cfg.n_smci + cfg.n_pmci;
  for (std::size_t i = 0; i < total; ++i) {
    const int label = i < cfg.n_smci ? 0 : 1;
    const ClassDynamics& dyn = label == 0 ? cfg.smci : cfg.pmci;
    const std::string id = subject_name('S', i);
    Rng rng = make_rng(cfg.seed, {0x53594E54, i});
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double s0 = dyn.baseline_mean + dyn.baseline_sd * gauss(rng);
    const double rate = dyn.rate_mean + dyn.rate_sd * gauss(rng);
    std::array<double, kBiomarkerCount> offset{};
    for (std::size_t f = 0; f < kBiomarkerCount; ++f) {
      offset[f] = cfg.biomarker_noise > 0.0 ? kMarkers[f].subject_sd * gauss(rng) : 0.0;
    }
    const double jitter_x = cfg.image_noise > 0.0 ? gauss(rng) : 0.0;
    const double jitter_y = cfg.image_noise > 0.0 ? gauss(rng) : 0.0;
    const bool drop_m18 = unit(rng) < cfg.missing_m18_rate;
    const bool flip = unit(rng) < cfg.label_noise;
    cohort.labels[id] = flip ? 1 - label : label;
    for (Visit visit : kVisits) {
      if (visit == Visit::m18 && drop_m18) continue;
      const double severity = s0 + rate * visit_years(visit);
      SliceImage img;
      img.sample_id = id;
      img.visit = visit;
      img.side = cfg.image_side;
      const double scan_severity = severity + (cfg.scan_severity_sd > 0.0 ? cfg.scan_severity_sd * gauss(rng) : 0.0);
      img.pixels = render_phantom(cfg.image_side, scan_severity, jitter_x, jitter_y, cfg.image_noise, rng);
      cohort.images.push_back(std::move(img));
      BiomarkerRow row;
      row.subject_id = id;
      row.visit = visit;
      for (std::size_t f = 0; f < kBiomarkerCount; ++f) {
        const MarkerModel& m = kMarkers[f];
        double v = m.mean + offset[f] + m.effect * severity;
        if (cfg.biomarker_noise > 0.0) v += cfg.biomarker_noise * m.noise_sd * gauss(rng);
        v = std::clamp(v, m.lo, m.hi);
        const bool missing = visit != Visit::bl && unit(rng) < cfg.missing_value_rate;
        if (!missing) row.values[f] = v;
      }
      cohort.biomarkers.push_back(std::move(row));
    }
  }
  return cohort;
}

DiagnosticCohort synth_diagnostic(const DiagnosticCohortConfig& cfg) {
  if (cfg.per_class == 0) throw ConfigError("synth: diagnostic cohort needs at least one subject per class");
  if (cfg.image_side < 32) throw ConfigError("synth: image side must be at least 32");
  if (!(cfg.image_noise >= 0.0)) throw ConfigError("synth: noise must be non-negative");
  constexpr double kSeverity[3][2] = {{-0.5, 0.3}, {0.6, 0.4}, {2.2, 0.4}};
  DiagnosticCohort cohort;
  for (std::size_t i = 0; i < 3 * cfg.per_class; ++i) {
    const int label = static_cast<int>(i / cfg.per_class);
    const std::string id = subject_name('D', i);
    Rng rng = make_rng(cfg.seed, {0x44494147, i});
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double severity = kSeverity[label][0] + kSeverity[label][1] * gauss(rng);
    const double jitter_x = gauss(rng), jitter_y = gauss(rng);
    SliceImage img;
    img.sample_id = id;
    img.visit = Visit::bl;
    img.side = cfg.image_side;
    img.pixels = render_phantom(cfg.image_side, severity, jitter_x, jitter_y, cfg.image_noise, rng);
    cohort.images.push_back(std::move(img));
    cohort.labels[id] = label;
  }
  return cohort;
}

void write_images(const std::filesystem::path& path, std::span<const SliceImage> images) {
  std::string out(kImageMagic, sizeof kImageMagic);
  const auto put = [&out](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  const auto count = static_cast<std::uint32_t>(images.size());
  put(&count, 4);
  for (const SliceImage& img : images) {
    if (img.pixels.size() != img.side * img.side) throw DimensionError("write_images: bad pixel count");
    const auto len = static_cast<std::uint16_t>(img.sample_id.size());
    put(&len, 2);
    put(img.sample_id.data(), len);
    const auto visit = static_cast<std::uint8_t>(img.visit);
    put(&visit, 1);
    const auto side = static_cast<std::uint32_t>(img.side);
    put(&side, 4);
    put(img.pixels.data(), img.pixels.size() * sizeof(float));
  }
  write_file(path, out);
}

std::vector<SliceImage> load_images(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  const auto take = [&](void* dst, std::size_t n) {
    if (pos + n > data.size()) throw InputError("images: truncated file " + path.string());
    std::memcpy(dst, data.data() + pos, n);
    pos += n;
  };
  char magic[8];
  take(magic, 8);
  if (std::memcmp(magic, kImageMagic, 8) != 0) throw InputError("images: bad magic in " + path.string());
  std::uint32_t count = 0;
  take(&count, 4);
  std::vector<SliceImage> images(count);
  for (SliceImage& img : images) {
    std::uint16_t len = 0;
    take(&len, 2);
    img.sample_id.resize(len);
    take(img.sample_id.data(), len);
    std::uint8_t visit = 0;
    take(&visit, 1);
    if (visit >= kTimepoints) throw InputError("images: bad visit index");
    img.visit = static_cast<Visit>(visit);
    std::uint32_t side = 0;
    take(&side, 4);
    img.side = side;
    img.pixels.resize(static_cast<std::size_t>(side) * side);
    take(img.pixels.data(), img.pixels.size() * sizeof(float));
  }
  if (pos != data.size()) throw InputError("images: trailing bytes in " + path.string());
  return images;
}

void write_labels(const std::filesystem::path& path, const std::map<std::string, int>& labels,
                  std::span<const std::string> group_names) {
  std::string out = "subject_id,group,label\n";
  for (const auto& [id, label] : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= group_names.size()) {
      throw InputError("write_labels: label out of range for " + id);
    }
    out += id + "," + group_names[static_cast<std::size_t>(label)] + "," + std::to_string(label) + "\n";
  }
  write_file(path, out);
}

std::map<std::string, int> load_labels(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  std::map<std::string, int> labels;
  std::size_t line_no = 0;
  std::optional<std::size_t> id_col, label_col;
  for (std::string_view line : split(data, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (!id_col) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (trim(cells[c]) == "subject_id") id_col = c;
        if (trim(cells[c]) == "label") label_col = c;
      }
      if (!id_col) throw SchemaError("subject_id");
      if (!label_col) throw SchemaError("label");
      continue;
    }
    if (cells.size() <= std::max(*id_col, *label_col)) throw ParseError(line_no, "labels: short row");
    double v = 0.0;
    if (!parse_double(cells[*label_col], v) || v != std::floor(v)) throw ParseError(line_no, "labels: bad label");
    labels[std::string(trim(cells[*id_col]))] = static_cast<int>(v);
  }
  if (!id_col) throw SchemaError("subject_id");
  return labels;
}

}  // namespace adprog
