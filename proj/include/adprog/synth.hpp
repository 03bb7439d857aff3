#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adprog/biomarkers.hpp"
#include "adprog/random.hpp"
#include "adprog/tensor.hpp"

namespace adprog {

// Latent severity s(t) = s0 + rate * t, t in years since baseline.
struct ClassDynamics {
  double baseline_mean = 0.0;
  double baseline_sd = 0.35;
  double rate_mean = 0.1;  // per year
  double rate_sd = 0.1;
};

struct SyntheticCohortConfig {
  std::size_t n_smci = 390;
  std::size_t n_pmci = 140;
  std::uint64_t seed = 7;
  std::size_t image_side = 64;
  ClassDynamics smci{0.0, 0.35, 0.1, 0.1};
  ClassDynamics pmci{1.0, 0.35, 0.9, 0.25};
  // Scales the per-visit measurement noise of every biomarker.
  double biomarker_noise = 1.0;
  // Gaussian pixel noise before per-slice standardization.
  double image_noise = 0.05;
  // Per-visit spread of the severity the phantom is drawn from, so scans
  // track disease state only loosely.
  double scan_severity_sd = 0.6;
  // Probability that a recorded label is flipped.
  double label_noise = 0.0;
  // Probability that a subject lacks the m18 visit (both modalities).
  double missing_m18_rate = 0.1;
  // Probability that a single non-baseline biomarker value is missing.
  double missing_value_rate = 0.02;

  // Balanced counts and identical dynamics for both classes; subjects still
  // vary, but nothing depends on the label.
  static SyntheticCohortConfig null_signal();
  static SyntheticCohortConfig paper_scale();
  void validate() const;
};

struct DiagnosticCohortConfig {
  std::size_t per_class = 40;  // CN, MCI, AD
  std::uint64_t seed = 11;
  std::size_t image_side = 64;
  double image_noise = 0.05;
};

// Single-channel slice, per-slice standardized and stored as float.
struct SliceImage {
  std::string sample_id;
  Visit visit = Visit::bl;
  std::size_t side = 0;
  std::vector<float> pixels;

  // [3 x side x side], the slice repeated in every channel.
  Tensor to_tensor() const;
};

struct SyntheticCohort {
  std::vector<SliceImage> images;          // subject order, then visit order
  std::vector<BiomarkerRow> biomarkers;    // same order
  std::map<std::string, int> labels;       // 0 = sMCI, 1 = pMCI
};

struct DiagnosticCohort {
  std::vector<SliceImage> images;     // baseline only
  std::map<std::string, int> labels;  // 0 = CN, 1 = MCI, 2 = AD
};

SyntheticCohort synth_generate(const SyntheticCohortConfig& cfg);
DiagnosticCohort synth_diagnostic(const DiagnosticCohortConfig& cfg);

// Phantom slice for a latent severity; exposed for tests.
std::vector<float> render_phantom(std::size_t side, double severity, double shape_jitter_x, double shape_jitter_y,
                                  double noise_sd, Rng& rng);

// Binary archive: "ADPIMG01", u32 count, then per image u16 id length, id
// bytes, u8 visit, u32 side, side*side little-endian float32.
void write_images(const std::filesystem::path& path, std::span<const SliceImage> images);
std::vector<SliceImage> load_images(const std::filesystem::path& path);

// Columns: subject_id, group, label.
void write_labels(const std::filesystem::path& path, const std::map<std::string, int>& labels,
                  std::span<const std::string> group_names);
std::map<std::string, int> load_labels(const std::filesystem::path& path);

}  // namespace adprog
