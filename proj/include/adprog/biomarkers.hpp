#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace adprog {

inline constexpr std::size_t kBiomarkerCount = 17;

// Column order of every biomarker file and of the biomarker block in a
// feature sequence.
inline constexpr std::array<std::string_view, kBiomarkerCount> kBiomarkerNames = {
    "CDRSB",           "ADAS11",         "ADAS13",           "ADASQ4",
    "MMSE",            "RAVLT_immediate", "RAVLT_learning",  "RAVLT_forgetting",
    "RAVLT_perc_forgetting", "FAQ",      "Ventricles",       "Hippocampus",
    "WholeBrain",      "Entorhinal",     "Fusiform",         "MidTemp",
    "ICV"};

std::optional<std::size_t> biomarker_index(std::string_view name);

enum class Visit : std::uint8_t { bl = 0, m06 = 1, m12 = 2, m18 = 3 };
inline constexpr std::size_t kTimepoints = 4;
inline constexpr std::array<Visit, kTimepoints> kVisits = {Visit::bl, Visit::m06, Visit::m12, Visit::m18};

std::string_view visit_code(Visit v);
std::optional<Visit> parse_visit(std::string_view code);
// Years since baseline: 0, 0.5, 1, 1.5.
double visit_years(Visit v);
inline std::size_t visit_index(Visit v) { return static_cast<std::size_t>(v); }

struct BiomarkerRow {
  std::string subject_id;
  Visit visit = Visit::bl;
  // std::nullopt marks a missing value ("NA" or empty in the file).
  std::array<std::optional<double>, kBiomarkerCount> values{};

  bool complete() const;
};

struct BiomarkerTable {
  std::vector<BiomarkerRow> rows;
  std::vector<std::string> warnings;
};

// Header must contain subject_id, visit_code and all 17 names (any order);
// other columns are ignored with a warning. Rows keep file order.
BiomarkerTable parse_biomarkers(std::istream& in);
BiomarkerTable load_biomarkers(const std::filesystem::path& path);

std::string format_biomarkers(std::span<const BiomarkerRow> rows);
void write_biomarkers(const std::filesystem::path& path, std::span<const BiomarkerRow> rows);

}  // namespace adprog
