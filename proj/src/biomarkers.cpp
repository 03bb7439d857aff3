#include "adprog/biomarkers.hpp"

#include <fstream>
#include <sstream>

#include "adprog/error.hpp"
#include "adprog/text_io.hpp"

namespace adprog {

std::optional<std::size_t> biomarker_index(std::string_view name) {
  for (std::size_t i = 0; i < kBiomarkerCount; ++i)
    if (kBiomarkerNames[i] == name) return i;
  return std::nullopt;
}

std::string_view visit_code(Visit v) {
  switch (v) {
    case Visit::bl: return "bl";
    case Visit::m06: return "m06";
    case Visit::m12: return "m12";
    case Visit::m18: return "m18";
  }
  return "?";
}

std::optional<Visit> parse_visit(std::string_view code) {
  for (Visit v : kVisits)
    if (visit_code(v) == code) return v;
  return std::nullopt;
}

double visit_years(Visit v) { return 0.5 * static_cast<double>(visit_index(v)); }

bool BiomarkerRow::complete() const {
  for (const auto& v : values)
    if (!v) return false;
  return true;
}

BiomarkerTable parse_biomarkers(std::istream& in) {
  BiomarkerTable table;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("subject_id");
  const auto header = split(line, ',');
  std::optional<std::size_t> subject_col, visit_col;
  std::array<std::optional<std::size_t>, kBiomarkerCount> value_cols{};
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string_view name = trim(header[c]);
    if (name == "subject_id") {
      subject_col = c;
    } else if (name == "visit_code") {
      visit_col = c;
    } else if (auto idx = biomarker_index(name)) {
      value_cols[*idx] = c;
    } else {
      table.warnings.push_back("biomarkers: ignoring unknown column '" + std::string(name) + "'");
    }
  }
  const auto require = [](const std::optional<std::size_t>& col, std::string_view name) {
    if (!col) throw SchemaError(std::string(name));
  };
  require(subject_col, "subject_id");
  require(visit_col, "visit_code");
  for (std::size_t i = 0; i < kBiomarkerCount; ++i) require(value_cols[i], kBiomarkerNames[i]);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw ParseError(line_no, "biomarkers: expected " + std::to_string(header.size()) + " cells, found " +
                                    std::to_string(cells.size()));
    }
    BiomarkerRow row;
    row.subject_id = std::string(trim(cells[*subject_col]));
    if (row.subject_id.empty()) throw ParseError(line_no, "biomarkers: empty subject_id");
    const auto visit = parse_visit(trim(cells[*visit_col]));
    if (!visit) {
      throw ParseError(line_no, "biomarkers: unknown visit_code '" + std::string(trim(cells[*visit_col])) + "'");
    }
    row.visit = *visit;
    for (std::size_t i = 0; i < kBiomarkerCount; ++i) {
      const std::string_view cell = trim(cells[*value_cols[i]]);
      if (cell.empty() || cell == "NA") continue;
      double v = 0.0;
      if (!parse_double(cell, v)) {
        throw ParseError(line_no, "biomarkers: cannot parse " + std::string(kBiomarkerNames[i]) + " value '" +
                                      std::string(cell) + "'");
      }
      row.values[i] = v;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

BiomarkerTable load_biomarkers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("biomarkers: cannot open " + path.string());
  return parse_biomarkers(in);
}

std::string format_biomarkers(std::span<const BiomarkerRow> rows) {
  std::string out = "subject_id,visit_code";
  for (std::string_view name : kBiomarkerNames) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (const BiomarkerRow& row : rows) {
    out += row.subject_id;
    out += ',';
    out += visit_code(row.visit);
    for (const auto& v : row.values) {
      out += ',';
      out += v ? format_exact(*v) : std::string("NA");
    }
    out += '\n';
  }
  return out;
}

void write_biomarkers(const std::filesystem::path& path, std::span<const BiomarkerRow> rows) {
  write_file(path, format_biomarkers(rows));
}

}  // namespace adprog
