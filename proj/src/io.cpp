#include "crisk/io.hpp"

#include <fstream>

#include "crisk/error.hpp"

namespace crisk {

namespace {

const std::vector<std::string> kFixedColumns = {"id",       "household_id", "stratum",     "entry_age",
                                                "exit_age", "event",        "base_weight", "analysis_weight"};

std::string describe_transform(const CovariateSpec& s) {
  std::string out;
  if (s.kind == CodingKind::binary_pm1) {
    out = s.reverse_coded ? "binary yes=-1/no=+1" : "binary yes=+1/no=-1";
  } else {
    if (s.transform == RawTransform::log) out = "log, ";
    if (s.domain == Domain::genetic) out += "residualized on principal components, ";
    out += s.reverse_coded ? "reverse coded, standardized (mean 0, sd 1)" : "standardized (mean 0, sd 1)";
  }
  if (!s.zero_when.empty()) out += "; 0 when " + s.zero_when;
  return out;
}

}  // namespace

nlohmann::json spec_to_json(const CovariateSpec& spec) {
  return {
      {"name", spec.name},
      {"domain", std::string(to_string(spec.domain))},
      {"kind", std::string(to_string(spec.kind))},
      {"reverse_coded", spec.reverse_coded},
      {"missing_fraction", spec.missing_fraction},
      {"source_column", spec.source()},
      {"transform", std::string(to_string(spec.transform))},
      {"zero_when", spec.zero_when},
      {"female_only", spec.female_only},
      {"applied", describe_transform(spec)},
  };
}

CovariateSpec spec_from_json(const nlohmann::json& j) {
  CovariateSpec s;
  s.name = j.at("name").get<std::string>();
  s.domain = parse_domain(j.value("domain", "health"));
  s.kind = parse_coding_kind(j.value("kind", "standardized_continuous"));
  s.reverse_coded = j.value("reverse_coded", false);
  s.missing_fraction = j.value("missing_fraction", 0.0);
  s.source_column = j.value("source_column", std::string());
  if (s.source_column == s.name) s.source_column.clear();
  s.transform = parse_transform(j.value("transform", "none"));
  s.zero_when = j.value("zero_when", std::string());
  s.female_only = j.value("female_only", false);
  return s;
}

std::vector<CovariateSpec> read_specs(const std::string& path) {
  const auto j = read_json(path);
  const auto& arr = j.is_array() ? j : j.at("covariates");
  std::vector<CovariateSpec> out;
  for (const auto& item : arr) out.push_back(spec_from_json(item));
  return out;
}

std::string manifest_path(const std::string& csv_path) {
  const auto dot = csv_path.rfind(".csv");
  const auto stem = dot == std::string::npos ? csv_path : csv_path.substr(0, dot);
  return stem + ".coding.json";
}

CsvTable to_csv(const AnalysisTable& table) {
  CsvTable csv;
  csv.header = kFixedColumns;
  for (const auto& e : table.extra_columns) csv.header.push_back(e);
  for (const auto& s : table.specs) csv.header.push_back(s.name);
  csv.rows.reserve(table.subjects.size());
  for (const auto& s : table.subjects) {
    std::vector<std::string> row = {s.id,
                                    s.household_id,
                                    std::string(to_string(s.stratum)),
                                    format_double(s.entry_age),
                                    format_double(s.exit_age),
                                    std::string(to_string(s.event)),
                                    format_double(s.base_weight),
                                    format_double(s.analysis_weight)};
    for (std::size_t k = 0; k < table.extra_columns.size(); ++k) row.push_back(k < s.extras.size() ? s.extras[k] : "");
    for (double v : s.covariates) row.push_back(format_double(v));
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

AnalysisTable from_csv(const CsvTable& csv, const std::vector<CovariateSpec>& specs,
                       const std::vector<std::string>& extra_columns) {
  AnalysisTable table;
  table.specs = specs;
  table.extra_columns = extra_columns;
  std::vector<std::size_t> fixed;
  for (const auto& c : kFixedColumns) fixed.push_back(csv.require(c));
  std::vector<std::size_t> extra_idx;
  for (const auto& c : extra_columns) extra_idx.push_back(csv.require(c));
  std::vector<std::size_t> cov_idx;
  for (const auto& s : specs) cov_idx.push_back(csv.require(s.name));
  for (const auto& row : csv.rows) {
    Subject s;
    s.id = row[fixed[0]];
    s.household_id = row[fixed[1]];
    s.stratum = parse_stratum(row[fixed[2]]);
    s.entry_age = parse_double(row[fixed[3]]);
    s.exit_age = parse_double(row[fixed[4]]);
    s.event = parse_event(row[fixed[5]]);
    s.base_weight = parse_double(row[fixed[6]]);
    s.analysis_weight = parse_double(row[fixed[7]]);
    if (is_missing(s.analysis_weight)) s.analysis_weight = s.base_weight;
    if (!(s.exit_age > s.entry_age)) throw Error(ErrorCode::Parse, "subject " + s.id + ": exit_age must exceed entry_age");
    for (auto k : extra_idx) s.extras.push_back(row[k]);
    for (auto k : cov_idx) s.covariates.push_back(parse_double(row[k]));
    table.subjects.push_back(std::move(s));
  }
  return table;
}

void write_analysis(const std::string& path, const AnalysisTable& table, const std::vector<CovariateSpec>& excluded) {
  write_csv(path, to_csv(table));
  nlohmann::json manifest;
  manifest["covariates"] = nlohmann::json::array();
  for (const auto& s : table.specs) manifest["covariates"].push_back(spec_to_json(s));
  manifest["excluded"] = nlohmann::json::array();
  for (const auto& s : excluded) manifest["excluded"].push_back(spec_to_json(s));
  manifest["extra_columns"] = table.extra_columns;
  write_json(manifest_path(path), manifest);
}

AnalysisTable read_analysis(const std::string& path) {
  const auto csv = read_csv(path);
  const auto manifest = read_json(manifest_path(path));
  std::vector<CovariateSpec> specs;
  for (const auto& item : manifest.at("covariates")) specs.push_back(spec_from_json(item));
  std::vector<std::string> extras = manifest.value("extra_columns", std::vector<std::string>{});
  return from_csv(csv, specs, extras);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
}

}  // namespace crisk
