#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "crisk/cohort.hpp"

namespace crisk {

nlohmann::json spec_to_json(const CovariateSpec& spec);
CovariateSpec spec_from_json(const nlohmann::json& j);

std::vector<CovariateSpec> read_specs(const std::string& path);

/// Path of the coding manifest that accompanies an analysis CSV.
std::string manifest_path(const std::string& csv_path);

/// Wide analysis CSV: id, household_id, stratum, entry_age, exit_age, event, base_weight,
/// analysis_weight, <extra columns>, <covariates>. The coding manifest is written next
/// to it; `excluded` lands in the manifest only.
CsvTable to_csv(const AnalysisTable& table);
AnalysisTable from_csv(const CsvTable& csv, const std::vector<CovariateSpec>& specs,
                       const std::vector<std::string>& extra_columns);

void write_analysis(const std::string& path, const AnalysisTable& table,
                    const std::vector<CovariateSpec>& excluded = {});
AnalysisTable read_analysis(const std::string& path);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace crisk
