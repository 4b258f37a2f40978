#include "crisk/cohort.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <unordered_map>

#include "crisk/error.hpp"

namespace crisk {

std::optional<std::size_t> AnalysisTable::covariate_index(std::string_view name) const {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name == name) return i;
  }
  return std::nullopt;
}

namespace cohort {

std::vector<double> standardize(std::span<const double> values, bool reverse) {
  std::size_t n = 0;
  double sum = 0.0;
  double scale = 0.0;
  for (double v : values) {
    if (is_missing(v)) continue;
    ++n;
    sum += v;
    scale = std::max(scale, std::abs(v));
  }
  if (n < 2) throw Error(ErrorCode::TooFewValues, fmt::format("{} non-missing values", n));
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) {
    if (!is_missing(v)) ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 1e-13 * scale)) throw Error(ErrorCode::ConstantColumn, "standard deviation is zero");
  const double sign = reverse ? -1.0 : 1.0;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = is_missing(values[i]) ? kMissing : sign * (values[i] - mean) / sd;
  }
  return out;
}

double encode_binary(std::optional<bool> raw) noexcept {
  if (!raw) return kMissing;
  return *raw ? 1.0 : -1.0;
}

std::optional<bool> parse_flag(std::string_view cell) {
  std::string t;
  for (char c : cell) {
    if (c != ' ') t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (t.empty() || t == "na") return std::nullopt;
  if (t == "yes" || t == "y" || t == "true" || t == "1" || t == "+1") return true;
  if (t == "no" || t == "n" || t == "false" || t == "0" || t == "-1") return false;
  throw Error(ErrorCode::Parse, "not a yes/no value: '" + std::string(cell) + "'");
}

bool classify_langa_weir(const CognitionRecord& rec) {
  if (rec.respondent_kind == RespondentKind::self) {
    if (!rec.self_score || rec.proxy_score) {
      throw Error(ErrorCode::InvalidRecord, "self-respondent record needs exactly a self score");
    }
    const int s = *rec.self_score;
    if (s < 0 || s > kSelfScoreMax) throw Error(ErrorCode::ScoreOutOfRange, fmt::format("self score {}", s));
    return s <= kSelfDementiaMax;
  }
  if (!rec.proxy_score || rec.self_score) {
    throw Error(ErrorCode::InvalidRecord, "proxy record needs exactly a proxy score");
  }
  const int s = *rec.proxy_score;
  if (s < 0 || s > kProxyScoreMax) throw Error(ErrorCode::ScoreOutOfRange, fmt::format("proxy score {}", s));
  return s >= kProxyDementiaMin;
}

Outcome derive_event(std::span<const Wave> waves) {
  if (waves.empty()) throw Error(ErrorCode::EmptyHistory, "no waves");
  for (std::size_t i = 1; i < waves.size(); ++i) {
    if (!(waves[i].age > waves[i - 1].age)) {
      throw Error(ErrorCode::NonMonotoneAges, fmt::format("wave {} age {} after {}", i, waves[i].age, waves[i - 1].age));
    }
  }
  if (waves.front().dementia.value_or(false)) {
    throw Error(ErrorCode::BaselineDemented, "first wave is dementia-positive");
  }
  for (const auto& w : waves) {
    if (w.dementia.value_or(false)) return {w.age, EventKind::dementia};
    if (w.vital == VitalStatus::dead) return {w.age, EventKind::death};
  }
  return {waves.back().age, EventKind::censored};
}

MissingnessFilter filter_missingness(std::span<const CovariateSpec> specs, double threshold) {
  MissingnessFilter out;
  for (const auto& s : specs) {
    if (s.missing_fraction < 0.0 || s.missing_fraction > 1.0) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("{}: missing fraction {} outside [0,1]", s.name, s.missing_fraction));
    }
    (s.missing_fraction >= threshold ? out.excluded : out.retained).push_back(s);
  }
  return out;
}

std::vector<double> residualize_pgs(std::span<const double> pgs, const Eigen::MatrixXd& pcs, bool reverse) {
  const auto n = static_cast<Eigen::Index>(pgs.size());
  if (pcs.rows() != n) throw Error(ErrorCode::DimensionMismatch, "PC matrix rows differ from score length");
  Eigen::MatrixXd design(n, pcs.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(pcs.cols()) = pcs;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_missing(pgs[static_cast<std::size_t>(i)])) throw Error(ErrorCode::InvalidArgument, "missing polygenic score");
    y(i) = pgs[static_cast<std::size_t>(i)];
  }
  if (design.hasNaN()) throw Error(ErrorCode::InvalidArgument, "missing principal component value");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    throw Error(ErrorCode::RankDeficientPCs, fmt::format("rank {} < {}", qr.rank(), design.cols()));
  }
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - design * beta;
  const double centered = (y.array() - y.mean()).matrix().norm();
  if (!(resid.norm() > 1e-10 * centered)) {
    throw Error(ErrorCode::ConstantColumn, "score is a linear combination of the principal components");
  }
  return standardize(std::span<const double>(resid.data(), pgs.size()), reverse);
}

std::vector<double> code_covariate(const CovariateSpec& spec, std::span<const std::string> raw,
                                   const std::vector<bool>& zero_mask) {
  const auto forced_zero = [&](std::size_t i) { return !zero_mask.empty() && zero_mask[i]; };
  std::vector<double> out(raw.size(), kMissing);
  if (spec.kind == CodingKind::binary_pm1) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      double v = encode_binary(parse_flag(raw[i]));
      if (spec.reverse_coded && !is_missing(v)) v = -v;
      out[i] = forced_zero(i) ? 0.0 : v;
    }
    return out;
  }
  std::vector<double> values(raw.size(), kMissing);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (forced_zero(i)) continue;
    double v = parse_double(raw[i]);
    if (!is_missing(v) && spec.transform == RawTransform::log) v = std::log(std::max(v, 1.0));
    values[i] = v;
  }
  auto coded = standardize(values, spec.reverse_coded);
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = forced_zero(i) ? 0.0 : coded[i];
  return out;
}

namespace {

struct RawSubject {
  std::vector<std::size_t> rows;
};

std::optional<int> parse_score(const std::string& cell) {
  const double v = parse_double(cell);
  if (is_missing(v)) return std::nullopt;
  if (v != std::floor(v)) throw Error(ErrorCode::ScoreOutOfRange, "non-integer cognition score " + cell);
  return static_cast<int>(v);
}

std::optional<bool> wave_dementia(const std::vector<std::string>& row,
                                  std::optional<std::size_t> override_col, std::size_t kind_col,
                                  std::size_t self_col, std::size_t proxy_col) {
  if (override_col && !row[*override_col].empty()) return parse_flag(row[*override_col]);
  const std::string& kind = row[kind_col];
  if (kind.empty()) return std::nullopt;
  CognitionRecord rec;
  if (kind == "self") {
    rec.respondent_kind = RespondentKind::self;
  } else if (kind == "proxy") {
    rec.respondent_kind = RespondentKind::proxy;
  } else {
    throw Error(ErrorCode::Parse, "respondent_kind must be self or proxy, got '" + kind + "'");
  }
  rec.self_score = parse_score(row[self_col]);
  rec.proxy_score = parse_score(row[proxy_col]);
  const auto& present = rec.respondent_kind == RespondentKind::self ? rec.self_score : rec.proxy_score;
  if (!present) return std::nullopt;
  return classify_langa_weir(rec);
}

}  // namespace

AnalysisTable build_cohort(const CsvTable& long_rows, std::vector<CovariateSpec> specs,
                           const BuildOptions& options, BuildReport* report) {
  BuildReport local;
  BuildReport& rep = report ? *report : local;

  const auto c_id = long_rows.require("id");
  const auto c_house = long_rows.require("household_id");
  const auto c_stratum = long_rows.require("stratum");
  const auto c_age = long_rows.require("interview_age");
  const auto c_kind = long_rows.require("respondent_kind");
  const auto c_self = long_rows.require("self_score");
  const auto c_proxy = long_rows.require("proxy_score");
  const auto c_vital = long_rows.require("vital_status");
  const auto c_weight = long_rows.require("base_weight");
  const auto c_override = long_rows.find("event_override");

  std::vector<std::string> order;
  std::unordered_map<std::string, RawSubject> by_id;
  for (std::size_t r = 0; r < long_rows.rows.size(); ++r) {
    const auto& id = long_rows.rows[r][c_id];
    auto [it, inserted] = by_id.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.rows.push_back(r);
  }

  struct Included {
    std::size_t baseline_row;
    Outcome outcome;
    double entry;
  };
  std::vector<Included> included;
  for (const auto& id : order) {
    const auto& rows = by_id[id].rows;
    const auto& base = long_rows.rows[rows.front()];
    try {
      std::vector<Wave> waves;
      for (auto r : rows) {
        const auto& row = long_rows.rows[r];
        Wave w;
        w.age = parse_double(row[c_age]);
        if (is_missing(w.age)) throw Error(ErrorCode::Parse, "missing interview_age");
        w.dementia = wave_dementia(row, c_override, c_kind, c_self, c_proxy);
        w.vital = (row[c_vital] == "dead" || row[c_vital] == "1") ? VitalStatus::dead : VitalStatus::alive;
        waves.push_back(w);
      }
      const double weight = parse_double(base[c_weight]);
      if (!(weight > 0.0)) {
        rep.warnings.push_back(fmt::format("subject {}: no valid sampling weight, dropped", id));
        ++rep.dropped_subjects;
        continue;
      }
      const double entry = waves.front().age;
      if (options.min_baseline_age && entry < *options.min_baseline_age) {
        ++rep.dropped_subjects;
        continue;
      }
      const auto outcome = derive_event(waves);
      if (!(outcome.exit_age > entry)) {
        rep.warnings.push_back(fmt::format("subject {}: no follow-up after baseline, dropped", id));
        ++rep.dropped_subjects;
        continue;
      }
      included.push_back({rows.front(), outcome, entry});
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BaselineDemented || e.code() == ErrorCode::NonMonotoneAges) {
        rep.warnings.push_back(fmt::format("subject {}: {}, dropped", id, e.what()));
        ++rep.dropped_subjects;
        continue;
      }
      throw;
    }
  }
  if (included.empty()) throw Error(ErrorCode::EmptyCohort, "no subject passed the inclusion rules");
  const std::size_t n = included.size();

  auto raw_column = [&](const std::string& column) -> std::optional<std::vector<std::string>> {
    const auto c = long_rows.find(column);
    if (!c) return std::nullopt;
    std::vector<std::string> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = long_rows.rows[included[i].baseline_row][*c];
    return out;
  };

  auto zero_mask_for = [&](const CovariateSpec& spec) -> std::vector<bool> {
    if (spec.zero_when.empty()) return {};
    const CovariateSpec* gate = nullptr;
    for (const auto& s : specs) {
      if (s.name == spec.zero_when) gate = &s;
    }
    const auto raw = raw_column(gate ? gate->source() : spec.zero_when);
    if (!raw) return {};
    std::vector<bool> mask(n, false);
    for (std::size_t i = 0; i < n; ++i) mask[i] = parse_flag((*raw)[i]).value_or(false);
    return mask;
  };

  // Missingness over the baseline wave of included subjects.
  for (auto& spec : specs) {
    const auto raw = raw_column(spec.source());
    if (!raw) {
      rep.warnings.push_back(fmt::format("covariate {}: source column '{}' absent", spec.name, spec.source()));
      spec.missing_fraction = 1.0;
      continue;
    }
    const auto mask = zero_mask_for(spec);
    std::size_t missing = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((*raw)[i].empty() && (mask.empty() || !mask[i])) ++missing;
    }
    spec.missing_fraction = static_cast<double>(missing) / static_cast<double>(n);
  }

  auto filtered = filter_missingness(specs, options.missing_threshold);
  for (const auto& s : filtered.excluded) {
    rep.warnings.push_back(fmt::format("covariate {} excluded: {:.3f} missing", s.name, s.missing_fraction));
  }
  rep.excluded = filtered.excluded;

  std::optional<Eigen::MatrixXd> pcs;
  {
    bool all_present = !options.pc_columns.empty();
    for (const auto& c : options.pc_columns) all_present = all_present && long_rows.find(c).has_value();
    if (all_present) {
      Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(options.pc_columns.size()));
      for (std::size_t j = 0; j < options.pc_columns.size(); ++j) {
        const auto col = *raw_column(options.pc_columns[j]);
        for (std::size_t i = 0; i < n; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(col[i]);
      }
      pcs = std::move(m);
    }
  }

  std::vector<std::vector<double>> coded;
  coded.reserve(filtered.retained.size());
  for (const auto& spec : filtered.retained) {
    const auto raw = *raw_column(spec.source());
    const bool genetic = spec.domain == Domain::genetic && spec.kind == CodingKind::standardized_continuous;
    if (genetic && pcs) {
      std::vector<std::size_t> complete;
      std::vector<double> y;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = parse_double(raw[i]);
        if (is_missing(v) || pcs->row(static_cast<Eigen::Index>(i)).hasNaN()) continue;
        complete.push_back(i);
        y.push_back(v);
      }
      Eigen::MatrixXd sub(static_cast<Eigen::Index>(complete.size()), pcs->cols());
      for (std::size_t k = 0; k < complete.size(); ++k) sub.row(static_cast<Eigen::Index>(k)) = pcs->row(static_cast<Eigen::Index>(complete[k]));
      const auto resid = residualize_pgs(y, sub, spec.reverse_coded);
      std::vector<double> col(n, kMissing);
      for (std::size_t k = 0; k < complete.size(); ++k) col[complete[k]] = resid[k];
      coded.push_back(std::move(col));
      rep.pgs_residualized = true;
      continue;
    }
    const auto mask = zero_mask_for(spec);
    try {
      coded.push_back(code_covariate(spec, raw, mask));
    } catch (const Error& e) {
      throw Error(e.code(), "covariate " + spec.name + ": " + e.what());
    }
  }

  AnalysisTable table;
  table.specs = filtered.retained;
  table.extra_columns = options.keep_columns;
  table.subjects.reserve(n);
  std::vector<std::optional<std::vector<std::string>>> kept;
  for (const auto& c : options.keep_columns) {
    kept.push_back(raw_column(c));
    if (!kept.back()) rep.warnings.push_back("kept column '" + c + "' absent from input");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& base = long_rows.rows[included[i].baseline_row];
    Subject s;
    s.id = base[c_id];
    s.household_id = base[c_house];
    s.stratum = parse_stratum(base[c_stratum]);
    s.entry_age = included[i].entry;
    s.exit_age = included[i].outcome.exit_age;
    s.event = included[i].outcome.event;
    s.base_weight = parse_double(base[c_weight]);
    s.analysis_weight = s.base_weight;
    s.covariates.resize(coded.size());
    for (std::size_t j = 0; j < coded.size(); ++j) s.covariates[j] = coded[j][i];
    for (const auto& k : kept) s.extras.push_back(k ? (*k)[i] : std::string());
    table.subjects.push_back(std::move(s));
  }
  return table;
}

}  // namespace cohort
}  // namespace crisk
