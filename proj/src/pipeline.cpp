#include "crisk/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "crisk/error.hpp"
#include "crisk/io.hpp"
#include "crisk/parallel.hpp"
#include "crisk/rng.hpp"

#ifndef CRISK_VERSION
#define CRISK_VERSION "0.0.0"
#endif

namespace crisk::pipeline {

namespace {

std::vector<std::size_t> household_clusters(const AnalysisTable& table, std::span<const std::size_t> rows) {
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    const auto& h = table.subjects[r].household_id;
    const auto key = h.empty() ? "\x01" + table.subjects[r].id : h;
    out.push_back(ids.try_emplace(key, ids.size()).first->second);
  }
  return out;
}

std::string cell(double v) { return format_double(v); }
std::string cell(std::size_t v) { return std::to_string(v); }

std::size_t parse_count(const std::string& s) {
  if (s.empty()) return 0;
  return static_cast<std::size_t>(std::stoull(s));
}

}  // namespace

std::vector<std::size_t> stratum_rows(const AnalysisTable& table, Stratum stratum) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.subjects.size(); ++i) {
    if (table.subjects[i].stratum == stratum) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> stratum_predictors(const AnalysisTable& table, Stratum stratum) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < table.specs.size(); ++j) {
    if (table.specs[j].female_only && is_male(stratum)) continue;
    cols.push_back(j);
  }
  return cols;
}

std::pair<double, double> weighted_mean_se(std::span<const double> x, std::span<const double> w,
                                           std::span<const std::size_t> cluster) {
  double total = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (is_missing(x[i])) continue;
    total += w[i];
    sum += w[i] * x[i];
  }
  if (!(total > 0.0)) return {kMissing, kMissing};
  const double m = sum / total;
  std::map<std::size_t, double> z;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (is_missing(x[i])) continue;
    z[cluster[i]] += w[i] * (x[i] - m) / total;
  }
  const double h = static_cast<double>(z.size());
  if (h < 2.0) return {m, kMissing};
  double ss = 0.0;
  for (const auto& [id, v] : z) ss += v * v;
  return {m, std::sqrt(h / (h - 1.0) * ss)};
}

std::vector<DescriptiveRow> describe(const AnalysisTable& table, std::span<const std::size_t> rows,
                                     const std::string& group) {
  const auto cluster = household_clusters(table, rows);
  std::vector<double> w;
  for (auto r : rows) w.push_back(table.subjects[r].analysis_weight);
  std::vector<DescriptiveRow> out;
  auto add = [&](const std::string& name, bool binary, const std::vector<double>& x) {
    DescriptiveRow row{group, name, binary};
    row.n = static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [](double v) { return !is_missing(v); }));
    std::tie(row.estimate, row.se) = weighted_mean_se(x, w, cluster);
    out.push_back(std::move(row));
  };
  std::vector<double> age, female, black;
  for (auto r : rows) {
    const auto& s = table.subjects[r];
    age.push_back(s.entry_age);
    female.push_back(is_male(s.stratum) ? 0.0 : 1.0);
    black.push_back(s.stratum == Stratum::nhb_men || s.stratum == Stratum::nhb_women ? 1.0 : 0.0);
  }
  add("Baseline Age", false, age);
  add("Female", true, female);
  add("NH Black", true, black);
  for (std::size_t j = 0; j < table.specs.size(); ++j) {
    const bool binary = table.specs[j].kind == CodingKind::binary_pm1;
    std::vector<double> x;
    for (auto r : rows) {
      const double v = table.subjects[r].covariates[j];
      x.push_back(binary && !is_missing(v) ? (v + 1.0) / 2.0 : v);
    }
    add(table.specs[j].name, binary, x);
  }
  return out;
}

Eigen::MatrixXd correlations(const AnalysisTable& table, std::span<const std::size_t> rows,
                             std::span<const std::size_t> columns) {
  if (rows.size() < 2) throw Error(ErrorCode::EmptySample, "correlations need at least two subjects");
  const auto m = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(m, m, kMissing);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a; b < m; ++b) {
      double sw = 0.0, sx = 0.0, sy = 0.0;
      for (auto i : rows) {
        const auto& s = table.subjects[i];
        const double x = s.covariates[columns[static_cast<std::size_t>(a)]];
        const double y = s.covariates[columns[static_cast<std::size_t>(b)]];
        if (is_missing(x) || is_missing(y)) continue;
        sw += s.analysis_weight;
        sx += s.analysis_weight * x;
        sy += s.analysis_weight * y;
      }
      if (!(sw > 0.0)) continue;
      const double mx = sx / sw, my = sy / sw;
      double cxy = 0.0, cxx = 0.0, cyy = 0.0;
      for (auto i : rows) {
        const auto& s = table.subjects[i];
        const double x = s.covariates[columns[static_cast<std::size_t>(a)]];
        const double y = s.covariates[columns[static_cast<std::size_t>(b)]];
        if (is_missing(x) || is_missing(y)) continue;
        cxy += s.analysis_weight * (x - mx) * (y - my);
        cxx += s.analysis_weight * (x - mx) * (x - mx);
        cyy += s.analysis_weight * (y - my) * (y - my);
      }
      if (!(cxx > 0.0) || !(cyy > 0.0)) continue;
      const double v = a == b ? 1.0 : std::clamp(cxy / std::sqrt(cxx * cyy), -1.0, 1.0);
      r(a, b) = r(b, a) = v;
    }
  }
  return r;
}

std::string_view to_string(ModelKind kind) noexcept {
  return kind == ModelKind::fine_gray ? "fine_gray" : "cause_specific";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "fine_gray" || text == "fg") return ModelKind::fine_gray;
  if (text == "cause_specific" || text == "cs") return ModelKind::cause_specific;
  throw Error(ErrorCode::Parse, fmt::format("unknown model '{}'", text));
}

std::vector<PredictorFit> run_sweep(const AnalysisTable& table, std::span<const std::size_t> rows,
                                    std::span<const std::size_t> predictors, ModelKind model, unsigned threads) {
  const auto cluster = household_clusters(table, rows);
  auto design_for = [&](const std::vector<std::size_t>& keep) {
    std::vector<double> entry, exit, w;
    std::vector<EventKind> ev;
    std::vector<std::size_t> cl;
    for (auto k : keep) {
      const auto& s = table.subjects[rows[k]];
      entry.push_back(s.entry_age);
      exit.push_back(s.exit_age);
      ev.push_back(s.event);
      w.push_back(s.analysis_weight);
      cl.push_back(cluster[k]);
    }
    const auto idx = survival::RiskSetIndex::from_arrays(entry, exit, ev, w, cl);
    return model == ModelKind::fine_gray ? survival::fine_gray_design(idx, EventKind::dementia)
                                         : survival::cause_specific_design(idx, EventKind::dementia);
  };

  std::vector<std::size_t> all(rows.size());
  std::iota(all.begin(), all.end(), 0);
  std::optional<survival::RiskSetDesign> shared;
  std::string shared_error;
  try {
    if (!rows.empty()) shared = design_for(all);
  } catch (const Error& e) {
    shared_error = e.what();
  }

  std::vector<PredictorFit> out(predictors.size());
  parallel_for(predictors.size(), threads, [&](std::size_t q) {
    const auto j = predictors[q];
    auto& pf = out[q];
    pf.predictor = table.specs[j].name;
    pf.domain = std::string(to_string(table.specs[j].domain));
    pf.model = model;
    try {
      if (rows.empty()) throw Error(ErrorCode::EmptyCohort, "no subjects in stratum");
      std::vector<std::size_t> keep;
      std::vector<double> x;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const double v = table.subjects[rows[k]].covariates[j];
        if (is_missing(v)) continue;
        keep.push_back(k);
        x.push_back(v);
      }
      if (keep.size() == rows.size()) {
        if (!shared) throw Error(ErrorCode::NoEvents, shared_error);
        pf.fit = survival::fit_single(*shared, x);
      } else {
        if (keep.empty()) throw Error(ErrorCode::EmptyCohort, "predictor missing for every subject");
        pf.fit = survival::fit_single(design_for(keep), x);
      }
    } catch (const Error& e) {
      pf.status = std::string(to_string(e.code()));
      pf.message = e.what();
    }
  });
  return out;
}

OverallRanking rank_aggregate(std::span<const forest::VimpTable> tables, std::span<const std::string> allowed_missing,
                              MissingRank missing) {
  OverallRanking out;
  std::map<std::string, std::size_t> index;  // predictor -> row
  for (std::size_t t = 0; t < tables.size(); ++t) {
    out.strata.push_back(tables[t].stratum);
    std::set<std::string> seen;
    for (const auto& row : tables[t].rows) {
      if (!seen.insert(row.predictor).second) {
        throw Error(ErrorCode::InconsistentPredictorSets,
                    fmt::format("'{}' appears twice in stratum {}", row.predictor, tables[t].stratum));
      }
      auto [it, fresh] = index.try_emplace(row.predictor, out.rows.size());
      if (fresh) {
        RankRow r;
        r.predictor = row.predictor;
        r.domain = row.domain;
        r.ranks.assign(tables.size(), std::nullopt);
        out.rows.push_back(std::move(r));
      }
      out.rows[it->second].ranks[t] = row.rank;
    }
  }
  const std::set<std::string> allowed(allowed_missing.begin(), allowed_missing.end());
  const double worst = static_cast<double>(out.rows.size());
  for (auto& r : out.rows) {
    double sum = 0.0;
    std::size_t have = 0;
    for (std::size_t t = 0; t < tables.size(); ++t) {
      if (r.ranks[t]) {
        sum += static_cast<double>(*r.ranks[t]);
        ++have;
        continue;
      }
      if (!allowed.count(r.predictor)) {
        throw Error(ErrorCode::InconsistentPredictorSets,
                    fmt::format("'{}' has no rank in stratum {}", r.predictor, tables[t].stratum));
      }
      r.partial = true;
      if (missing == MissingRank::worst) sum += worst;
    }
    const std::size_t denom = missing == MissingRank::worst ? tables.size() : have;
    r.mean_rank = denom == 0 ? worst : sum / static_cast<double>(denom);
  }
  auto best_single = [](const RankRow& r) {
    std::size_t b = std::numeric_limits<std::size_t>::max();
    for (const auto& k : r.ranks)
      if (k) b = std::min(b, *k);
    return b;
  };
  std::sort(out.rows.begin(), out.rows.end(), [&](const RankRow& a, const RankRow& b) {
    if (a.mean_rank != b.mean_rank) return a.mean_rank < b.mean_rank;
    const auto ba = best_single(a), bb = best_single(b);
    if (ba != bb) return ba < bb;
    return a.predictor < b.predictor;
  });
  for (std::size_t k = 0; k < out.rows.size(); ++k) out.rows[k].overall = k + 1;
  return out;
}

nlohmann::json to_json(const RunConfig& cfg) {
  const auto& f = cfg.forest;
  const auto& m = cfg.impute;
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["missing_rank"] = cfg.missing_rank == MissingRank::worst ? "worst" : "mean_available";
  j["run_forest"] = cfg.run_forest;
  j["impute"] = {{"iterations", m.iterations},
                 {"trees_per_forest", m.trees_per_forest},
                 {"mtry", m.mtry},
                 {"min_node", m.min_node},
                 {"use_weights", m.use_weights}};
  j["forest"] = {{"n_trees", f.n_trees},
                 {"mtry", f.mtry},
                 {"min_terminal_events", f.min_terminal_events},
                 {"max_depth", f.max_depth},
                 {"split_rule", std::string(forest::to_string(f.split_rule))},
                 {"vimp_horizon", std::isnan(f.vimp_horizon) ? nlohmann::json() : nlohmann::json(f.vimp_horizon)},
                 {"weighted_bootstrap", f.weighted_bootstrap},
                 {"vimp_repetitions", f.vimp_repetitions}};
  return j;
}

bool RunResult::all_complete() const {
  return !reports.empty() && std::all_of(reports.begin(), reports.end(), [](const StratumReport& r) { return r.complete; });
}

RunResult run_all(AnalysisTable table, const RunConfig& cfg) {
  RunResult result;
  const auto n = table.subjects.size();
  const auto p = table.specs.size();

  bool any_missing = false;
  for (const auto& s : table.subjects)
    any_missing = any_missing || std::any_of(s.covariates.begin(), s.covariates.end(), is_missing);
  if (any_missing) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.subjects[i].covariates[j];
    auto icfg = cfg.impute;
    icfg.seed = derive_seed(cfg.seed, {1});
    icfg.threads = cfg.threads;
    std::vector<double> w;
    for (const auto& s : table.subjects) w.push_back(s.analysis_weight);
    const auto imp = impute::impute(m, table.specs, icfg, icfg.use_weights ? std::span<const double>(w) : std::span<const double>());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j)
        table.subjects[i].covariates[j] = imp.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    result.imputed = true;
    result.warnings.push_back(fmt::format("covariates imputed (pooled over strata, {} iterations, last relative change {})",
                                          icfg.iterations,
                                          imp.per_iteration_change.empty() ? 0.0 : imp.per_iteration_change.back()));
  }

  std::vector<std::string> female_only;
  for (const auto& s : table.specs)
    if (s.female_only) female_only.push_back(s.name);

  for (std::size_t k = 0; k < kAllStrata.size(); ++k) {
    const auto stratum = kAllStrata[k];
    StratumReport rep;
    rep.stratum = std::string(to_string(stratum));
    const auto rows = stratum_rows(table, stratum);
    const auto cols = stratum_predictors(table, stratum);
    rep.n = rows.size();
    for (auto r : rows) rep.n_events += table.subjects[r].event == EventKind::dementia ? 1 : 0;
    for (auto c : cols) rep.predictors.push_back(table.specs[c].name);
    if (rows.empty()) {
      rep.warnings.push_back("empty stratum");
      result.reports.push_back(std::move(rep));
      continue;
    }
    rep.descriptives = describe(table, rows, rep.stratum);
    if (rows.size() >= 2) rep.correlations = correlations(table, rows, cols);
    rep.fits = run_sweep(table, rows, cols, ModelKind::fine_gray, cfg.threads);
    auto cs = run_sweep(table, rows, cols, ModelKind::cause_specific, cfg.threads);
    rep.fits.insert(rep.fits.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
    rep.complete = true;
    if (cfg.run_forest) {
      try {
        auto fcfg = cfg.forest;
        fcfg.seed = derive_seed(cfg.seed, {2, k});
        fcfg.threads = cfg.threads;
        auto f = forest::grow_forest(forest::make_forest_data(table, rows, cols, rep.stratum), fcfg);
        rep.oob_error = forest::oob_error(f, &rep.warnings);
        rep.vimp = forest::vimp(f);
      } catch (const Error& e) {
        rep.warnings.push_back(fmt::format("forest: {}", e.what()));
        rep.complete = false;
      }
    }
    result.reports.push_back(std::move(rep));
  }

  std::vector<forest::VimpTable> tables;
  for (const auto& r : result.reports)
    if (r.vimp) tables.push_back(*r.vimp);
  if (!tables.empty()) {
    try {
      result.ranking = rank_aggregate(tables, female_only, cfg.missing_rank);
    } catch (const Error& e) {
      result.warnings.push_back(e.what());
    }
  }
  return result;
}

CsvTable fits_csv(const std::string& stratum, std::span<const PredictorFit> fits) {
  CsvTable t;
  t.header = {"stratum", "predictor", "domain",   "model", "status",   "beta",     "hr",        "se_robust",
              "ci_lo",   "ci_hi",     "hr_ci",    "n",     "n_events", "n_clusters", "converged"};
  for (const auto& f : fits) {
    if (!f.ok()) {
      t.rows.push_back({stratum, f.predictor, f.domain, std::string(to_string(f.model)), f.status, "", "", "", "", "", "",
                        "", "", "", ""});
      continue;
    }
    const auto& r = f.fit;
    t.rows.push_back({stratum, f.predictor, f.domain, std::string(to_string(f.model)), f.status, cell(r.beta), cell(r.hr),
                      cell(r.robust_se), cell(r.ci_lo), cell(r.ci_hi), survival::format_hr(r), cell(r.n),
                      cell(r.n_events), cell(r.n_clusters), r.converged ? "yes" : "no"});
  }
  return t;
}

std::vector<PredictorFit> parse_fits_csv(const CsvTable& csv) {
  const auto c_pred = csv.require("predictor"), c_dom = csv.require("domain"), c_model = csv.require("model"),
             c_status = csv.require("status"), c_beta = csv.require("beta"), c_hr = csv.require("hr"),
             c_se = csv.require("se_robust"), c_lo = csv.require("ci_lo"), c_hi = csv.require("ci_hi"),
             c_n = csv.require("n"), c_ev = csv.require("n_events"), c_cl = csv.require("n_clusters"),
             c_conv = csv.require("converged");
  std::vector<PredictorFit> out;
  for (const auto& row : csv.rows) {
    PredictorFit f;
    f.predictor = row[c_pred];
    f.domain = row[c_dom];
    f.model = parse_model_kind(row[c_model]);
    f.status = row[c_status];
    if (f.ok()) {
      f.fit.beta = parse_double(row[c_beta]);
      f.fit.hr = parse_double(row[c_hr]);
      f.fit.robust_se = parse_double(row[c_se]);
      f.fit.ci_lo = parse_double(row[c_lo]);
      f.fit.ci_hi = parse_double(row[c_hi]);
      f.fit.n = parse_count(row[c_n]);
      f.fit.n_events = parse_count(row[c_ev]);
      f.fit.n_clusters = parse_count(row[c_cl]);
      f.fit.converged = row[c_conv] == "yes";
    }
    out.push_back(std::move(f));
  }
  return out;
}

CsvTable vimp_csv(const forest::VimpTable& table) {
  CsvTable t;
  t.header = {"stratum", "predictor", "domain", "importance", "rank", "negative_flag"};
  for (const auto& r : table.rows) {
    t.rows.push_back({table.stratum, r.predictor, r.domain, cell(r.importance), cell(r.rank), r.negative ? "yes" : "no"});
  }
  return t;
}

forest::VimpTable parse_vimp_csv(const CsvTable& csv) {
  const auto c_s = csv.require("stratum"), c_p = csv.require("predictor"), c_d = csv.require("domain"),
             c_i = csv.require("importance"), c_r = csv.require("rank"), c_n = csv.require("negative_flag");
  forest::VimpTable t;
  for (const auto& row : csv.rows) {
    t.stratum = row[c_s];
    t.rows.push_back({row[c_p], row[c_d], parse_double(row[c_i]), parse_count(row[c_r]), row[c_n] == "yes"});
  }
  return t;
}

CsvTable ranks_csv(const OverallRanking& ranking) {
  CsvTable t;
  t.header = {"predictor", "domain", "overall", "mean_rank"};
  for (const auto& s : ranking.strata) t.header.push_back(s);
  t.header.push_back("partial");
  for (const auto& r : ranking.rows) {
    std::vector<std::string> row = {r.predictor, r.domain, cell(r.overall), cell(r.mean_rank)};
    for (const auto& k : r.ranks) row.push_back(k ? cell(*k) : std::string());
    row.push_back(r.partial ? "yes" : "no");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable descriptives_csv(std::span<const DescriptiveRow> rows) {
  CsvTable t;
  t.header = {"group", "variable", "kind", "estimate", "se", "n"};
  for (const auto& r : rows) {
    t.rows.push_back({r.group, r.variable, r.binary ? "proportion" : "mean", cell(r.estimate), cell(r.se), cell(r.n)});
  }
  return t;
}

CsvTable correlations_csv(std::span<const std::string> names, const Eigen::MatrixXd& r) {
  CsvTable t;
  t.header = {"predictor"};
  t.header.insert(t.header.end(), names.begin(), names.end());
  for (Eigen::Index a = 0; a < r.rows(); ++a) {
    std::vector<std::string> row = {names[static_cast<std::size_t>(a)]};
    for (Eigen::Index b = 0; b < r.cols(); ++b) row.push_back(cell(r(a, b)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void emit(const std::string& dir, const RunResult& result, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, fmt::format("cannot create '{}': {}", dir, ec.message()));
  const fs::path base(dir);

  std::vector<DescriptiveRow> desc;
  nlohmann::json strata = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& r : result.reports) {
    write_csv((base / ("fits_" + r.stratum + ".csv")).string(), fits_csv(r.stratum, r.fits));
    forest::VimpTable empty;
    empty.stratum = r.stratum;
    write_csv((base / ("vimp_" + r.stratum + ".csv")).string(), vimp_csv(r.vimp ? *r.vimp : empty));
    write_csv((base / ("correlations_" + r.stratum + ".csv")).string(),
              correlations_csv(r.correlations.size() > 0 ? std::span<const std::string>(r.predictors) : std::span<const std::string>(),
                               r.correlations));
    desc.insert(desc.end(), r.descriptives.begin(), r.descriptives.end());
    for (const auto& f : r.fits) {
      if (!f.ok()) {
        failures.push_back({{"stratum", r.stratum}, {"predictor", f.predictor}, {"model", std::string(to_string(f.model))},
                            {"status", f.status}});
      }
    }
    strata.push_back({{"stratum", r.stratum},
                      {"n", r.n},
                      {"n_events", r.n_events},
                      {"complete", r.complete},
                      {"oob_error", std::isnan(r.oob_error) ? nlohmann::json() : nlohmann::json(r.oob_error)},
                      {"baseline_error", r.vimp ? nlohmann::json(r.vimp->baseline_error) : nlohmann::json()},
                      {"warnings", r.warnings}});
  }
  write_csv((base / "descriptives.csv").string(), descriptives_csv(desc));
  OverallRanking none;
  write_csv((base / "ranks_overall.csv").string(), ranks_csv(result.ranking ? *result.ranking : none));

  const auto config = to_json(cfg);
  nlohmann::json manifest;
  manifest["version"] = CRISK_VERSION;
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = fmt::format("{:016x}", fnv1a(config.dump()));
  manifest["config"] = config;
  manifest["imputed"] = result.imputed;
  manifest["strata"] = strata;
  manifest["fit_failures"] = failures;
  manifest["warnings"] = result.warnings;
  write_json((base / "manifest.json").string(), manifest);
}

}  // namespace crisk::pipeline
