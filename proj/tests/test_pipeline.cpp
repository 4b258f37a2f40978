#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "crisk/error.hpp"
#include "crisk/pipeline.hpp"
#include "crisk/synth.hpp"

using namespace crisk;
using namespace crisk::pipeline;

namespace {

AnalysisTable small_table(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  AnalysisTable t;
  CovariateSpec b{"Binary"};
  b.kind = CodingKind::binary_pm1;
  CovariateSpec c{"Continuous"};
  t.specs = {b, c};
  for (std::size_t i = 0; i < n; ++i) {
    Subject s;
    s.id = std::to_string(i);
    s.household_id = "h" + std::to_string(i / 3);
    s.stratum = kAllStrata[i % 4];
    s.entry_age = 55.0 + 10.0 * rng.uniform();
    s.exit_age = s.entry_age + 1.0 + 5.0 * rng.uniform();
    s.event = static_cast<EventKind>(rng.below(3));
    s.analysis_weight = 0.5 + rng.uniform();
    s.covariates = {rng.bernoulli(0.4) ? 1.0 : -1.0, rng.normal()};
    t.subjects.push_back(s);
  }
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

forest::VimpTable table_from_ranks(const std::string& stratum, const std::vector<std::string>& order) {
  forest::VimpTable t;
  t.stratum = stratum;
  for (std::size_t k = 0; k < order.size(); ++k) {
    t.rows.push_back({order[k], "health", static_cast<double>(order.size() - k), k + 1, false});
  }
  return t;
}

}  // namespace

TEST_CASE("equal weights and a half-positive binary column give proportion 0.5") {
  AnalysisTable t;
  CovariateSpec b{"B"};
  b.kind = CodingKind::binary_pm1;
  t.specs = {b};
  for (int i = 0; i < 10; ++i) {
    Subject s;
    s.id = std::to_string(i);
    s.household_id = std::to_string(i);
    s.covariates = {i % 2 == 0 ? 1.0 : -1.0};
    t.subjects.push_back(s);
  }
  std::vector<std::size_t> rows(10);
  std::iota(rows.begin(), rows.end(), 0);
  const auto d = describe(t, rows, "all");
  REQUIRE(d.size() == 4);
  CHECK(d[3].variable == "B");
  CHECK(d[3].binary);
  CHECK(d[3].estimate == 0.5);
  CHECK(d[1].variable == "Female");
  CHECK(d[1].estimate == 0.0);
}

TEST_CASE("weighted mean and clustered SE match hand arithmetic") {
  const auto t = small_table(12, 10);
  std::vector<std::size_t> rows(10);
  std::iota(rows.begin(), rows.end(), 0);
  const auto d = describe(t, rows, "all");
  // continuous column, by hand: households {0,1,2}, {3,4,5}, {6,7,8}, {9}
  double W = 0.0, S = 0.0;
  for (const auto& s : t.subjects) {
    W += s.analysis_weight;
    S += s.analysis_weight * s.covariates[1];
  }
  const double mean = S / W;
  double z[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& s = t.subjects[i];
    z[i / 3] += s.analysis_weight * (s.covariates[1] - mean) / W;
  }
  const double var = 4.0 / 3.0 * (z[0] * z[0] + z[1] * z[1] + z[2] * z[2] + z[3] * z[3]);
  const auto& row = d[4];
  CHECK(row.variable == "Continuous");
  CHECK(row.estimate == doctest::Approx(mean).epsilon(1e-12));
  CHECK(row.se == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(row.n == 10);
  // binary column on the 0/1 scale
  double P = 0.0;
  for (const auto& s : t.subjects) P += s.analysis_weight * (s.covariates[0] > 0 ? 1.0 : 0.0);
  CHECK(d[3].estimate == doctest::Approx(P / W).epsilon(1e-12));
}

TEST_CASE("standardized column has weighted mean zero under equal weights") {
  std::vector<double> x = {-1.5, -0.5, 0.5, 1.5}, w(4, 2.0);
  std::vector<std::size_t> cl = {0, 1, 2, 3};
  const auto [m, se] = weighted_mean_se(x, w, cl);
  CHECK(m == 0.0);
  CHECK(se > 0.0);
}

TEST_CASE("correlation matrix examples") {
  auto t = small_table(3, 200);
  CovariateSpec neg{"Negated"};
  CovariateSpec flat{"Flat"};
  t.specs.push_back(neg);
  t.specs.push_back(flat);
  for (auto& s : t.subjects) {
    s.covariates.push_back(-s.covariates[1]);
    s.covariates.push_back(2.0);
  }
  std::vector<std::size_t> rows(200), cols = {0, 1, 2, 3};
  std::iota(rows.begin(), rows.end(), 0);
  const auto r = correlations(t, rows, cols);
  CHECK(r(1, 1) == 1.0);
  CHECK(r(1, 2) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(r(0, 1) == r(1, 0));
  CHECK(std::isnan(r(3, 0)));
  CHECK(std::isnan(r(3, 3)));
  CHECK_THROWS_AS(correlations(t, std::vector<std::size_t>{0}, cols), Error);
}

TEST_CASE("independent columns are nearly uncorrelated") {
  const auto t = small_table(8, 10000);
  std::vector<std::size_t> rows(10000), cols = {0, 1};
  std::iota(rows.begin(), rows.end(), 0);
  CHECK(std::abs(correlations(t, rows, cols)(0, 1)) < 0.05);
}

TEST_CASE("sweep drops female-only predictors for men and records per-predictor failures") {
  SynthConfig cfg;
  cfg.n = 400;
  cfg.seed = 5;
  cfg.n_predictors = 3;
  cfg.n_binary = 1;
  cfg.censoring_rate = 0.05;
  auto cohort = synth_cohort(cfg);
  auto& t = cohort.table;
  t.specs[2].name = "Lower Age at Menarche PGS";
  t.specs[2].female_only = true;
  for (auto& s : t.subjects) s.covariates[1] = 0.7;  // zero variance
  const auto men = stratum_rows(t, Stratum::nhw_men);
  const auto cols = stratum_predictors(t, Stratum::nhw_men);
  CHECK(cols == std::vector<std::size_t>{0, 1});
  CHECK(stratum_predictors(t, Stratum::nhw_women).size() == 3);
  const auto fits = run_sweep(t, men, cols, ModelKind::fine_gray);
  REQUIRE(fits.size() == 2);
  CHECK(fits[0].ok());
  CHECK(fits[1].status == "ZeroVariance");
  for (const auto& f : fits) CHECK(f.predictor != "Lower Age at Menarche PGS");
}

TEST_CASE("death-free stratum gives identical Fine-Gray and cause-specific sweeps") {
  SynthConfig cfg;
  cfg.n = 600;
  cfg.seed = 9;
  cfg.n_predictors = 4;
  cfg.n_binary = 2;
  cfg.death.rate = 0.0;
  cfg.censoring_rate = 0.08;
  cfg.beta_dementia = {0.5, 0.0, -0.3, 0.2};
  const auto cohort = synth_cohort(cfg);
  const auto rows = stratum_rows(cohort.table, Stratum::nhb_women);
  const auto cols = stratum_predictors(cohort.table, Stratum::nhb_women);
  const auto fg = run_sweep(cohort.table, rows, cols, ModelKind::fine_gray, 2);
  const auto cs = run_sweep(cohort.table, rows, cols, ModelKind::cause_specific);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    REQUIRE(fg[j].ok());
    CHECK(fg[j].fit.beta == doctest::Approx(cs[j].fit.beta).epsilon(1e-8));
  }
}

TEST_CASE("rank aggregation reproduces the reported means and order") {
  std::vector<std::string> names;
  for (int k = 0; k < 25; ++k) names.push_back(fmt::format("p{:02d}", k));
  // Lower Wealth ranks (2, 13, 10, 5), Food Insecurity (20, 23, 11, 7)
  const std::vector<std::array<std::size_t, 2>> ranks = {{2, 20}, {13, 23}, {10, 11}, {5, 7}};
  std::vector<forest::VimpTable> tables;
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<std::string> order(25);
    std::vector<std::string> fill;
    for (const auto& n : names) fill.push_back(n);
    order[ranks[s][0] - 1] = "Lower Wealth";
    order[ranks[s][1] - 1] = "Food Insecurity";
    std::size_t next = 0;
    for (auto& o : order) {
      if (o.empty()) o = fill[next++];
    }
    tables.push_back(table_from_ranks(fmt::format("s{}", s), order));
  }
  const auto r = rank_aggregate(tables);
  std::map<std::string, const RankRow*> by;
  for (const auto& row : r.rows) by[row.predictor] = &row;
  CHECK(by["Lower Wealth"]->mean_rank == 7.5);
  CHECK(by["Food Insecurity"]->mean_rank == 15.25);
  CHECK(by["Lower Wealth"]->overall < by["Food Insecurity"]->overall);

  // invariant to stratum order
  std::vector<forest::VimpTable> rev(tables.rbegin(), tables.rend());
  const auto r2 = rank_aggregate(rev);
  for (std::size_t k = 0; k < r.rows.size(); ++k) CHECK(r.rows[k].predictor == r2.rows[k].predictor);
}

TEST_CASE("agreeing strata give the same overall order") {
  const std::vector<std::string> order = {"d", "b", "a", "c"};
  std::vector<forest::VimpTable> tables;
  for (int s = 0; s < 4; ++s) tables.push_back(table_from_ranks(std::to_string(s), order));
  const auto r = rank_aggregate(tables);
  for (std::size_t k = 0; k < order.size(); ++k) {
    CHECK(r.rows[k].predictor == order[k]);
    CHECK(r.rows[k].overall == k + 1);
  }
}

TEST_CASE("rank ties break by best single rank, then name") {
  std::vector<forest::VimpTable> tables = {table_from_ranks("a", {"x", "y", "z"}), table_from_ranks("b", {"z", "y", "x"})};
  // x: (1,3), y: (2,2), z: (3,1): all mean 2
  const auto r = rank_aggregate(tables);
  CHECK(r.rows[0].predictor == "x");
  CHECK(r.rows[1].predictor == "z");
  CHECK(r.rows[2].predictor == "y");
}

TEST_CASE("female-only predictors take the worst rank in male strata") {
  std::vector<forest::VimpTable> tables = {table_from_ranks("men", {"a", "b"}), table_from_ranks("women", {"pgs", "a", "b"})};
  const std::vector<std::string> allowed = {"pgs"};
  const auto r = rank_aggregate(tables, allowed);
  std::map<std::string, const RankRow*> by;
  for (const auto& row : r.rows) by[row.predictor] = &row;
  CHECK(by["pgs"]->mean_rank == 2.0);  // (3 + 1) / 2
  CHECK(by["pgs"]->partial);
  CHECK(!by["pgs"]->ranks[0]);
  const auto avail = rank_aggregate(tables, allowed, MissingRank::mean_available);
  CHECK(avail.rows[0].predictor == "pgs");
  CHECK(avail.rows[0].mean_rank == 1.0);
  try {
    (void)rank_aggregate(tables);
    FAIL("expected InconsistentPredictorSets");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InconsistentPredictorSets);
  }
}

TEST_CASE("rank aggregation ignores monotone transforms of importance") {
  auto a = table_from_ranks("a", {"p", "q", "r"});
  auto b = a;
  for (auto& row : b.rows) row.importance = std::exp(row.importance) * 10.0;
  std::vector<forest::VimpTable> t1 = {a, a}, t2 = {b, b};
  const auto r1 = rank_aggregate(t1), r2 = rank_aggregate(t2);
  for (std::size_t k = 0; k < 3; ++k) CHECK(r1.rows[k].predictor == r2.rows[k].predictor);
}

TEST_CASE("symmetric synthetic hazards split incidence evenly") {
  SynthConfig cfg;
  cfg.n = 10000;
  cfg.seed = 31;
  cfg.n_predictors = 2;
  cfg.n_binary = 1;
  const auto c = synth_cohort(cfg);
  std::vector<double> entry, exit, w;
  std::vector<EventKind> ev;
  for (const auto& s : c.table.subjects) {
    entry.push_back(s.entry_age);
    exit.push_back(s.exit_age);
    ev.push_back(s.event);
    w.push_back(1.0);
  }
  const auto aj = survival::aalen_johansen(survival::RiskSetIndex::from_arrays(entry, exit, ev, w));
  CHECK(aj.cif[0].back() == doctest::Approx(0.5).epsilon(0.04));
  CHECK(aj.cif[1].back() == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::abs(aj.cif[0].back() - 0.5) < 0.02);
}

TEST_CASE("no death and no censoring means everyone gets dementia") {
  SynthConfig cfg;
  cfg.n = 300;
  cfg.death.rate = 0.0;
  const auto c = synth_cohort(cfg);
  for (const auto& s : c.table.subjects) {
    CHECK(s.event == EventKind::dementia);
    CHECK(s.exit_age > s.entry_age);
  }
}

TEST_CASE("synthetic generator is seeded and validates its configuration") {
  SynthConfig cfg;
  cfg.n = 50;
  cfg.weight_sigma = 0.5;
  cfg.missing_rate = 0.1;
  cfg.dementia = {0.001, 2.0};
  const auto a = synth_cohort(cfg), b = synth_cohort(cfg);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(a.table.subjects[i].exit_age == b.table.subjects[i].exit_age);
    CHECK(a.table.subjects[i].base_weight == b.table.subjects[i].base_weight);
  }
  auto bad = cfg;
  bad.dementia.rate = 0.0;
  bad.death.rate = 0.0;
  CHECK_THROWS_AS(synth_cohort(bad), Error);
  bad = cfg;
  bad.beta_dementia = {1.0};
  CHECK_THROWS_AS(synth_cohort(bad), Error);
  bad = cfg;
  bad.missing_rate = 1.0;
  try {
    (void)synth_cohort(bad);
    FAIL("expected InfeasibleConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleConfig);
  }
}

TEST_CASE("cause-specific Cox recovers the simulated hazard ratio") {
  int covered = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    SynthConfig cfg;
    cfg.n = 400;
    cfg.seed = 1000 + rep;
    cfg.n_predictors = 1;
    cfg.n_binary = 1;
    cfg.beta_dementia = {std::log(2.0)};
    cfg.censoring_rate = 0.05;
    const auto c = synth_cohort(cfg);
    std::vector<double> x;
    for (const auto& s : c.table.subjects) x.push_back(s.covariates[0]);
    const auto fit = survival::cox_fit(survival::RiskSetIndex::build(c.table.subjects), x, EventKind::dementia);
    covered += (fit.ci_lo <= 2.0 && 2.0 <= fit.ci_hi) ? 1 : 0;
  }
  CHECK(covered >= 90);
}

TEST_CASE("long-format export rebuilds the same outcomes") {
  SynthConfig cfg;
  cfg.n = 120;
  cfg.seed = 4;
  cfg.n_predictors = 3;
  cfg.n_binary = 2;
  cfg.censoring_rate = 0.1;
  cfg.missing_rate = 0.05;
  const auto c = synth_cohort(cfg);
  const auto csv = synth_long_format(c);
  const auto built = cohort::build_cohort(csv, c.table.specs, cohort::BuildOptions{0.99});
  REQUIRE(built.subjects.size() == c.table.subjects.size());
  for (std::size_t i = 0; i < built.subjects.size(); ++i) {
    CHECK(built.subjects[i].id == c.table.subjects[i].id);
    CHECK(built.subjects[i].event == c.table.subjects[i].event);
    CHECK(built.subjects[i].exit_age == c.table.subjects[i].exit_age);
    CHECK(built.subjects[i].entry_age == c.table.subjects[i].entry_age);
    CHECK(is_missing(built.subjects[i].covariates[0]) == is_missing(c.table.subjects[i].covariates[0]));
    if (!is_missing(c.table.subjects[i].covariates[0])) {
      CHECK(built.subjects[i].covariates[0] == c.table.subjects[i].covariates[0]);
    }
  }
}

TEST_CASE("hazard ratio cell and fits CSV round trip") {
  survival::FitResult r;
  r.hr = 1.5649;
  r.beta = std::log(r.hr);
  r.ci_lo = 1.2899;
  r.ci_hi = 1.8851;
  r.robust_se = 0.0987654321;
  r.n = 1234;
  r.n_events = 321;
  r.n_clusters = 900;
  r.converged = true;
  CHECK(survival::format_hr(r) == "1.56 (1.29, 1.89)");
  std::vector<PredictorFit> fits(2);
  fits[0].predictor = "Lower Wealth";
  fits[0].domain = "economic";
  fits[0].fit = r;
  fits[1].predictor = "Flat, \"quoted\"";
  fits[1].model = ModelKind::cause_specific;
  fits[1].status = "ZeroVariance";
  const auto csv = fits_csv("NHW-men", fits);
  CHECK(csv.rows[0][10] == "1.56 (1.29, 1.89)");
  std::stringstream ss;
  write_csv(ss, csv);
  const auto back = parse_fits_csv(parse_csv(ss));
  REQUIRE(back.size() == 2);
  CHECK(back[0].predictor == "Lower Wealth");
  CHECK(back[0].fit.beta == r.beta);
  CHECK(back[0].fit.hr == r.hr);
  CHECK(back[0].fit.robust_se == r.robust_se);
  CHECK(back[0].fit.ci_lo == r.ci_lo);
  CHECK(back[0].fit.ci_hi == r.ci_hi);
  CHECK(back[0].fit.n == r.n);
  CHECK(back[0].fit.n_events == r.n_events);
  CHECK(back[0].fit.n_clusters == r.n_clusters);
  CHECK(back[0].fit.converged);
  CHECK(back[1].predictor == fits[1].predictor);
  CHECK(back[1].status == "ZeroVariance");
  CHECK(back[1].model == ModelKind::cause_specific);
}

TEST_CASE("vimp CSV round trip") {
  auto t = table_from_ranks("NHB-women", {"a", "b"});
  t.rows[1].importance = -0.0123456789;
  t.rows[1].negative = true;
  std::stringstream ss;
  write_csv(ss, vimp_csv(t));
  const auto back = parse_vimp_csv(parse_csv(ss));
  CHECK(back.stratum == "NHB-women");
  CHECK(back.rows[1].importance == t.rows[1].importance);
  CHECK(back.rows[1].negative);
  CHECK(back.rows[1].rank == 2);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("run_all emits deterministic tables and flags an empty stratum") {
  SynthConfig cfg;
  cfg.n = 240;
  cfg.seed = 2;
  cfg.n_predictors = 4;
  cfg.n_binary = 2;
  cfg.beta_dementia = {0.7, 0.0, 0.0, 0.0};
  cfg.censoring_rate = 0.05;
  cfg.missing_rate = 0.03;
  cfg.stratum_share = {0.4, 0.3, 0.3, 0.0};
  const auto c = synth_cohort(cfg);
  RunConfig rc;
  rc.seed = 7;
  rc.forest.n_trees = 30;
  rc.impute.trees_per_forest = 20;
  rc.impute.iterations = 2;
  const auto tmp = std::filesystem::temp_directory_path();
  const auto d1 = tmp / "crisk_run1", d2 = tmp / "crisk_run2";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  const auto r1 = run_all(c.table, rc);
  emit(d1.string(), r1, rc);
  rc.threads = 2;
  const auto r2 = run_all(c.table, rc);
  emit(d2.string(), r2, rc);
  CHECK(r1.imputed);
  CHECK(!r1.all_complete());
  CHECK(r1.reports[3].warnings.front() == "empty stratum");
  CHECK(r1.reports[0].complete);
  REQUIRE(r1.ranking);
  CHECK(r1.ranking->strata.size() == 3);
  for (const auto& name : {"fits_NHW-men.csv", "vimp_NHW-men.csv", "ranks_overall.csv", "descriptives.csv",
                           "correlations_NHB-men.csv", "vimp_NHB-women.csv", "manifest.json"}) {
    CHECK_MESSAGE(slurp(d1 / name) == slurp(d2 / name), name);
  }
  const auto empty = read_csv((d1 / "vimp_NHB-women.csv").string());
  CHECK(empty.rows.empty());
  CHECK(empty.header.size() == 6);
  const auto fits = parse_fits_csv(read_csv((d1 / "fits_NHW-men.csv").string()));
  CHECK(fits.size() == 8);
  for (std::size_t k = 0; k < fits.size(); ++k) CHECK(fits[k].fit.beta == r1.reports[0].fits[k].fit.beta);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}
