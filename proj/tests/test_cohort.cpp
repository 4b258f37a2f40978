#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crisk/catalog.hpp"
#include "crisk/cohort.hpp"
#include "crisk/error.hpp"
#include "crisk/io.hpp"
#include "crisk/rng.hpp"

using namespace crisk;
using namespace crisk::cohort;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected crisk::Error");
  return ErrorCode::InvalidArgument;
}

CognitionRecord self_rec(int s) { return {RespondentKind::self, s, std::nullopt, 70.0}; }
CognitionRecord proxy_rec(int s) { return {RespondentKind::proxy, std::nullopt, s, 70.0}; }

}  // namespace

TEST_CASE("standardize") {
  const std::vector<double> v = {1, 2, 3};
  auto z = standardize(v);
  CHECK(z[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(z[1] == 0.0);
  CHECK(z[2] == doctest::Approx(1.0).epsilon(1e-15));
  auto r = standardize(v, true);
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(r[2] == doctest::Approx(-1.0));

  SUBCASE("missing entries pass through") {
    const std::vector<double> m = {1, kMissing, 3, 5};
    auto out = standardize(m);
    CHECK(is_missing(out[1]));
    CHECK(out[0] + out[2] + out[3] == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("errors") {
    CHECK(code_of([] { standardize(std::vector<double>{4, 4, 4}); }) == ErrorCode::ConstantColumn);
    CHECK(code_of([] { standardize(std::vector<double>{4, kMissing}); }) == ErrorCode::TooFewValues);
  }
  SUBCASE("idempotent") {
    Rng rng(11);
    std::vector<double> x(40);
    for (auto& e : x) e = 3.0 + 7.0 * rng.normal();
    x[5] = kMissing;
    const auto once = standardize(x);
    const auto twice = standardize(once);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i == 5) continue;
      CHECK(std::abs(once[i] - twice[i]) <= 1e-12);
    }
  }
  SUBCASE("education reversed: fewer years scores higher") {
    const std::vector<double> years = {8, 12, 16, 20};
    auto lower_ed = standardize(years, true);
    CHECK(std::is_sorted(lower_ed.rbegin(), lower_ed.rend()));
    CHECK(lower_ed[0] > 0);
  }
}

TEST_CASE("encode_binary") {
  CHECK(encode_binary(true) == 1.0);
  CHECK(encode_binary(false) == -1.0);
  CHECK(is_missing(encode_binary(std::nullopt)));
  CHECK(parse_flag("yes") == true);
  CHECK(parse_flag("0") == false);
  CHECK(!parse_flag("").has_value());
}

TEST_CASE("langa-weir exhaustive") {
  for (int s = 0; s <= kSelfScoreMax; ++s) CHECK(classify_langa_weir(self_rec(s)) == (s <= 6));
  for (int s = 0; s <= kProxyScoreMax; ++s) CHECK(classify_langa_weir(proxy_rec(s)) == (s >= 6));
  CHECK(classify_langa_weir(self_rec(6)));
  CHECK_FALSE(classify_langa_weir(self_rec(7)));
  CHECK(classify_langa_weir(proxy_rec(6)));
  CHECK_FALSE(classify_langa_weir(proxy_rec(5)));
  CHECK(code_of([] { classify_langa_weir(self_rec(28)); }) == ErrorCode::ScoreOutOfRange);
  CHECK(code_of([] { classify_langa_weir(self_rec(-1)); }) == ErrorCode::ScoreOutOfRange);
  CHECK(code_of([] { classify_langa_weir(proxy_rec(12)); }) == ErrorCode::ScoreOutOfRange);
  CHECK(code_of([] { classify_langa_weir({RespondentKind::self, std::nullopt, 3, 70.0}); }) ==
        ErrorCode::InvalidRecord);
}

TEST_CASE("derive_event") {
  using V = VitalStatus;
  {
    std::vector<Wave> w = {{60, false, V::alive}, {62, true, V::alive}};
    auto o = derive_event(w);
    CHECK(o.exit_age == 62);
    CHECK(o.event == EventKind::dementia);
  }
  {
    std::vector<Wave> w = {{60, false, V::alive}, {63, false, V::dead}};
    auto o = derive_event(w);
    CHECK(o.exit_age == 63);
    CHECK(o.event == EventKind::death);
  }
  {
    std::vector<Wave> w = {{60, false, V::alive}, {62, false, V::alive}};
    auto o = derive_event(w);
    CHECK(o.exit_age == 62);
    CHECK(o.event == EventKind::censored);
  }
  {
    std::vector<Wave> w = {{60, true, V::alive}, {62, false, V::alive}};
    CHECK(code_of([&] { derive_event(w); }) == ErrorCode::BaselineDemented);
  }
  {
    std::vector<Wave> w = {{60, false, V::alive}, {60, false, V::alive}};
    CHECK(code_of([&] { derive_event(w); }) == ErrorCode::NonMonotoneAges);
  }
  SUBCASE("random histories never exit before entry") {
    Rng rng(5);
    for (int rep = 0; rep < 500; ++rep) {
      std::vector<Wave> w;
      double age = 50 + 20 * rng.uniform();
      w.push_back({age, false, V::alive});
      const auto k = rng.below(6);
      for (std::uint64_t j = 0; j < k; ++j) {
        age += 0.5 + 2 * rng.uniform();
        std::optional<bool> d;
        if (rng.bernoulli(0.8)) d = rng.bernoulli(0.1);
        w.push_back({age, d, rng.bernoulli(0.05) ? V::dead : V::alive});
      }
      const auto o = derive_event(w);
      CHECK(o.exit_age >= w.front().age);
      CHECK((o.event == EventKind::dementia || o.event == EventKind::death || o.event == EventKind::censored));
    }
  }
}

TEST_CASE("filter_missingness") {
  const auto catalog = risk_factor_catalog();
  const auto out = filter_missingness(catalog);
  auto has = [](const std::vector<CovariateSpec>& v, const std::string& n) {
    return std::any_of(v.begin(), v.end(), [&](const auto& s) { return s.name == n; });
  };
  CHECK(has(out.excluded, "Cataracts"));
  CHECK(has(out.retained, "Lower Father's Occupational Status"));
  CHECK(out.retained.size() == 65);

  std::vector<CovariateSpec> edge(2);
  edge[0].name = "a";
  edge[0].missing_fraction = 0.20;
  edge[1].name = "b";
  edge[1].missing_fraction = 0.1999;
  const auto e = filter_missingness(edge);
  REQUIRE(e.retained.size() == 1);
  CHECK(e.retained[0].name == "b");

  SUBCASE("order invariant") {
    auto shuffled = catalog;
    Rng rng(3);
    rng.shuffle(std::span<CovariateSpec>(shuffled));
    const auto again = filter_missingness(shuffled);
    std::vector<std::string> a, b;
    for (const auto& s : out.retained) a.push_back(s.name);
    for (const auto& s : again.retained) b.push_back(s.name);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("residualize_pgs") {
  SUBCASE("orthogonal score equals its standardization") {
    const int n = 12;
    Eigen::MatrixXd pcs(n, 1);
    std::vector<double> pgs(n);
    for (int i = 0; i < n; ++i) {
      pcs(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;
      pgs[i] = (i / 2) % 2 == 0 ? static_cast<double>(i) : -static_cast<double>(i);
    }
    // make pgs orthogonal to the intercept and to pcs
    double m = 0;
    for (double v : pgs) m += v;
    m /= n;
    for (double& v : pgs) v -= m;
    double dot = 0;
    for (int i = 0; i < n; ++i) dot += pgs[i] * pcs(i, 0);
    for (int i = 0; i < n; ++i) pgs[i] -= dot / n * pcs(i, 0);
    const auto out = residualize_pgs(pgs, pcs);
    const auto ref = standardize(pgs);
    for (int i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  SUBCASE("exact combination is constant") {
    Rng rng(4);
    Eigen::MatrixXd pcs(30, 10);
    for (int i = 0; i < 30; ++i)
      for (int j = 0; j < 10; ++j) pcs(i, j) = rng.normal();
    std::vector<double> pgs(30);
    for (int i = 0; i < 30; ++i) pgs[i] = 2.0 + pcs(i, 0) - 3.0 * pcs(i, 7);
    CHECK(code_of([&] { residualize_pgs(pgs, pcs); }) == ErrorCode::ConstantColumn);
  }
  SUBCASE("rank deficient pcs") {
    Rng rng(8);
    Eigen::MatrixXd pcs(30, 3);
    for (int i = 0; i < 30; ++i) {
      pcs(i, 0) = rng.normal();
      pcs(i, 1) = rng.normal();
      pcs(i, 2) = pcs(i, 0) + pcs(i, 1);
    }
    std::vector<double> pgs(30);
    for (auto& v : pgs) v = rng.normal();
    CHECK(code_of([&] { residualize_pgs(pgs, pcs); }) == ErrorCode::RankDeficientPCs);
  }
  SUBCASE("random 30x10 matches normal equations") {
    Rng rng(2024);
    const int n = 30, k = 10;
    Eigen::MatrixXd pcs(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) pcs(i, j) = rng.normal();
    std::vector<double> pgs(n);
    for (int i = 0; i < n; ++i) pgs[i] = rng.normal() + 0.5 * pcs(i, 1) - 0.25 * pcs(i, 6);
    // oracle: X'X b = X'y via a dense LU on the Gram matrix
    Eigen::MatrixXd x(n, k + 1);
    x.col(0).setOnes();
    x.rightCols(k) = pcs;
    Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(pgs.data(), n);
    const Eigen::VectorXd b = (x.transpose() * x).fullPivLu().solve(x.transpose() * y);
    const Eigen::VectorXd resid = y - x * b;
    std::vector<double> rv(resid.data(), resid.data() + n);
    const double mean = std::accumulate(rv.begin(), rv.end(), 0.0) / n;
    double ss = 0;
    for (double v : rv) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1));
    const auto out = residualize_pgs(pgs, pcs);
    const auto rev = residualize_pgs(pgs, pcs, true);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(out[i] - (rv[i] - mean) / sd) <= 1e-10);
      CHECK(rev[i] == -out[i]);
    }
  }
}

TEST_CASE("code_covariate") {
  CovariateSpec bin;
  bin.name = "Smoker";
  bin.kind = CodingKind::binary_pm1;
  std::vector<std::string> raw = {"yes", "no", "", "1"};
  auto c = code_covariate(bin, raw);
  CHECK(c[0] == 1.0);
  CHECK(c[1] == -1.0);
  CHECK(is_missing(c[2]));
  CHECK(c[3] == 1.0);
  bin.reverse_coded = true;
  c = code_covariate(bin, raw);
  CHECK(c[0] == -1.0);
  CHECK(c[1] == 1.0);

  CovariateSpec birth;
  birth.name = "Age at First Birth";
  birth.zero_when = "Childless";
  std::vector<std::string> ages = {"20", "25", "", "30", "18"};
  std::vector<bool> childless = {false, false, false, false, true};
  auto b = code_covariate(birth, ages, childless);
  CHECK(b[4] == 0.0);
  CHECK(is_missing(b[2]));
  CHECK(b[0] == doctest::Approx(-1.0));
  CHECK(b[1] == doctest::Approx(0.0));
  CHECK(b[3] == doctest::Approx(1.0));

  CovariateSpec income;
  income.name = "Lower Income";
  income.transform = RawTransform::log;
  income.reverse_coded = true;
  std::vector<std::string> inc = {"0", "1", "100", "10000"};
  auto li = code_covariate(income, inc);
  CHECK(li[0] == li[1]);
  CHECK(li[3] < li[2]);
}

TEST_CASE("build_cohort from long records") {
  CsvTable t;
  t.header = {"id", "household_id", "stratum", "interview_age", "respondent_kind", "self_score",
              "proxy_score", "vital_status", "base_weight", "smoker", "years_ed"};
  t.rows = {
      {"1", "h1", "NHW-men", "60", "self", "20", "", "alive", "1.5", "yes", "12"},
      {"1", "h1", "NHW-men", "62", "self", "5", "", "alive", "1.5", "", ""},
      {"2", "h1", "NHW-women", "61", "self", "22", "", "alive", "2", "no", "16"},
      {"2", "h1", "NHW-women", "64", "proxy", "", "3", "dead", "2", "", ""},
      {"3", "h2", "NHB-men", "70", "self", "25", "", "alive", "1", "", "8"},
      {"3", "h2", "NHB-men", "72", "self", "26", "", "alive", "1", "", ""},
      {"4", "h3", "NHB-women", "66", "self", "3", "", "alive", "1", "yes", "10"},
  };
  std::vector<CovariateSpec> specs(2);
  specs[0].name = "Smoker";
  specs[0].source_column = "smoker";
  specs[0].kind = CodingKind::binary_pm1;
  specs[1].name = "Lower Education";
  specs[1].source_column = "years_ed";
  specs[1].reverse_coded = true;
  BuildReport report;
  const auto table = build_cohort(t, specs, {}, &report);
  REQUIRE(table.subjects.size() == 3);
  CHECK(report.dropped_subjects == 1);
  const auto& s1 = table.subjects[0];
  CHECK(s1.entry_age == 60);
  CHECK(s1.exit_age == 62);
  CHECK(s1.event == EventKind::dementia);
  CHECK(table.subjects[1].event == EventKind::death);
  CHECK(table.subjects[2].event == EventKind::censored);
  CHECK(table.subjects[2].exit_age == 72);
  // Smoker missing for subject 3 (1 of 3 retained) -> fraction 1/3 -> excluded
  REQUIRE(table.specs.size() == 1);
  CHECK(table.specs[0].name == "Lower Education");
  CHECK(report.excluded.size() == 1);
  CHECK(table.subjects[2].covariates[0] > table.subjects[0].covariates[0]);

  SUBCASE("analysis csv round trip") {
    const auto csv = to_csv(table);
    const auto back = from_csv(csv, table.specs, table.extra_columns);
    REQUIRE(back.subjects.size() == table.subjects.size());
    for (std::size_t i = 0; i < back.subjects.size(); ++i) {
      CHECK(back.subjects[i].covariates == table.subjects[i].covariates);
      CHECK(back.subjects[i].exit_age == table.subjects[i].exit_age);
      CHECK(back.subjects[i].stratum == table.subjects[i].stratum);
    }
  }
}
