#include "crisk/catalog.hpp"

namespace crisk {

namespace {

CovariateSpec binary(const char* name, Domain d, double missing, const char* source, bool reverse = false) {
  CovariateSpec s;
  s.name = name;
  s.domain = d;
  s.kind = CodingKind::binary_pm1;
  s.reverse_coded = reverse;
  s.missing_fraction = missing;
  s.source_column = source;
  return s;
}

CovariateSpec continuous(const char* name, Domain d, double missing, const char* source, bool reverse = false,
                         RawTransform transform = RawTransform::none) {
  CovariateSpec s;
  s.name = name;
  s.domain = d;
  s.kind = CodingKind::standardized_continuous;
  s.reverse_coded = reverse;
  s.missing_fraction = missing;
  s.source_column = source;
  s.transform = transform;
  return s;
}

CovariateSpec pgs(const char* name, const char* source, bool reverse, bool female_only = false) {
  auto s = continuous(name, Domain::genetic, 0.0, source, reverse);
  s.female_only = female_only;
  return s;
}

}  // namespace

std::vector<CovariateSpec> risk_factor_catalog() {
  using D = Domain;
  std::vector<CovariateSpec> c;

  c.push_back(binary("Foreign Born", D::sociodemographic, 0.001, "foreign_born"));
  c.push_back(binary("Southern Born", D::sociodemographic, 0.001, "southern_born"));
  c.push_back(binary("Veteran", D::sociodemographic, 0.001, "veteran"));
  c.push_back(binary("Childless", D::sociodemographic, 0.001, "childless"));
  c.push_back(continuous("Higher Parity", D::sociodemographic, 0.001, "parity"));
  auto first_birth = continuous("Lower Age at First Birth", D::sociodemographic, 0.0, "age_first_birth", true);
  first_birth.zero_when = "Childless";
  c.push_back(first_birth);
  auto last_birth = continuous("Higher Age at Last Birth", D::sociodemographic, 0.0, "age_last_birth");
  last_birth.zero_when = "Childless";
  c.push_back(last_birth);

  // Ordinal items are entered with 1 = best, so larger raw values already mean more risk.
  c.push_back(continuous("Lower Mother's Education", D::early_life, 0.08, "mother_education_years", true));
  c.push_back(continuous("Lower Father's Education", D::early_life, 0.123, "father_education_years", true));
  c.push_back(continuous("Lower Father's Occupational Status", D::early_life, 0.132, "father_occupation"));
  c.push_back(continuous("Lower SR Childhood Health", D::early_life, 0.013, "childhood_health"));
  c.push_back(continuous("Lower SR Childhood SES", D::early_life, 0.013, "childhood_ses"));
  c.push_back(continuous("Lower Education", D::early_life, 0.0, "education_years", true));

  c.push_back(binary("Food Insecurity", D::economic, 0.005, "food_insecurity"));
  c.push_back(continuous("Lower Income", D::economic, 0.0, "household_income", true, RawTransform::log));
  c.push_back(continuous("Lower Neighborhood Safety", D::economic, 0.006, "neighborhood_safety"));
  c.push_back(continuous("Lower Wealth", D::economic, 0.0, "household_wealth", true, RawTransform::log));
  c.push_back(binary("Medicaid", D::economic, 0.001, "medicaid"));
  c.push_back(binary("Medicare", D::economic, 0.001, "medicare"));
  c.push_back(binary("No Insurance", D::economic, 0.021, "no_insurance"));
  c.push_back(binary("Received Food Stamps", D::economic, 0.006, "food_stamps"));
  c.push_back(binary("Retired", D::economic, 0.0, "retired"));
  c.push_back(binary("Unemployed", D::economic, 0.0, "unemployed"));

  c.push_back(binary("Arthritis", D::health, 0.001, "arthritis"));
  c.push_back(binary("Back Pain", D::health, 0.0, "back_pain"));
  c.push_back(binary("Cancer", D::health, 0.001, "cancer"));
  c.push_back(binary("Diabetes", D::health, 0.0, "diabetes"));
  c.push_back(binary("Dizziness", D::health, 0.0, "dizziness"));
  c.push_back(binary("Fatigue", D::health, 0.0, "fatigue"));
  c.push_back(binary("Headaches", D::health, 0.0, "headaches"));
  c.push_back(binary("Heart Problems", D::health, 0.0, "heart_problems"));
  c.push_back(binary("Hypertension", D::health, 0.001, "hypertension"));
  c.push_back(continuous("Lower SR Health", D::health, 0.0, "sr_health"));
  c.push_back(continuous("Lower SR Hearing", D::health, 0.001, "sr_hearing"));
  c.push_back(continuous("Lower SR Vision", D::health, 0.0, "sr_vision"));
  c.push_back(binary("Lung Disease", D::health, 0.0, "lung_disease"));
  c.push_back(binary("Pain", D::health, 0.0, "pain"));
  c.push_back(binary("Psychiatric Illness", D::health, 0.0, "psychiatric_illness"));
  c.push_back(binary("Short of Breath", D::health, 0.0, "short_of_breath"));
  c.push_back(binary("Stroke", D::health, 0.0, "stroke"));
  c.push_back(binary("Wheezing", D::health, 0.0, "wheezing"));
  c.push_back(binary("Cataracts", D::health, 0.545, "cataracts"));
  c.push_back(binary("Falls", D::health, 0.522, "falls"));
  c.push_back(binary("Glaucoma", D::health, 0.541, "glaucoma"));
  c.push_back(binary("Swelling", D::health, 0.448, "swelling"));

  c.push_back(binary("Active Smoker", D::behaviors, 0.0, "active_smoker"));
  c.push_back(binary("Ever Smoked", D::behaviors, 0.0, "ever_smoked"));
  c.push_back(binary("Heavy Alcohol Use", D::behaviors, 0.001, "heavy_alcohol"));
  c.push_back(continuous("Higher BMI", D::behaviors, 0.01, "bmi"));
  // Raw item asks whether vigorous activity happens 3+ times a week.
  c.push_back(binary("Low/No Vigorous Physical Activity", D::behaviors, 0.0, "vigorous_activity", true));

  c.push_back(binary("Ever Divorced", D::social, 0.0, "ever_divorced"));
  c.push_back(binary("Ever Widowed", D::social, 0.0, "ever_widowed"));
  c.push_back(continuous("Less Religious", D::social, 0.001, "religion_importance"));
  c.push_back(binary("Lonely", D::social, 0.038, "lonely"));
  c.push_back(binary("No Friends Nearby", D::social, 0.005, "friends_nearby", true));
  c.push_back(binary("No Relatives Nearby", D::social, 0.006, "relatives_nearby", true));
  c.push_back(binary("Not Married/Partnered", D::social, 0.001, "not_married"));

  c.push_back(pgs("Higher AD PGS", "pgs_ad", false));
  c.push_back(pgs("Higher Coronary Artery Disease PGS", "pgs_cad", false));
  c.push_back(pgs("Higher Diabetes PGS", "pgs_t2d", false));
  c.push_back(pgs("Higher Myocardial Infarction PGS", "pgs_mi", false));
  c.push_back(pgs("Higher Parity PGS", "pgs_parity", false));
  c.push_back(pgs("Lower Age at First Birth PGS", "pgs_age_first_birth", true));
  c.push_back(pgs("Lower Age at Menarche PGS", "pgs_age_menarche", true, true));
  c.push_back(pgs("Lower Age at Menopause PGS", "pgs_age_menopause", true, true));
  c.push_back(pgs("Lower Education PGS", "pgs_education", true));
  c.push_back(pgs("Lower General Cognition PGS", "pgs_general_cognition", true));
  c.push_back(pgs("Lower Height PGS", "pgs_height", true));
  c.push_back(pgs("Lower Longevity PGS", "pgs_longevity", true));
  return c;
}

}  // namespace crisk
