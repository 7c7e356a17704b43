#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "redrisk/cohort.hpp"
#include "redrisk/ensemble.hpp"
#include "redrisk/error.hpp"
#include "redrisk/featurize.hpp"
#include "redrisk/metrics.hpp"
#include "support.hpp"

using namespace redrisk;
using namespace redrisk::cohort;

namespace {

SyntheticConfig small_config(std::size_t n) {
  SyntheticConfig c;
  c.n_patients = n;
  return c;
}

double prevalence_at(const CohortDataset& d, int horizon) {
  const std::vector<int> h{horizon};
  const auto labels = featurize::label_outcomes(d, featurize::RiskyCodeTable::stub(), h);
  return labels.prevalence(0);
}

}  // namespace

TEST_CASE("calibrated 30-day prevalence at n=3700") {
  SyntheticConfig c;
  c.n_patients = 3700;
  c.prevalence_by_horizon = {{30, 0.071}, {90, 0.131}, {180, 0.186}};
  const auto d = generate_synthetic_cohort(c, 1);
  const double p30 = prevalence_at(d, 30);
  CHECK(p30 >= 0.056);
  CHECK(p30 <= 0.086);
}

TEST_CASE("two-patient cohort is reproducible") {
  SyntheticConfig c;
  c.n_patients = 2;
  c.prevalence_by_horizon = {{30, 0.5}, {180, 0.5}};
  CHECK(generate_synthetic_cohort(c, 7) == generate_synthetic_cohort(c, 7));
  CHECK(format_cohort_archive(generate_synthetic_cohort(c, 7)) ==
        format_cohort_archive(generate_synthetic_cohort(c, 7)));
}

TEST_CASE("signal strength zero gives chance-level held-out AUC") {
  auto c = small_config(5000);
  c.signal_strength = 0.0;
  const auto d = generate_synthetic_cohort(c, 11);
  const auto split = split_patients(d, 0.5, 3);
  const std::vector<int> h{180};
  const auto& risky = featurize::RiskyCodeTable::stub();
  auto fit_side = [&](const CohortDataset& side) {
    auto labels = featurize::label_outcomes(side, risky, h);
    auto m = featurize::build_feature_matrix(side, labels, featurize::FeatureSet::kFs3);
    return std::pair{std::move(m), labels.column(0)};
  };
  const auto [train_x, train_y] = fit_side(split.train);
  const auto [val_x, val_y] = fit_side(split.validation);
  ensemble::ForestParams params;
  params.seed = 5;
  const auto forest = ensemble::fit_random_forest(train_x.values, train_y, params);
  std::vector<double> scores;
  for (std::size_t i = 0; i < val_x.values.rows(); ++i) {
    scores.push_back(ensemble::predict_forest(forest, val_x.values.row(i)).score);
  }
  const double auc = eval::auc_mann_whitney(val_y, scores).auc;
  CHECK(auc >= 0.45);
  CHECK(auc <= 0.55);
}

TEST_CASE("empty event-lines input has no patients") {
  CHECK(parse_event_lines("").patients.empty());
  CHECK(parse_event_lines("\n\n").patients.empty());
}

TEST_CASE("save then load returns the same dataset in both formats") {
  const auto d = generate_synthetic_cohort(small_config(40), 3);
  const auto dir = testsupport::temp_dir("cohort_roundtrip");
  for (auto [format, name] : {std::pair{Format::kEventLines, "c.jsonl"}, std::pair{Format::kCohortArchive, "c.json"}}) {
    save_cohort(d, dir / name, format);
    CHECK(load_cohort(dir / name, format) == d);
    CHECK(infer_format(dir / name) == format);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("round trip holds across generator seeds") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    auto c = small_config(15);
    c.redundancy_factor = seed % 3;
    const auto d = generate_synthetic_cohort(c, seed);
    CHECK(parse_event_lines(format_event_lines(d)) == d);
    CHECK(parse_cohort_archive(format_cohort_archive(d)) == d);
    CHECK(format_cohort_archive(parse_cohort_archive(format_cohort_archive(d))) == format_cohort_archive(d));
  }
}

TEST_CASE("an assessment with 17 item ratings is rejected with its line number") {
  const std::string text =
      R"({"kind":"demo","patient_id":"A","day":0,"gender":"female","age_band":"21-35","marital_status":"married","occupation":"employed","language":"english","country_of_birth":"australia","religion":"christian","indigenous_status":"non_indigenous"})"
      "\n"
      R"({"kind":"assess","patient_id":"A","day":10,"items":[1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1],"overall":2})"
      "\n";
  try {
    parse_event_lines(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("malformed ICD-10 codes are flagged, not rejected") {
  CHECK(is_well_formed_icd10("F32.1"));
  CHECK(is_well_formed_icd10("X61"));
  CHECK_FALSE(is_well_formed_icd10("32F"));
  CHECK_FALSE(is_well_formed_icd10("F3"));
  CohortDataset d;
  auto p = testsupport::patient("A");
  p.timeline.diagnoses = {{5, "F32.1"}, {6, "bogus"}};
  d.patients.push_back(p);
  const auto report = validate(d);
  CHECK(report.flagged_codes == std::vector<std::string>{"bogus"});
}

TEST_CASE("validation rejects duplicate ids and unsorted assessments") {
  CohortDataset d;
  d.patients = {testsupport::patient("A"), testsupport::patient("A")};
  CHECK_THROWS_AS(validate(d), DataError);
  CohortDataset e;
  auto p = testsupport::patient("B");
  p.timeline.assessments = {testsupport::assessment(20, 1, 1), testsupport::assessment(10, 1, 1)};
  e.patients.push_back(p);
  CHECK_THROWS_AS(validate(e), DataError);
}

TEST_CASE("split sizes round the train side up") {
  CohortDataset d;
  for (int i = 0; i < 7399; ++i) d.patients.push_back(testsupport::patient("P" + std::to_string(i)));
  const auto s = split_patients(d, 0.5, 1);
  CHECK(s.train.patients.size() == 3700);
  CHECK(s.validation.patients.size() == 3699);

  CohortDataset one;
  one.patients.push_back(testsupport::patient("only"));
  const auto s1 = split_patients(one, 0.5, 1);
  CHECK(s1.train.patients.size() == 1);
  CHECK(s1.validation.patients.empty());
}

TEST_CASE("splits are deterministic and patient-disjoint") {
  const auto d = generate_synthetic_cohort(small_config(200), 4);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto a = split_patients(d, 0.5, seed);
    const auto b = split_patients(d, 0.5, seed);
    CHECK(a.train == b.train);
    CHECK(a.validation == b.validation);
    std::set<std::string> train_ids;
    for (const auto& p : a.train.patients) train_ids.insert(p.patient_id);
    std::size_t overlap = 0;
    for (const auto& p : a.validation.patients) overlap += train_ids.count(p.patient_id);
    CHECK(overlap == 0);
    CHECK(a.train.patients.size() + a.validation.patients.size() == d.patients.size());
  }
}

TEST_CASE("mean 180-day prevalence over 20 seeds is calibrated") {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    total += prevalence_at(generate_synthetic_cohort(small_config(3700), seed), 180);
  }
  CHECK(std::abs(total / 20.0 - 0.186) <= 0.01);
}

TEST_CASE("redundancy leaves the base timeline untouched") {
  auto base = small_config(30);
  auto redundant = base;
  redundant.redundancy_factor = 5;
  const auto a = generate_synthetic_cohort(base, 2);
  auto b = generate_synthetic_cohort(redundant, 2);
  for (auto& p : b.patients) {
    std::erase_if(p.timeline.diagnoses, [](const Diagnosis& d) { return d.code.front() == 'U'; });
  }
  CHECK(a == b);
}

TEST_CASE("invalid synthetic configurations are rejected") {
  auto c = small_config(10);
  c.prevalence_by_horizon = {{30, 0.2}, {60, 0.1}};
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = small_config(10);
  c.signal_strength = 1.5;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c = small_config(1);
  CHECK_THROWS_AS(validate_config(c), ConfigError);
}
