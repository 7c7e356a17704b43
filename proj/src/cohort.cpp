#include "redrisk/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "redrisk/error.hpp"
#include "redrisk/random.hpp"

namespace redrisk::cohort {

using nlohmann::json;

const std::vector<DemographicField>& demographic_schema() {
  static const std::vector<DemographicField> schema = {
      {"gender", {"male", "female"}},
      {"age_band", {"<21", "21-35", "36-50", "51-65", ">65"}},
      {"marital_status", {"married", "divorced_separated", "single", "widowed", "other"}},
      {"occupation", {"unemployed_home_duties", "pensioner_retired", "employed", "student", "other"}},
      {"language", {"english", "other"}},
      {"country_of_birth", {"australia", "other_english_speaking", "other"}},
      {"religion", {"christian", "none", "other", "not_stated"}},
      {"indigenous_status", {"non_indigenous", "indigenous", "not_stated"}},
  };
  return schema;
}

std::array<const std::string*, 8> Demographics::fields() const {
  return {&gender, &age_band, &marital_status, &occupation,
          &language, &country_of_birth, &religion, &indigenous_status};
}

std::array<std::string*, 8> Demographics::fields() {
  return {&gender, &age_band, &marital_status, &occupation,
          &language, &country_of_birth, &religion, &indigenous_status};
}

int AssessmentEvent::item_sum() const { return std::accumulate(items.begin(), items.end(), 0); }

std::size_t CohortDataset::assessment_count() const {
  std::size_t total = 0;
  for (const auto& p : patients) total += p.timeline.assessments.size();
  return total;
}

bool is_well_formed_icd10(std::string_view code) {
  if (code.size() < 3) return false;
  if (code[0] < 'A' || code[0] > 'Z') return false;
  if (!std::isdigit(static_cast<unsigned char>(code[1])) ||
      !std::isdigit(static_cast<unsigned char>(code[2]))) {
    return false;
  }
  if (code.size() == 3) return true;
  if (code[3] != '.' || code.size() == 4 || code.size() > 8) return false;
  return std::all_of(code.begin() + 4, code.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || (c >= 'A' && c <= 'Z');
  });
}

namespace {

bool in_vocabulary(const DemographicField& field, const std::string& value) {
  return std::find(field.categories.begin(), field.categories.end(), value) !=
         field.categories.end();
}

void check_demographics(const PatientRecord& patient) {
  const auto& schema = demographic_schema();
  const auto values = patient.demographics.fields();
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (!in_vocabulary(schema[f], *values[f])) {
      throw DataError("patient " + patient.patient_id + ": " + std::string(schema[f].name) +
                      " value '" + *values[f] + "' is not in the schema vocabulary");
    }
  }
}

void check_assessment(const AssessmentEvent& a, const std::string& who) {
  for (int rating : a.items) {
    if (rating < 0 || rating > kMaxRating) {
      throw DataError(who + ": item rating " + std::to_string(rating) + " outside 0.." +
                      std::to_string(kMaxRating));
    }
  }
  if (a.overall < 0 || a.overall > kMaxRating) {
    throw DataError(who + ": overall rating " + std::to_string(a.overall) + " outside 0.." +
                    std::to_string(kMaxRating));
  }
}

}  // namespace

ValidationReport validate(const CohortDataset& dataset) {
  if (dataset.schema_version != kSchemaVersion) {
    throw DataError("unsupported schema_version " + std::to_string(dataset.schema_version));
  }
  ValidationReport report;
  std::unordered_set<std::string> ids;
  std::set<std::string> flagged;
  for (const auto& patient : dataset.patients) {
    if (patient.patient_id.empty()) throw DataError("empty patient_id");
    if (!ids.insert(patient.patient_id).second) {
      throw DataError("duplicate patient_id " + patient.patient_id);
    }
    check_demographics(patient);
    const auto& tl = patient.timeline;
    Day previous = std::numeric_limits<Day>::min();
    for (const auto& a : tl.assessments) {
      if (a.day < 0) throw DataError("patient " + patient.patient_id + ": negative day");
      if (a.day < previous) {
        throw DataError("patient " + patient.patient_id + ": assessments not sorted by day");
      }
      previous = a.day;
      check_assessment(a, "patient " + patient.patient_id);
    }
    for (const auto& d : tl.diagnoses) {
      if (d.day < 0) throw DataError("patient " + patient.patient_id + ": negative day");
      if (!is_well_formed_icd10(d.code)) flagged.insert(d.code);
    }
    for (Day d : tl.postcode_changes) {
      if (d < 0) throw DataError("patient " + patient.patient_id + ": negative day");
    }
    report.assessments += tl.assessments.size();
    report.diagnoses += tl.diagnoses.size();
  }
  report.patients = dataset.patients.size();
  report.flagged_codes.assign(flagged.begin(), flagged.end());
  return report;
}

void canonicalize(CohortDataset& dataset) {
  for (auto& patient : dataset.patients) {
    auto& tl = patient.timeline;
    std::stable_sort(tl.diagnoses.begin(), tl.diagnoses.end(),
                     [](const Diagnosis& a, const Diagnosis& b) { return a.day < b.day; });
    std::stable_sort(tl.postcode_changes.begin(), tl.postcode_changes.end());
    std::stable_sort(tl.assessments.begin(), tl.assessments.end(),
                     [](const AssessmentEvent& a, const AssessmentEvent& b) { return a.day < b.day; });
  }
}

// ---------------------------------------------------------------------------
// Synthetic generator
//
// Every patient carries three standard-normal latent factors: depression,
// substance use and social instability. They set the rates of Poisson event
// streams (diagnosis families, postcode changes) and the loadings of the 18
// assessment items. At every assessment anchor the generator evaluates
//
//   z = 1.6 * (D xor S) + 0.8 * (M and V >= 30) + 0.4 * (V - 24) / 8
//
// where, looking back from the anchor (lag 0..89 days):
//   D = any depressive-episode diagnosis (F32/F33),
//   S = any alcohol/drug-use diagnosis (F10/F19),
//   M = any postcode change,
// and V is the maximum 18-item sum over assessments up to the anchor.
// z is standardized over all anchors and mixed with independent noise,
//   risk = s * z + sqrt(1 - s^2) * noise,   s = signal_strength,
// and anchors are ranked by risk. The top prevalence(h1) fraction receive a
// risky diagnosis uniformly in (anchor, anchor + h1], the next
// prevalence(h2) - prevalence(h1) fraction in (anchor + h1, anchor + h2], and
// so on. Consecutive assessments are at least 361 days apart, so each
// anchor's outcome window only sees its own planted event and the empirical
// prevalences are exact up to rounding.
//
// Redundant channels: each of the redundancy_factor alias codes per family
// (U50.. for depression, U70.. for substance use) is emitted alongside every
// family diagnosis with probability 0.8 and spontaneously at a low rate.

namespace {

struct CodeRate {
  const char* code;
  double rate_per_year;
};

const std::vector<std::string>& depression_codes() {
  static const std::vector<std::string> codes = {"F32.0", "F32.1", "F32.9", "F33.1", "F33.9"};
  return codes;
}

const std::vector<std::string>& substance_codes() {
  static const std::vector<std::string> codes = {"F10.1", "F10.2", "F19.2", "F19.9"};
  return codes;
}

// Diagnoses unrelated to the planted signal.
const std::vector<CodeRate>& background_codes() {
  static const std::vector<CodeRate> codes = {
      {"F41.1", 0.60}, {"I10", 0.30},   {"E11.9", 0.20}, {"J45.9", 0.25}, {"I50.0", 0.08},
      {"N18.5", 0.08}, {"C34.9", 0.04}, {"E66.9", 0.15}, {"D64.9", 0.15}, {"G40.9", 0.10},
      {"E03.9", 0.10}, {"R10.4", 0.40}, {"Z50.9", 0.30}, {"M54.5", 0.35}, {"L03.1", 0.20},
      {"A09.0", 0.20}, {"B34.9", 0.20}, {"H10.9", 0.15}, {"N39.0", 0.25}, {"R51", 0.30},
  };
  return codes;
}

// Sparse tail: 60 rarely used codes with Zipf-like rates.
const std::vector<std::pair<std::string, double>>& rare_codes() {
  static const std::vector<std::pair<std::string, double>> codes = [] {
    std::vector<std::pair<std::string, double>> out;
    const char* stems[] = {"K2", "M1", "L4", "H6", "N2", "Z7"};
    std::size_t rank = 1;
    for (const char* stem : stems) {
      for (int d = 0; d < 10; ++d, ++rank) {
        out.emplace_back(std::string(stem) + std::to_string(d), 0.12 / static_cast<double>(rank));
      }
    }
    return out;
  }();
  return codes;
}

std::string alias_code(int base, std::size_t k) {
  return "U" + std::to_string(base + static_cast<int>(k));
}

void poisson_days(Rng& rng, double rate_per_year, Day start, Day end, std::vector<Day>& out) {
  if (rate_per_year <= 0.0 || end <= start) return;
  const double rate_per_day = rate_per_year / 365.0;
  double t = static_cast<double>(start);
  while (true) {
    t += rng.exponential(rate_per_day);
    if (t >= static_cast<double>(end)) break;
    out.push_back(static_cast<Day>(t));
  }
}

std::string draw_category(Rng& rng, const DemographicField& field, const std::vector<double>& weights) {
  return std::string(field.categories[rng.categorical(weights)]);
}

struct PatientLatent {
  double depression = 0.0;
  double substance = 0.0;
  double instability = 0.0;
};

struct AnchorSignal {
  std::size_t patient = 0;
  std::size_t assessment = 0;
  double z = 0.0;
};

int clamp_rating(double value) {
  return static_cast<int>(std::clamp(std::lround(value), 0L, static_cast<long>(kMaxRating)));
}

bool family_within(const std::vector<Diagnosis>& diagnoses, const std::vector<std::string>& family,
                   Day anchor, Day window) {
  for (const auto& d : diagnoses) {
    const Day lag = anchor - d.day;
    if (lag < 0 || lag >= window) continue;
    if (std::find(family.begin(), family.end(), d.code) != family.end()) return true;
  }
  return false;
}

PatientRecord generate_patient(const SyntheticConfig& config,
                               const std::map<std::string, std::vector<double>>& marginals,
                               std::size_t index, std::uint64_t seed, PatientLatent& latent) {
  Rng rng(derive_seed(seed, index));
  PatientRecord patient;
  std::ostringstream id;
  id << 'P' << std::setw(6) << std::setfill('0') << (index + 1);
  patient.patient_id = id.str();

  const auto& schema = demographic_schema();
  auto fields = patient.demographics.fields();
  for (std::size_t f = 0; f < schema.size(); ++f) {
    *fields[f] = draw_category(rng, schema[f], marginals.at(std::string(schema[f].name)));
  }

  latent.depression = rng.normal();
  latent.substance = rng.normal();
  latent.instability = rng.normal();
  const auto& age = patient.demographics.age_band;
  if (age == "<21" || age == "21-35") latent.substance += 0.4;
  if (age == "51-65" || age == ">65") latent.substance -= 0.3;

  // Assessment days: first anchor after four years of history.
  const std::size_t n_assess = rng.categorical(config.assessment_count_weights) + 1;
  std::vector<Day> anchors;
  Day day = 1460 + static_cast<Day>(rng.below(366));
  for (std::size_t k = 0; k < n_assess; ++k) {
    anchors.push_back(day);
    day += 361 + static_cast<Day>(rng.exponential(1.0 / 120.0));
  }
  const Day end = anchors.back() + 365;

  auto& tl = patient.timeline;
  // Aliases draw from their own stream so the base timeline does not depend
  // on redundancy_factor.
  Rng alias_rng(derive_seed(derive_seed(seed, index), 0xA11A5));
  auto emit_family = [&](const std::vector<std::string>& family, double rate, int alias_base) {
    std::vector<Day> days;
    poisson_days(rng, rate, 0, end, days);
    for (Day d : days) {
      tl.diagnoses.push_back({d, family[rng.below(family.size())]});
      for (std::size_t k = 0; k < config.redundancy_factor; ++k) {
        if (alias_rng.bernoulli(0.8)) tl.diagnoses.push_back({d, alias_code(alias_base, k)});
      }
    }
    for (std::size_t k = 0; k < config.redundancy_factor; ++k) {
      std::vector<Day> spurious;
      poisson_days(alias_rng, 0.15, 0, end, spurious);
      for (Day d : spurious) tl.diagnoses.push_back({d, alias_code(alias_base, k)});
    }
  };
  emit_family(depression_codes(), 1.5 * std::exp(0.9 * latent.depression - 0.4), 50);
  emit_family(substance_codes(), 1.5 * std::exp(0.9 * latent.substance - 0.4), 70);

  auto emit_code = [&](const std::string& code, double rate) {
    std::vector<Day> days;
    poisson_days(rng, rate, 0, end, days);
    for (Day d : days) tl.diagnoses.push_back({d, code});
  };
  emit_code("F20.0", 0.25 * std::exp(0.5 * latent.depression));
  emit_code("F43.1", 0.50 * std::exp(0.5 * latent.instability));
  emit_code("F60.3", 0.30 * std::exp(0.4 * latent.instability));
  emit_code("K70.3", 0.10 * std::exp(latent.substance));
  for (const auto& [code, rate] : background_codes()) emit_code(code, rate);
  for (const auto& [code, rate] : rare_codes()) emit_code(code, rate);

  // Self-harm history before the first anchor never reaches a label window.
  {
    std::vector<Day> days;
    poisson_days(rng, 0.05, 0, anchors.front(), days);
    const auto outcome = risky_outcome_codes();
    for (Day d : days) tl.diagnoses.push_back({d, outcome[rng.below(outcome.size())]});
  }

  poisson_days(rng, 0.45 * std::exp(0.8 * latent.instability - 0.32), 0, end, tl.postcode_changes);

  for (Day a : anchors) {
    AssessmentEvent event;
    event.day = a;
    for (std::size_t j = 0; j < kAssessmentItems; ++j) {
      double mean = 1.2;
      if (j < 6) {
        mean += 0.8 * latent.depression;
      } else if (j < 10) {
        mean += 0.8 * latent.substance;
      } else if (j < 14) {
        mean += 0.7 * latent.instability;
      } else {
        mean += 0.3 * (latent.depression + latent.substance + latent.instability);
      }
      event.items[j] = clamp_rating(rng.normal(mean, 0.8));
    }
    tl.assessments.push_back(event);
  }
  return patient;
}

}  // namespace

std::vector<std::string> risky_outcome_codes() {
  return {"S51.0", "S51.9", "S11.8", "X61", "X64", "X78.0", "T39.1", "T42.4", "T43.2"};
}

std::map<std::string, std::vector<double>> default_demographic_marginals() {
  return {
      {"gender", {0.493, 0.507}},
      {"age_band", {0.164, 0.280, 0.270, 0.180, 0.106}},
      {"marital_status", {0.200, 0.110, 0.544, 0.050, 0.096}},
      {"occupation", {0.167, 0.192, 0.350, 0.100, 0.191}},
      {"language", {0.930, 0.070}},
      {"country_of_birth", {0.850, 0.070, 0.080}},
      {"religion", {0.450, 0.350, 0.050, 0.150}},
      {"indigenous_status", {0.950, 0.030, 0.020}},
  };
}

void validate_config(const SyntheticConfig& config) {
  if (config.n_patients < 2) throw ConfigError("n_patients must be at least 2");
  if (config.prevalence_by_horizon.empty()) throw ConfigError("no horizon prevalences given");
  double previous = 0.0;
  for (const auto& [horizon, fraction] : config.prevalence_by_horizon) {
    if (horizon <= 0 || horizon > 360) {
      throw ConfigError("prevalence horizon " + std::to_string(horizon) + " outside 1..360 days");
    }
    if (!(fraction > 0.0 && fraction < 1.0)) {
      throw ConfigError("prevalence for horizon " + std::to_string(horizon) + " must lie in (0,1)");
    }
    if (fraction < previous) {
      throw ConfigError("prevalences must be non-decreasing in horizon length (horizon " +
                        std::to_string(horizon) + ")");
    }
    previous = fraction;
  }
  if (!(config.signal_strength >= 0.0 && config.signal_strength <= 1.0)) {
    throw ConfigError("signal_strength must lie in [0,1]");
  }
  if (config.redundancy_factor > kMaxRedundancy) {
    throw ConfigError("redundancy_factor must be at most " + std::to_string(kMaxRedundancy));
  }
  if (config.assessment_count_weights.empty() ||
      std::any_of(config.assessment_count_weights.begin(), config.assessment_count_weights.end(),
                  [](double w) { return !(w >= 0.0); }) ||
      std::accumulate(config.assessment_count_weights.begin(),
                      config.assessment_count_weights.end(), 0.0) <= 0.0) {
    throw ConfigError("assessment_count_weights must be non-negative with positive total");
  }
  for (const auto& [name, weights] : config.demographic_marginals) {
    const auto& schema = demographic_schema();
    auto it = std::find_if(schema.begin(), schema.end(),
                           [&](const DemographicField& f) { return f.name == name; });
    if (it == schema.end()) throw ConfigError("unknown demographic field '" + name + "'");
    if (weights.size() != it->categories.size()) {
      throw ConfigError("demographic marginal '" + name + "' needs " +
                        std::to_string(it->categories.size()) + " weights");
    }
  }
}

CohortDataset generate_synthetic_cohort(const SyntheticConfig& config, std::uint64_t seed) {
  validate_config(config);
  auto marginals = default_demographic_marginals();
  for (const auto& [name, weights] : config.demographic_marginals) marginals[name] = weights;

  CohortDataset dataset;
  dataset.patients.reserve(config.n_patients);
  std::vector<PatientLatent> latents(config.n_patients);
  for (std::size_t i = 0; i < config.n_patients; ++i) {
    dataset.patients.push_back(generate_patient(config, marginals, i, seed, latents[i]));
  }

  std::vector<AnchorSignal> anchors;
  for (std::size_t i = 0; i < dataset.patients.size(); ++i) {
    const auto& tl = dataset.patients[i].timeline;
    int max_sum = 0;
    for (std::size_t k = 0; k < tl.assessments.size(); ++k) {
      const auto& a = tl.assessments[k];
      max_sum = std::max(max_sum, a.item_sum());
      const bool dep = family_within(tl.diagnoses, depression_codes(), a.day, 90);
      const bool sub = family_within(tl.diagnoses, substance_codes(), a.day, 90);
      bool moved = false;
      for (Day m : tl.postcode_changes) {
        const Day lag = a.day - m;
        if (lag >= 0 && lag < 90) moved = true;
      }
      const double v = static_cast<double>(max_sum);
      double z = 1.6 * ((dep != sub) ? 1.0 : 0.0);
      z += 0.8 * ((moved && v >= 30.0) ? 1.0 : 0.0);
      z += 0.4 * (v - 24.0) / 8.0;
      anchors.push_back({i, k, z});
    }
  }

  const double n = static_cast<double>(anchors.size());
  double mean = 0.0;
  for (const auto& a : anchors) mean += a.z;
  mean /= n;
  double var = 0.0;
  for (const auto& a : anchors) var += (a.z - mean) * (a.z - mean);
  const double sd = std::sqrt(var / n);

  Rng rng(derive_seed(seed, 0xA11C0DEULL));
  const double s = config.signal_strength;
  const double noise_weight = std::sqrt(std::max(0.0, 1.0 - s * s));
  std::vector<double> risk(anchors.size());
  for (std::size_t r = 0; r < anchors.size(); ++r) {
    const double zs = sd > 0.0 ? (anchors[r].z - mean) / sd : 0.0;
    risk[r] = s * zs + noise_weight * rng.normal();
    // Noisy clinician judgement, weakly tied to the planted signal only.
    auto& assessment = dataset.patients[anchors[r].patient].timeline.assessments[anchors[r].assessment];
    assessment.overall = clamp_rating(1.5 + 0.3 * s * zs + rng.normal(0.0, 0.9));
  }

  std::vector<std::size_t> order(anchors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return risk[a] > risk[b]; });

  const auto outcome = risky_outcome_codes();
  std::size_t rank = 0;
  int lower = 0;
  for (const auto& [horizon, fraction] : config.prevalence_by_horizon) {
    const auto cumulative = static_cast<std::size_t>(std::llround(fraction * n));
    for (; rank < cumulative && rank < order.size(); ++rank) {
      const auto& a = anchors[order[rank]];
      auto& tl = dataset.patients[a.patient].timeline;
      const Day delay = lower + 1 + static_cast<Day>(rng.below(static_cast<std::size_t>(horizon - lower)));
      tl.diagnoses.push_back({tl.assessments[a.assessment].day + delay, outcome[rng.below(outcome.size())]});
    }
    lower = horizon;
  }

  canonicalize(dataset);
  return dataset;
}

// ---------------------------------------------------------------------------
// Files

Format parse_format(std::string_view name) {
  if (name == "event-lines") return Format::kEventLines;
  if (name == "cohort-archive") return Format::kCohortArchive;
  throw ConfigError("unknown cohort format '" + std::string(name) +
                    "' (expected event-lines or cohort-archive)");
}

Format infer_format(const std::filesystem::path& path) {
  return path.extension() == ".jsonl" ? Format::kEventLines : Format::kCohortArchive;
}

namespace {

constexpr const char* kArchiveMagic = "REDRISK-COHORT";

json demographics_to_json(const Demographics& demo) {
  json out = json::object();
  const auto& schema = demographic_schema();
  const auto values = demo.fields();
  for (std::size_t f = 0; f < schema.size(); ++f) out[std::string(schema[f].name)] = *values[f];
  return out;
}

void demographics_from_json(const json& j, Demographics& demo) {
  const auto& schema = demographic_schema();
  auto values = demo.fields();
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const std::string key(schema[f].name);
    if (!j.contains(key) || !j.at(key).is_string()) {
      throw DataError("missing demographic field '" + key + "'");
    }
    *values[f] = j.at(key).get<std::string>();
  }
}

AssessmentEvent assessment_from_json(const json& j) {
  AssessmentEvent a;
  a.day = j.at("day").get<Day>();
  const auto& items = j.at("items");
  if (!items.is_array()) throw DataError("\"items\" must be an array");
  if (items.size() != kAssessmentItems) {
    throw DataError("expected " + std::to_string(kAssessmentItems) + " item ratings, found " +
                    std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < kAssessmentItems; ++i) a.items[i] = items[i].get<int>();
  a.overall = j.at("overall").get<int>();
  return a;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

CohortDataset parse_event_lines(std::string_view text) {
  CohortDataset dataset;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<bool> has_demo;
  std::size_t line_no = 0;
  std::size_t pos = 0;

  auto patient_for = [&](const std::string& id) -> std::size_t {
    auto [it, inserted] = index.try_emplace(id, dataset.patients.size());
    if (inserted) {
      dataset.patients.push_back({});
      dataset.patients.back().patient_id = id;
      has_demo.push_back(false);
    }
    return it->second;
  };

  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    try {
      const json record = json::parse(line);
      if (!record.is_object()) throw DataError("record is not a JSON object");
      const auto kind = record.at("kind").get<std::string>();
      const auto id = record.at("patient_id").get<std::string>();
      if (id.empty()) throw DataError("empty patient_id");
      const Day day = record.at("day").get<Day>();
      const std::size_t p = patient_for(id);
      auto& patient = dataset.patients[p];
      if (kind == "demo") {
        if (has_demo[p]) throw DataError("duplicate patient_id " + id + " (second demo record)");
        has_demo[p] = true;
        demographics_from_json(record, patient.demographics);
      } else if (kind == "diag") {
        patient.timeline.diagnoses.push_back({day, record.at("code").get<std::string>()});
      } else if (kind == "move") {
        patient.timeline.postcode_changes.push_back(day);
      } else if (kind == "assess") {
        patient.timeline.assessments.push_back(assessment_from_json(record));
      } else {
        throw DataError("unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  for (std::size_t p = 0; p < dataset.patients.size(); ++p) {
    if (!has_demo[p]) {
      throw DataError("patient " + dataset.patients[p].patient_id + " has no demo record");
    }
  }
  canonicalize(dataset);
  validate(dataset);
  return dataset;
}

std::string format_event_lines(const CohortDataset& dataset) {
  std::string out;
  for (const auto& patient : dataset.patients) {
    json demo = demographics_to_json(patient.demographics);
    demo["kind"] = "demo";
    demo["patient_id"] = patient.patient_id;
    demo["day"] = 0;
    out += demo.dump();
    out += '\n';
    for (const auto& d : patient.timeline.diagnoses) {
      out += json{{"kind", "diag"}, {"patient_id", patient.patient_id}, {"day", d.day}, {"code", d.code}}.dump();
      out += '\n';
    }
    for (Day d : patient.timeline.postcode_changes) {
      out += json{{"kind", "move"}, {"patient_id", patient.patient_id}, {"day", d}}.dump();
      out += '\n';
    }
    for (const auto& a : patient.timeline.assessments) {
      out += json{{"kind", "assess"}, {"patient_id", patient.patient_id}, {"day", a.day},
                  {"items", a.items}, {"overall", a.overall}}
                 .dump();
      out += '\n';
    }
  }
  return out;
}

CohortDataset parse_cohort_archive(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("cohort archive is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("magic", "") != kArchiveMagic) {
    throw DataError("not a cohort archive (bad magic)");
  }
  const int version = doc.value("schema_version", -1);
  if (version > kSchemaVersion) {
    throw DataError("cohort archive schema_version " + std::to_string(version) +
                    " is newer than this build supports (" + std::to_string(kSchemaVersion) + ")");
  }
  if (version != kSchemaVersion) {
    throw DataError("unsupported cohort archive schema_version " + std::to_string(version));
  }
  CohortDataset dataset;
  try {
    for (const auto& p : doc.at("patients")) {
      PatientRecord patient;
      patient.patient_id = p.at("patient_id").get<std::string>();
      demographics_from_json(p.at("demographics"), patient.demographics);
      for (const auto& d : p.at("diagnoses")) {
        patient.timeline.diagnoses.push_back({d.at(0).get<Day>(), d.at(1).get<std::string>()});
      }
      for (const auto& d : p.at("postcode_changes")) patient.timeline.postcode_changes.push_back(d.get<Day>());
      for (const auto& a : p.at("assessments")) patient.timeline.assessments.push_back(assessment_from_json(a));
      dataset.patients.push_back(std::move(patient));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed cohort archive: ") + e.what());
  }
  validate(dataset);
  return dataset;
}

std::string format_cohort_archive(const CohortDataset& dataset) {
  json doc;
  doc["magic"] = kArchiveMagic;
  doc["schema_version"] = dataset.schema_version;
  json patients = json::array();
  for (const auto& patient : dataset.patients) {
    json p;
    p["patient_id"] = patient.patient_id;
    p["demographics"] = demographics_to_json(patient.demographics);
    json diagnoses = json::array();
    for (const auto& d : patient.timeline.diagnoses) diagnoses.push_back(json::array({d.day, d.code}));
    p["diagnoses"] = std::move(diagnoses);
    p["postcode_changes"] = patient.timeline.postcode_changes;
    json assessments = json::array();
    for (const auto& a : patient.timeline.assessments) {
      assessments.push_back({{"day", a.day}, {"items", a.items}, {"overall", a.overall}});
    }
    p["assessments"] = std::move(assessments);
    patients.push_back(std::move(p));
  }
  doc["patients"] = std::move(patients);
  return doc.dump() + "\n";
}

CohortDataset load_cohort(const std::filesystem::path& path, Format format) {
  const std::string text = read_file(path);
  return format == Format::kEventLines ? parse_event_lines(text) : parse_cohort_archive(text);
}

void save_cohort(const CohortDataset& dataset, const std::filesystem::path& path, Format format) {
  write_file_atomic(path, format == Format::kEventLines ? format_event_lines(dataset)
                                                        : format_cohort_archive(dataset));
}

// ---------------------------------------------------------------------------

PatientSplit split_patients(const CohortDataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0,1)");
  }
  const std::size_t n = dataset.patients.size();
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n)));
  Rng rng(derive_seed(seed, 0x5B117ULL));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train && i < n; ++i) in_train[order[i]] = true;

  PatientSplit split;
  split.train.schema_version = split.validation.schema_version = dataset.schema_version;
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? split.train : split.validation).patients.push_back(dataset.patients[i]);
  }
  return split;
}

}  // namespace redrisk::cohort
