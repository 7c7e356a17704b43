#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace redrisk::cohort {

// Dates are integer day offsets from the cohort epoch.
using Day = std::int32_t;

inline constexpr std::size_t kAssessmentItems = 18;
inline constexpr int kMaxRating = 4;
inline constexpr int kSchemaVersion = 1;

// Closed category vocabularies for the demographic fields. The order of
// kDemographicFields matches the member order of Demographics.
struct DemographicField {
  std::string_view name;
  std::vector<std::string_view> categories;
};
const std::vector<DemographicField>& demographic_schema();

struct Demographics {
  std::string gender;
  std::string age_band;
  std::string marital_status;
  std::string occupation;
  std::string language;
  std::string country_of_birth;
  std::string religion;
  std::string indigenous_status;

  // Field values in demographic_schema() order.
  std::array<const std::string*, 8> fields() const;
  std::array<std::string*, 8> fields();

  bool operator==(const Demographics&) const = default;
};

struct Diagnosis {
  Day day = 0;
  std::string code;
  bool operator==(const Diagnosis&) const = default;
};

struct AssessmentEvent {
  Day day = 0;
  std::array<int, kAssessmentItems> items{};
  int overall = 0;

  int item_sum() const;
  bool operator==(const AssessmentEvent&) const = default;
};

struct EventTimeline {
  std::vector<Diagnosis> diagnoses;      // sorted by day
  std::vector<Day> postcode_changes;     // sorted
  std::vector<AssessmentEvent> assessments;  // sorted by day
  bool operator==(const EventTimeline&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  Demographics demographics;
  EventTimeline timeline;
  bool operator==(const PatientRecord&) const = default;
};

struct CohortDataset {
  std::vector<PatientRecord> patients;
  int schema_version = kSchemaVersion;

  std::size_t assessment_count() const;
  bool operator==(const CohortDataset&) const = default;
};

// letter + two digits, optional ".subcode".
bool is_well_formed_icd10(std::string_view code);

struct ValidationReport {
  std::size_t patients = 0;
  std::size_t assessments = 0;
  std::size_t diagnoses = 0;
  std::vector<std::string> flagged_codes;  // distinct malformed codes, sorted
};

// Checks every invariant of the data model; throws DataError on the first
// violation. Malformed ICD-10 codes are reported, not rejected.
ValidationReport validate(const CohortDataset& dataset);

// Sorts every timeline into canonical (day, then stable) order.
void canonicalize(CohortDataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic cohorts

struct SyntheticConfig {
  std::size_t n_patients = 7399;
  // Fraction of assessments followed by a risky diagnosis within the horizon.
  std::map<int, double> prevalence_by_horizon{
      {15, 0.040}, {30, 0.071}, {60, 0.103}, {90, 0.131}, {180, 0.186}, {360, 0.240}};
  // field name -> weights over that field's categories (schema order).
  std::map<std::string, std::vector<double>> demographic_marginals;
  // Weight of a patient having k+1 assessments at index k.
  std::vector<double> assessment_count_weights{0.62, 0.17, 0.07, 0.04, 0.03, 0.01, 0.01, 0.01,
                                               0.005, 0.005, 0.006, 0.006, 0.006, 0.006, 0.006};
  double signal_strength = 0.8;
  std::size_t redundancy_factor = 0;
};

// Marginals calibrated to the published cohort description; unlisted mass
// goes to the "other"-style categories.
std::map<std::string, std::vector<double>> default_demographic_marginals();

// Throws ConfigError when the configuration is unusable.
void validate_config(const SyntheticConfig& config);

// Code families the generator draws from; exposed so tests and the stub
// mapping tables agree on what carries signal.
inline constexpr std::size_t kMaxRedundancy = 20;
std::vector<std::string> risky_outcome_codes();

CohortDataset generate_synthetic_cohort(const SyntheticConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Files

enum class Format { kEventLines, kCohortArchive };

Format parse_format(std::string_view name);
// Picks the format from the extension: ".jsonl" is event-lines, anything else
// is treated as a cohort archive.
Format infer_format(const std::filesystem::path& path);

CohortDataset load_cohort(const std::filesystem::path& path, Format format);
void save_cohort(const CohortDataset& dataset, const std::filesystem::path& path, Format format);

CohortDataset parse_event_lines(std::string_view text);
std::string format_event_lines(const CohortDataset& dataset);
CohortDataset parse_cohort_archive(std::string_view text);
std::string format_cohort_archive(const CohortDataset& dataset);

// ---------------------------------------------------------------------------
// Splitting

struct PatientSplit {
  CohortDataset train;
  CohortDataset validation;
};

// Patient-level random split; the train side gets ceil(fraction * n).
PatientSplit split_patients(const CohortDataset& dataset, double train_fraction, std::uint64_t seed);

}  // namespace redrisk::cohort
