#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "redrisk/cohort.hpp"
#include "redrisk/execution.hpp"
#include "redrisk/matrix.hpp"

namespace redrisk::featurize {

using cohort::Day;

inline const std::vector<int> kDefaultHorizons{15, 30, 60, 90, 180, 360};

// Identifies one assessment anchor: row i of every matrix and label set built
// from the same dataset refers to the same anchor.
struct AnchorKey {
  std::string patient_id;
  std::size_t assessment_index = 0;
  Day day = 0;
  bool operator==(const AnchorKey&) const = default;
};

std::vector<AnchorKey> list_anchors(const cohort::CohortDataset& dataset);

// ---------------------------------------------------------------------------
// Outcome labels

class RiskyCodeTable {
 public:
  explicit RiskyCodeTable(std::vector<std::string> prefixes);

  // One prefix per line, '#' comments.
  static RiskyCodeTable parse(std::string_view text);
  static RiskyCodeTable load(const std::filesystem::path& path);
  static RiskyCodeTable stub();

  bool matches(std::string_view code) const;
  const std::vector<std::string>& prefixes() const { return prefixes_; }

 private:
  std::vector<std::string> prefixes_;
};

struct RiskLabelSet {
  std::vector<int> horizons;
  std::vector<AnchorKey> anchors;
  std::vector<std::int8_t> labels;  // anchors x horizons, row-major, values +1/-1

  std::size_t size() const { return anchors.size(); }
  int label(std::size_t anchor, std::size_t horizon_index) const {
    return labels[anchor * horizons.size() + horizon_index];
  }
  std::size_t horizon_index(int horizon_days) const;
  std::vector<int> column(std::size_t horizon_index) const;
  std::vector<int> column(std::size_t horizon_index, std::span<const std::size_t> rows) const;
  double prevalence(std::size_t horizon_index) const;
};

// +1 at horizon h iff a risky diagnosis falls in (anchor_day, anchor_day + h].
RiskLabelSet label_outcomes(const cohort::CohortDataset& dataset, const RiskyCodeTable& risky,
                            std::span<const int> horizons = kDefaultHorizons);

// ---------------------------------------------------------------------------
// Interval binning

// Month boundaries of the look-back intervals; a month is 30 days.
class IntervalScheme {
 public:
  explicit IntervalScheme(std::vector<int> boundaries_months = {0, 3, 6, 12, 24, 48});

  std::size_t size() const { return boundaries_.size() - 1; }
  const std::vector<int>& boundaries() const { return boundaries_; }
  // Interval holding an event `lag_days` before the anchor, if within history.
  std::optional<std::size_t> interval_of(Day lag_days) const;
  double width_months(std::size_t interval) const;
  std::string label(std::size_t interval) const;  // e.g. "0-3m"
  Day window_days() const { return boundaries_.back() * 30; }

 private:
  std::vector<int> boundaries_;
};

struct IntervalCounts {
  std::vector<int> counts;
  std::vector<double> normalized;  // counts / interval width in months
};

IntervalCounts bin_days(std::span<const Day> event_days, Day anchor_day, const IntervalScheme& scheme);

// Per event type: "move", "icd10:<3-char prefix>", "overall=<rating>".
std::map<std::string, IntervalCounts> bin_events(const cohort::EventTimeline& timeline, Day anchor_day,
                                                 const IntervalScheme& scheme);

// ---------------------------------------------------------------------------
// Diagnosis grouping

inline constexpr std::string_view kUnmappedGroup = "unmapped";

class MappingTable {
 public:
  // Throws ConfigError on an empty table or when one prefix maps to two groups.
  MappingTable(std::string name, std::vector<std::pair<std::string, std::string>> entries);

  // `PREFIX<TAB>GROUP` lines, '#' comments.
  static MappingTable parse(std::string name, std::string_view text);
  static MappingTable load(std::string name, const std::filesystem::path& path);
  static MappingTable stub_elixhauser();
  static MappingTable stub_mhdg();

  const std::string& name() const { return name_; }
  // Distinct groups in first-appearance order, followed by "unmapped".
  const std::vector<std::string>& groups() const { return groups_; }
  // Index into groups() of the longest matching prefix, or of "unmapped".
  std::size_t group_index(std::string_view code) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::string>> entries_;  // as given, normalized
  std::vector<std::pair<std::string, std::size_t>> by_length_;  // longest prefix first
  std::vector<std::string> groups_;
};

// Count per group (indexed like table.groups()).
std::vector<int> map_diagnoses(std::span<const std::string> codes, const MappingTable& table);

struct MappingTables {
  MappingTable elixhauser = MappingTable::stub_elixhauser();
  MappingTable mhdg = MappingTable::stub_mhdg();
};

// ---------------------------------------------------------------------------
// Assessment aggregation

struct AssessmentStats {
  double max_overall_over_time = 0.0;
  double sum_over_items_of_max_ratings = 0.0;
  double sum_over_items_of_mean_ratings = 0.0;
  double mean_over_time_of_item_sums = 0.0;
  double max_over_time_of_item_sums = 0.0;
};

// Throws DataError on an empty history.
AssessmentStats aggregate_assessments(std::span<const cohort::AssessmentEvent> history);

// ---------------------------------------------------------------------------
// Feature matrices

enum class FeatureSet { kFs1, kFs2, kFs3 };
enum class FeatureGroup { kDemographics, kIcd10, kElixhauser, kMhdg, kLifeEvent, kAssessment };

FeatureSet parse_feature_set(std::string_view name);  // "fs1" / "FS1"
std::string feature_set_name(FeatureSet set);          // "FS1"
std::string_view group_name(FeatureGroup group);

struct Column {
  std::string name;
  FeatureGroup group;
  bool operator==(const Column&) const = default;
};

struct FeatureMatrix {
  FeatureSet feature_set = FeatureSet::kFs1;
  std::vector<Column> columns;
  std::vector<AnchorKey> anchors;
  // Overall rating recorded at each anchor (the clinician score).
  std::vector<int> anchor_overall;
  Matrix values;

  std::vector<std::string> column_names() const;
  std::optional<std::size_t> find_column(std::string_view name) const;
};

struct FeatureOptions {
  IntervalScheme scheme = IntervalScheme();
  MappingTables tables;
  Execution execution = Execution::kParallel;
};

FeatureMatrix build_feature_matrix(const cohort::CohortDataset& dataset, FeatureSet set,
                                   const FeatureOptions& options = {});
// Same, checking row alignment with a label set built from the same dataset.
FeatureMatrix build_feature_matrix(const cohort::CohortDataset& dataset, const RiskLabelSet& labels,
                                   FeatureSet set, const FeatureOptions& options = {});

// Reorders/subsets columns to `names`; names absent from the matrix become
// all-zero columns (absent events encode as 0).
FeatureMatrix align_columns(const FeatureMatrix& matrix, std::span<const std::string> names);

FeatureMatrix select_columns(const FeatureMatrix& matrix, std::span<const std::size_t> columns);
FeatureMatrix select_rows(const FeatureMatrix& matrix, std::span<const std::size_t> rows);

// Columns whose fraction of nonzero values over `fit_rows` is >= threshold.
// Throws DataError when nothing survives.
std::vector<std::size_t> fit_rare_feature_filter(const FeatureMatrix& matrix,
                                                 std::span<const std::size_t> fit_rows,
                                                 double threshold = 0.01);

struct FilteredFeatures {
  FeatureMatrix matrix;
  std::vector<std::string> retained;
};

// Fits on `fit_rows`, applies the retained list to every row of `matrix`.
FilteredFeatures filter_rare_features(const FeatureMatrix& matrix, std::span<const std::size_t> fit_rows,
                                      double threshold = 0.01);

// Header `label_15,...,label_360,<feature columns>`.
void write_feature_csv(std::ostream& out, const FeatureMatrix& matrix, const RiskLabelSet& labels);

}  // namespace redrisk::featurize
