#include "redrisk/featurize.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "redrisk/error.hpp"

namespace redrisk::featurize {

using cohort::AssessmentEvent;
using cohort::CohortDataset;
using cohort::EventTimeline;

namespace {

std::string normalize_prefix(std::string_view raw) {
  std::string out;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string icd_prefix(std::string_view code) {
  std::string upper = normalize_prefix(code);
  if (upper.size() > 3) upper.resize(3);
  return upper;
}

// Splits text into trimmed, non-comment lines with their 1-based numbers.
std::vector<std::pair<std::size_t, std::string>> content_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    line.erase(0, start);
    if (!line.empty()) out.emplace_back(number, line);
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

constexpr const char* kStubElixhauser = R"(F32	depression
F33	depression
F10	alcohol_abuse
F11	drug_abuse
F19	drug_abuse
F20	psychoses
I10	hypertension_uncomplicated
E11	diabetes_uncomplicated
J45	chronic_pulmonary_disease
K70	liver_disease
I50	congestive_heart_failure
N18	renal_failure
C34	solid_tumour
E66	obesity
D64	deficiency_anaemia
G40	other_neurological_disorders
E03	hypothyroidism
)";

constexpr const char* kStubMhdg = R"(F0	organic_disorders
F1	substance_use
F2	psychotic_disorders
F3	mood_disorders
F40	anxiety_disorders
F41	anxiety_disorders
F43	stress_adjustment_disorders
F5	behavioural_syndromes
F6	personality_disorders
F9	childhood_onset_disorders
)";

constexpr const char* kStubRisky = "S51\nS11\nX6\nX7\nX80\nX81\nX82\nX83\nX84\nT39\nT42\nT43\n";

}  // namespace

std::vector<AnchorKey> list_anchors(const CohortDataset& dataset) {
  std::vector<AnchorKey> anchors;
  anchors.reserve(dataset.assessment_count());
  for (const auto& patient : dataset.patients) {
    const auto& assessments = patient.timeline.assessments;
    for (std::size_t k = 0; k < assessments.size(); ++k) {
      anchors.push_back({patient.patient_id, k, assessments[k].day});
    }
  }
  return anchors;
}

// ---------------------------------------------------------------------------

RiskyCodeTable::RiskyCodeTable(std::vector<std::string> prefixes) {
  for (auto& p : prefixes) {
    auto normalized = normalize_prefix(p);
    if (normalized.empty()) throw ConfigError("risky code table contains an empty prefix");
    prefixes_.push_back(std::move(normalized));
  }
  if (prefixes_.empty()) throw ConfigError("risky code table is empty");
  std::sort(prefixes_.begin(), prefixes_.end());
  prefixes_.erase(std::unique(prefixes_.begin(), prefixes_.end()), prefixes_.end());
}

RiskyCodeTable RiskyCodeTable::parse(std::string_view text) {
  std::vector<std::string> prefixes;
  for (auto& [number, line] : content_lines(text)) prefixes.push_back(line);
  return RiskyCodeTable(std::move(prefixes));
}

RiskyCodeTable RiskyCodeTable::load(const std::filesystem::path& path) { return parse(read_text(path)); }

RiskyCodeTable RiskyCodeTable::stub() { return parse(kStubRisky); }

bool RiskyCodeTable::matches(std::string_view code) const {
  const std::string upper = normalize_prefix(code);
  return std::any_of(prefixes_.begin(), prefixes_.end(),
                     [&](const std::string& p) { return upper.starts_with(p); });
}

std::size_t RiskLabelSet::horizon_index(int horizon_days) const {
  auto it = std::find(horizons.begin(), horizons.end(), horizon_days);
  if (it == horizons.end()) throw ConfigError("horizon " + std::to_string(horizon_days) + " not labeled");
  return static_cast<std::size_t>(it - horizons.begin());
}

std::vector<int> RiskLabelSet::column(std::size_t h) const {
  std::vector<int> out(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) out[i] = label(i, h);
  return out;
}

std::vector<int> RiskLabelSet::column(std::size_t h, std::span<const std::size_t> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = label(rows[i], h);
  return out;
}

double RiskLabelSet::prevalence(std::size_t h) const {
  if (anchors.empty()) return 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < anchors.size(); ++i) positives += label(i, h) > 0;
  return static_cast<double>(positives) / static_cast<double>(anchors.size());
}

RiskLabelSet label_outcomes(const CohortDataset& dataset, const RiskyCodeTable& risky,
                            std::span<const int> horizons) {
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    if (horizons[h] <= 0) throw ConfigError("horizons must be positive");
    if (h > 0 && horizons[h] <= horizons[h - 1]) throw ConfigError("horizons must be sorted ascending");
  }
  RiskLabelSet out;
  out.horizons.assign(horizons.begin(), horizons.end());
  out.anchors = list_anchors(dataset);
  out.labels.reserve(out.anchors.size() * horizons.size());
  for (const auto& patient : dataset.patients) {
    std::vector<Day> risky_days;
    for (const auto& d : patient.timeline.diagnoses) {
      if (risky.matches(d.code)) risky_days.push_back(d.day);
    }
    std::sort(risky_days.begin(), risky_days.end());
    for (const auto& a : patient.timeline.assessments) {
      auto next = std::upper_bound(risky_days.begin(), risky_days.end(), a.day);
      for (int h : horizons) {
        const bool hit = next != risky_days.end() && *next - a.day <= h;
        out.labels.push_back(hit ? 1 : -1);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

IntervalScheme::IntervalScheme(std::vector<int> boundaries_months) : boundaries_(std::move(boundaries_months)) {
  if (boundaries_.size() < 2) throw ConfigError("interval scheme needs at least two boundaries");
  if (boundaries_.front() != 0) throw ConfigError("interval scheme must start at 0 months");
  for (std::size_t i = 1; i < boundaries_.size(); ++i) {
    if (boundaries_[i] <= boundaries_[i - 1]) {
      throw ConfigError("interval boundaries must be strictly increasing");
    }
  }
}

std::optional<std::size_t> IntervalScheme::interval_of(Day lag_days) const {
  if (lag_days < 0) return std::nullopt;
  for (std::size_t i = 0; i + 1 < boundaries_.size(); ++i) {
    if (lag_days < boundaries_[i + 1] * 30) return i;
  }
  return std::nullopt;
}

double IntervalScheme::width_months(std::size_t interval) const {
  return static_cast<double>(boundaries_[interval + 1] - boundaries_[interval]);
}

std::string IntervalScheme::label(std::size_t interval) const {
  return std::to_string(boundaries_[interval]) + "-" + std::to_string(boundaries_[interval + 1]) + "m";
}

IntervalCounts bin_days(std::span<const Day> event_days, Day anchor_day, const IntervalScheme& scheme) {
  IntervalCounts out;
  out.counts.assign(scheme.size(), 0);
  for (Day d : event_days) {
    if (auto bin = scheme.interval_of(anchor_day - d)) ++out.counts[*bin];
  }
  out.normalized.resize(scheme.size());
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    out.normalized[i] = out.counts[i] / scheme.width_months(i);
  }
  return out;
}

std::map<std::string, IntervalCounts> bin_events(const EventTimeline& timeline, Day anchor_day,
                                                 const IntervalScheme& scheme) {
  std::map<std::string, std::vector<Day>> by_type;
  for (const auto& d : timeline.diagnoses) by_type["icd10:" + icd_prefix(d.code)].push_back(d.day);
  for (Day d : timeline.postcode_changes) by_type["move"].push_back(d);
  for (const auto& a : timeline.assessments) by_type["overall=" + std::to_string(a.overall)].push_back(a.day);
  std::map<std::string, IntervalCounts> out;
  for (const auto& [type, days] : by_type) {
    auto counts = bin_days(days, anchor_day, scheme);
    if (std::any_of(counts.counts.begin(), counts.counts.end(), [](int c) { return c > 0; })) {
      out.emplace(type, std::move(counts));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

MappingTable::MappingTable(std::string name, std::vector<std::pair<std::string, std::string>> entries)
    : name_(std::move(name)) {
  std::map<std::string, std::string> seen;
  for (auto& [prefix, group] : entries) {
    std::string p = normalize_prefix(prefix);
    if (p.empty() || group.empty()) throw ConfigError(name_ + " mapping: empty prefix or group");
    if (group == kUnmappedGroup) throw ConfigError(name_ + " mapping: group name 'unmapped' is reserved");
    auto [it, inserted] = seen.emplace(p, group);
    if (!inserted && it->second != group) {
      throw ConfigError(name_ + " mapping: prefix " + p + " is ambiguous ('" + it->second + "' vs '" +
                        group + "')");
    }
    if (!inserted) continue;
    entries_.emplace_back(p, group);
    if (std::find(groups_.begin(), groups_.end(), group) == groups_.end()) groups_.push_back(group);
  }
  if (entries_.empty()) throw ConfigError(name_ + " mapping table is empty");
  for (const auto& [prefix, group] : entries_) {
    auto idx = static_cast<std::size_t>(std::find(groups_.begin(), groups_.end(), group) - groups_.begin());
    by_length_.emplace_back(prefix, idx);
  }
  std::stable_sort(by_length_.begin(), by_length_.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  groups_.emplace_back(kUnmappedGroup);
}

MappingTable MappingTable::parse(std::string name, std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (auto& [number, line] : content_lines(text)) {
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ConfigError(name + " mapping line " + std::to_string(number) + ": expected PREFIX<TAB>GROUP");
    }
    std::string group = line.substr(tab + 1);
    while (!group.empty() && std::isspace(static_cast<unsigned char>(group.front()))) group.erase(0, 1);
    entries.emplace_back(line.substr(0, tab), group);
  }
  return MappingTable(std::move(name), std::move(entries));
}

MappingTable MappingTable::load(std::string name, const std::filesystem::path& path) {
  return parse(std::move(name), read_text(path));
}

MappingTable MappingTable::stub_elixhauser() { return parse("elixhauser", kStubElixhauser); }
MappingTable MappingTable::stub_mhdg() { return parse("mhdg", kStubMhdg); }

std::size_t MappingTable::group_index(std::string_view code) const {
  const std::string upper = normalize_prefix(code);
  for (const auto& [prefix, idx] : by_length_) {
    if (upper.starts_with(prefix)) return idx;
  }
  return groups_.size() - 1;
}

std::vector<int> map_diagnoses(std::span<const std::string> codes, const MappingTable& table) {
  std::vector<int> counts(table.groups().size(), 0);
  for (const auto& code : codes) ++counts[table.group_index(code)];
  return counts;
}

// ---------------------------------------------------------------------------

AssessmentStats aggregate_assessments(std::span<const AssessmentEvent> history) {
  if (history.empty()) throw DataError("anchor has no assessment at or before it");
  AssessmentStats s;
  std::array<int, cohort::kAssessmentItems> item_max{};
  std::array<double, cohort::kAssessmentItems> item_total{};
  double sum_total = 0.0;
  for (const auto& a : history) {
    s.max_overall_over_time = std::max(s.max_overall_over_time, static_cast<double>(a.overall));
    const double sum = a.item_sum();
    sum_total += sum;
    s.max_over_time_of_item_sums = std::max(s.max_over_time_of_item_sums, sum);
    for (std::size_t j = 0; j < cohort::kAssessmentItems; ++j) {
      item_max[j] = std::max(item_max[j], a.items[j]);
      item_total[j] += a.items[j];
    }
  }
  const auto t = static_cast<double>(history.size());
  for (std::size_t j = 0; j < cohort::kAssessmentItems; ++j) {
    s.sum_over_items_of_max_ratings += item_max[j];
    s.sum_over_items_of_mean_ratings += item_total[j] / t;
  }
  s.mean_over_time_of_item_sums = sum_total / t;
  return s;
}

// ---------------------------------------------------------------------------

FeatureSet parse_feature_set(std::string_view name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "fs1") return FeatureSet::kFs1;
  if (lower == "fs2") return FeatureSet::kFs2;
  if (lower == "fs3") return FeatureSet::kFs3;
  throw ConfigError("unknown feature set '" + std::string(name) + "' (expected fs1, fs2 or fs3)");
}

std::string feature_set_name(FeatureSet set) {
  switch (set) {
    case FeatureSet::kFs1: return "FS1";
    case FeatureSet::kFs2: return "FS2";
    case FeatureSet::kFs3: return "FS3";
  }
  return "?";
}

std::string_view group_name(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::kDemographics: return "demographics";
    case FeatureGroup::kIcd10: return "icd10";
    case FeatureGroup::kElixhauser: return "elixhauser";
    case FeatureGroup::kMhdg: return "mhdg";
    case FeatureGroup::kLifeEvent: return "life_event";
    case FeatureGroup::kAssessment: return "assessment";
  }
  return "?";
}

std::vector<std::string> FeatureMatrix::column_names() const {
  std::vector<std::string> names;
  names.reserve(columns.size());
  for (const auto& c : columns) names.push_back(c.name);
  return names;
}

std::optional<std::size_t> FeatureMatrix::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

namespace {

struct Layout {
  bool demographics = false;
  bool icd = false;
  bool elix = false;
  bool mhdg = false;
  bool life = false;
  bool assessment = false;

  // Column offsets; valid only when the group is present.
  std::size_t demo_base = 0, icd_base = 0, elix_base = 0, mhdg_base = 0, life_base = 0;
  std::size_t overall_base = 0, stats_base = 0;
  std::vector<std::size_t> demo_field_base;
};

Layout layout_for(FeatureSet set) {
  Layout l;
  switch (set) {
    case FeatureSet::kFs1:
      l.demographics = l.icd = l.elix = l.mhdg = l.life = true;
      break;
    case FeatureSet::kFs2:
      l.demographics = l.icd = l.elix = l.mhdg = l.life = l.assessment = true;
      break;
    case FeatureSet::kFs3:
      l.mhdg = l.assessment = true;
      break;
  }
  return l;
}

// Prefixes of diagnoses that fall inside some anchor's look-back window.
std::vector<std::string> icd_vocabulary(const CohortDataset& dataset, const IntervalScheme& scheme) {
  std::set<std::string> vocab;
  for (const auto& patient : dataset.patients) {
    const auto& assessments = patient.timeline.assessments;
    for (const auto& d : patient.timeline.diagnoses) {
      auto it = std::lower_bound(assessments.begin(), assessments.end(), d.day,
                                 [](const AssessmentEvent& a, Day day) { return a.day < day; });
      if (it != assessments.end() && scheme.interval_of(it->day - d.day)) vocab.insert(icd_prefix(d.code));
    }
  }
  return {vocab.begin(), vocab.end()};
}

void fill_patient_rows(const cohort::PatientRecord& patient, const Layout& layout,
                       const std::unordered_map<std::string, std::size_t>& icd_index,
                       const FeatureOptions& options, Matrix& values, std::size_t first_row) {
  const auto& scheme = options.scheme;
  const std::size_t n_int = scheme.size();
  const auto& tl = patient.timeline;

  struct CodedDiagnosis {
    Day day;
    std::size_t icd;  // SIZE_MAX when outside the vocabulary
    std::size_t elix;
    std::size_t mhdg;
  };
  std::vector<CodedDiagnosis> coded;
  coded.reserve(tl.diagnoses.size());
  for (const auto& d : tl.diagnoses) {
    auto it = icd_index.find(icd_prefix(d.code));
    coded.push_back({d.day, it == icd_index.end() ? SIZE_MAX : it->second,
                     options.tables.elixhauser.group_index(d.code), options.tables.mhdg.group_index(d.code)});
  }

  std::size_t demo_offsets[8] = {};
  if (layout.demographics) {
    const auto& schema = cohort::demographic_schema();
    const auto fields = patient.demographics.fields();
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const auto& cats = schema[f].categories;
      auto pos = std::find(cats.begin(), cats.end(), *fields[f]);
      if (pos == cats.end()) {
        throw DataError("patient " + patient.patient_id + ": unknown " + std::string(schema[f].name) + " '" +
                        *fields[f] + "'");
      }
      demo_offsets[f] = layout.demo_field_base[f] + static_cast<std::size_t>(pos - cats.begin());
    }
  }

  for (std::size_t k = 0; k < tl.assessments.size(); ++k) {
    const Day anchor = tl.assessments[k].day;
    auto row = values.row(first_row + k);
    if (layout.demographics) {
      for (std::size_t offset : demo_offsets) row[offset] = 1.0;
    }
    for (const auto& d : coded) {
      auto bin = scheme.interval_of(anchor - d.day);
      if (!bin) continue;
      const double w = 1.0 / scheme.width_months(*bin);
      if (layout.icd && d.icd != SIZE_MAX) row[layout.icd_base + d.icd * n_int + *bin] += w;
      if (layout.elix) row[layout.elix_base + d.elix * n_int + *bin] += w;
      if (layout.mhdg) row[layout.mhdg_base + d.mhdg * n_int + *bin] += w;
    }
    if (layout.life) {
      for (Day m : tl.postcode_changes) {
        if (auto bin = scheme.interval_of(anchor - m)) row[layout.life_base + *bin] += 1.0 / scheme.width_months(*bin);
      }
    }
    if (layout.assessment) {
      std::size_t history_end = 0;
      for (const auto& a : tl.assessments) {
        if (a.day > anchor) break;
        ++history_end;
        if (auto bin = scheme.interval_of(anchor - a.day)) {
          row[layout.overall_base + static_cast<std::size_t>(a.overall) * n_int + *bin] +=
              1.0 / scheme.width_months(*bin);
        }
      }
      const auto stats = aggregate_assessments(std::span(tl.assessments).first(history_end));
      row[layout.stats_base + 0] = stats.max_overall_over_time;
      row[layout.stats_base + 1] = stats.sum_over_items_of_max_ratings;
      row[layout.stats_base + 2] = stats.sum_over_items_of_mean_ratings;
      row[layout.stats_base + 3] = stats.mean_over_time_of_item_sums;
      row[layout.stats_base + 4] = stats.max_over_time_of_item_sums;
    }
  }
}

}  // namespace

FeatureMatrix build_feature_matrix(const CohortDataset& dataset, FeatureSet set, const FeatureOptions& options) {
  const auto& scheme = options.scheme;
  const std::size_t n_int = scheme.size();
  Layout layout = layout_for(set);
  FeatureMatrix out;
  out.feature_set = set;

  auto add_binned = [&](FeatureGroup group, const std::string& stem) {
    for (std::size_t i = 0; i < n_int; ++i) out.columns.push_back({stem + "@" + scheme.label(i), group});
  };

  if (layout.demographics) {
    layout.demo_base = out.columns.size();
    for (const auto& field : cohort::demographic_schema()) {
      layout.demo_field_base.push_back(out.columns.size());
      for (auto cat : field.categories) {
        out.columns.push_back({"demo:" + std::string(field.name) + "=" + std::string(cat), FeatureGroup::kDemographics});
      }
    }
  }
  std::unordered_map<std::string, std::size_t> icd_index;
  if (layout.icd) {
    layout.icd_base = out.columns.size();
    const auto vocab = icd_vocabulary(dataset, scheme);
    for (std::size_t v = 0; v < vocab.size(); ++v) {
      icd_index.emplace(vocab[v], v);
      add_binned(FeatureGroup::kIcd10, "icd10:" + vocab[v]);
    }
  }
  if (layout.elix) {
    layout.elix_base = out.columns.size();
    for (const auto& g : options.tables.elixhauser.groups()) add_binned(FeatureGroup::kElixhauser, "elix:" + g);
  }
  if (layout.mhdg) {
    layout.mhdg_base = out.columns.size();
    for (const auto& g : options.tables.mhdg.groups()) add_binned(FeatureGroup::kMhdg, "mhdg:" + g);
  }
  if (layout.life) {
    layout.life_base = out.columns.size();
    add_binned(FeatureGroup::kLifeEvent, "life:postcode_change");
  }
  if (layout.assessment) {
    layout.overall_base = out.columns.size();
    for (int r = 0; r <= cohort::kMaxRating; ++r) {
      add_binned(FeatureGroup::kAssessment, "assess:overall=" + std::to_string(r));
    }
    layout.stats_base = out.columns.size();
    for (const char* stat : {"assess:max_overall", "assess:sum_item_max", "assess:sum_item_mean",
                             "assess:mean_item_sum", "assess:max_item_sum"}) {
      out.columns.push_back({stat, FeatureGroup::kAssessment});
    }
  }

  out.anchors = list_anchors(dataset);
  out.anchor_overall.reserve(out.anchors.size());
  std::vector<std::size_t> first_row(dataset.patients.size() + 1, 0);
  for (std::size_t p = 0; p < dataset.patients.size(); ++p) {
    first_row[p + 1] = first_row[p] + dataset.patients[p].timeline.assessments.size();
    for (const auto& a : dataset.patients[p].timeline.assessments) out.anchor_overall.push_back(a.overall);
  }
  out.values = Matrix(out.anchors.size(), out.columns.size());

  const auto n_patients = static_cast<std::ptrdiff_t>(dataset.patients.size());
  if (options.execution == Execution::kParallel) {
    std::string failure;
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t p = 0; p < n_patients; ++p) {
      try {
        fill_patient_rows(dataset.patients[p], layout, icd_index, options, out.values, first_row[p]);
      } catch (const std::exception& e) {
#pragma omp critical
        if (failure.empty()) failure = e.what();
      }
    }
    if (!failure.empty()) throw DataError(failure);
  } else {
    for (std::ptrdiff_t p = 0; p < n_patients; ++p) {
      fill_patient_rows(dataset.patients[p], layout, icd_index, options, out.values, first_row[p]);
    }
  }
  return out;
}

FeatureMatrix build_feature_matrix(const CohortDataset& dataset, const RiskLabelSet& labels, FeatureSet set,
                                   const FeatureOptions& options) {
  auto matrix = build_feature_matrix(dataset, set, options);
  if (matrix.anchors != labels.anchors) {
    throw DataError("label set is not aligned with the dataset's assessment anchors");
  }
  return matrix;
}

FeatureMatrix align_columns(const FeatureMatrix& matrix, std::span<const std::string> names) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < matrix.columns.size(); ++c) index.emplace(matrix.columns[c].name, c);
  FeatureMatrix out;
  out.feature_set = matrix.feature_set;
  out.anchors = matrix.anchors;
  out.anchor_overall = matrix.anchor_overall;
  out.values = Matrix(matrix.values.rows(), names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto it = index.find(names[j]);
    if (it == index.end()) {
      out.columns.push_back({names[j], FeatureGroup::kIcd10});
      continue;
    }
    out.columns.push_back(matrix.columns[it->second]);
    for (std::size_t r = 0; r < matrix.values.rows(); ++r) out.values(r, j) = matrix.values(r, it->second);
  }
  return out;
}

FeatureMatrix select_columns(const FeatureMatrix& matrix, std::span<const std::size_t> columns) {
  FeatureMatrix out;
  out.feature_set = matrix.feature_set;
  out.anchors = matrix.anchors;
  out.anchor_overall = matrix.anchor_overall;
  for (std::size_t c : columns) out.columns.push_back(matrix.columns.at(c));
  out.values = matrix.values.select_cols(columns);
  return out;
}

FeatureMatrix select_rows(const FeatureMatrix& matrix, std::span<const std::size_t> rows) {
  FeatureMatrix out;
  out.feature_set = matrix.feature_set;
  out.columns = matrix.columns;
  for (std::size_t r : rows) {
    out.anchors.push_back(matrix.anchors.at(r));
    out.anchor_overall.push_back(matrix.anchor_overall.at(r));
  }
  out.values = matrix.values.select_rows(rows);
  return out;
}

std::vector<std::size_t> fit_rare_feature_filter(const FeatureMatrix& matrix, std::span<const std::size_t> fit_rows,
                                                 double threshold) {
  if (matrix.values.rows() == 0 || matrix.columns.empty() || fit_rows.empty()) {
    throw DataError("cannot filter features of an empty matrix");
  }
  std::vector<std::size_t> nonzero(matrix.columns.size(), 0);
  for (std::size_t r : fit_rows) {
    auto row = matrix.values.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) nonzero[c] += row[c] != 0.0;
  }
  std::vector<std::size_t> retained;
  const auto n = static_cast<double>(fit_rows.size());
  for (std::size_t c = 0; c < nonzero.size(); ++c) {
    if (static_cast<double>(nonzero[c]) / n >= threshold) retained.push_back(c);
  }
  if (retained.empty()) {
    throw DataError("every feature is active in fewer than " + std::to_string(threshold * 100.0) +
                    "% of training rows; lower the filter threshold");
  }
  return retained;
}

FilteredFeatures filter_rare_features(const FeatureMatrix& matrix, std::span<const std::size_t> fit_rows,
                                      double threshold) {
  const auto retained = fit_rare_feature_filter(matrix, fit_rows, threshold);
  FilteredFeatures out{select_columns(matrix, retained), {}};
  out.retained = out.matrix.column_names();
  return out;
}

void write_feature_csv(std::ostream& out, const FeatureMatrix& matrix, const RiskLabelSet& labels) {
  if (matrix.anchors != labels.anchors) throw DataError("label set is not aligned with the feature matrix");
  bool first = true;
  for (int h : labels.horizons) {
    out << (first ? "" : ",") << "label_" << h;
    first = false;
  }
  for (const auto& c : matrix.columns) {
    out << (first ? "" : ",") << c.name;
    first = false;
  }
  out << '\n';
  const auto precision = out.precision(17);
  for (std::size_t r = 0; r < matrix.values.rows(); ++r) {
    first = true;
    for (std::size_t h = 0; h < labels.horizons.size(); ++h) {
      out << (first ? "" : ",") << labels.label(r, h);
      first = false;
    }
    for (double v : matrix.values.row(r)) {
      out << (first ? "" : ",") << v;
      first = false;
    }
    out << '\n';
  }
  out.precision(precision);
}

}  // namespace redrisk::featurize
