#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "redrisk/cohort.hpp"
#include "redrisk/ensemble.hpp"
#include "redrisk/featurize.hpp"
#include "redrisk/linear.hpp"
#include "redrisk/neuralnet.hpp"
#include "redrisk/trees.hpp"

namespace redrisk::eval {

enum class ModelKind { kCart, kForest, kGbm, kDnnd, kLasso, kClinician };

ModelKind parse_model(std::string_view name);  // cart, rf, gbm, dnnd, lasso, clinician
std::string model_name(ModelKind kind);

enum class CohortSource { kSynthetic, kFile };

struct ExperimentConfig {
  // cohort
  CohortSource source = CohortSource::kSynthetic;
  std::filesystem::path cohort_path;
  std::optional<cohort::Format> cohort_format;
  cohort::SyntheticConfig synthetic;
  std::uint64_t cohort_seed = 1;

  // featurize
  std::vector<int> interval_months{0, 3, 6, 12, 24, 48};
  double rare_threshold = 0.01;
  std::filesystem::path elixhauser_path;  // empty: bundled stub
  std::filesystem::path mhdg_path;
  std::filesystem::path risky_codes_path;

  // protocol
  std::vector<featurize::FeatureSet> feature_sets{featurize::FeatureSet::kFs1, featurize::FeatureSet::kFs2,
                                                  featurize::FeatureSet::kFs3};
  std::vector<int> horizons = featurize::kDefaultHorizons;
  std::vector<ModelKind> models{ModelKind::kCart, ModelKind::kLasso, ModelKind::kForest, ModelKind::kGbm,
                                ModelKind::kDnnd};
  std::vector<std::uint64_t> seeds{1};
  double train_fraction = 0.5;
  bool write_roc = true;
  // Rating at or above which the clinician baseline predicts +1.
  double clinician_threshold = 2.0;

  // model settings; seeds inside are replaced per run seed
  trees::TreeParams cart;
  ensemble::ForestParams rf;
  ensemble::GbmParams gbm;
  std::vector<std::size_t> dnnd_hidden{50, 50};
  nn::TrainSchedule dnnd;
  std::size_t lasso_grid_size = 20;
  double lasso_grid_ratio = 1000.0;
  linear::LassoOptions lasso;
};

// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& config);

struct MetricRow {
  std::string model;
  std::string feature_set;
  int horizon_days = 0;
  std::size_t n = 0;
  std::size_t positives = 0;
  double recall = 0.0;
  double precision = 0.0;
  double f_measure = 0.0;
  double auc = 0.5;
  double auc_ci_lo = 0.0;
  double auc_ci_hi = 1.0;
  std::uint64_t seed = 0;
};

inline constexpr std::string_view kMetricsHeader =
    "model,feature_set,horizon_days,n,positives,recall,precision,f_measure,auc,auc_ci_lo,auc_ci_hi,seed";

std::string format_metrics_csv(const std::vector<MetricRow>& rows);

struct CellScores {
  std::string model;
  std::string feature_set;
  int horizon_days = 0;
  std::uint64_t seed = 0;
  std::vector<int> labels;
  std::vector<double> scores;
};

// Columns with a nonzero weight in one tuned lasso fit.
struct LassoSupport {
  std::string feature_set;
  int horizon_days = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  std::vector<std::string> features;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<LassoSupport> lasso_supports;
  std::vector<CellScores> cells;  // validation scores behind each row
  // Label prevalence over all anchors, per configured horizon.
  std::vector<double> prevalence;
  nlohmann::json archive;  // models fitted under the first seed
  std::vector<std::string> warnings;
};

using ProgressFn = std::function<void(const std::string&)>;

// Runs every (seed, feature set, model, horizon) cell. Errors are rethrown
// with the cell named. Reads the cohort and mapping tables, writes nothing.
ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});
ExperimentResult run_experiment(const ExperimentConfig& config, const cohort::CohortDataset& dataset,
                                const ProgressFn& progress = {});

cohort::CohortDataset load_experiment_cohort(const ExperimentConfig& config);
featurize::MappingTables load_mapping_tables(const ExperimentConfig& config);
featurize::RiskyCodeTable load_risky_codes(const ExperimentConfig& config);

// metrics.csv, models.json, lasso_support.csv and
// roc/<model>_<fs>_h<h>_s<seed>.csv, each written atomically.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& out_dir, bool write_roc);

// Scores every anchor of `dataset` with every model in the archive. CSV
// columns: patient_id,assessment_index,day,model,feature_set,horizon_days,score,label.
std::string score_cohort(const nlohmann::json& archive, const cohort::CohortDataset& dataset);

// Atomic text write (temporary file + rename).
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace redrisk::eval
