#include "redrisk/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "redrisk/error.hpp"
#include "redrisk/metrics.hpp"
#include "redrisk/random.hpp"

namespace redrisk::eval {

using nlohmann::json;
namespace fz = featurize;

namespace {

constexpr std::string_view kArchiveMagic = "REDRISK-MODELS";
constexpr int kArchiveVersion = 1;

std::string cell_name(std::string_view model, fz::FeatureSet fs, int horizon) {
  std::string s = "[" + std::string(model) + " " + fz::feature_set_name(fs);
  if (horizon > 0) s += " " + std::to_string(horizon) + "d";
  return s + "] ";
}

// Rethrows with the cell identified, keeping the error category.
template <typename Fn>
auto in_cell(const std::string& cell, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(cell + e.what());
  } catch (const DataError& e) {
    throw DataError(cell + e.what());
  }
}

std::uint64_t cell_seed(std::uint64_t seed, fz::FeatureSet fs, ModelKind kind, int horizon) {
  std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(fs) + 1);
  s = derive_seed(s, static_cast<std::uint64_t>(kind) + 11);
  return derive_seed(s, static_cast<std::uint64_t>(horizon));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json table_json(const fz::MappingTable& table) {
  json entries = json::array();
  for (const auto& [prefix, group] : table.entries()) entries.push_back({prefix, group});
  return entries;
}

fz::MappingTable table_from_json(std::string name, const json& j) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& e : j) entries.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  return fz::MappingTable(std::move(name), std::move(entries));
}

// Network inputs: sign(x) log(1 + |x|), then standardized with training
// statistics. Counts are heavy-tailed; constant columns get scale 1.
struct InputTransform {
  std::vector<double> mean;
  std::vector<double> scale;

  static double squash(double v) { return v < 0.0 ? -std::log1p(-v) : std::log1p(v); }

  static InputTransform fit(const Matrix& x) {
    InputTransform t;
    const std::size_t n = x.rows();
    t.mean.assign(x.cols(), 0.0);
    t.scale.assign(x.cols(), 1.0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += squash(x(i, j));
      const double mean = sum / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) ss += (squash(x(i, j)) - mean) * (squash(x(i, j)) - mean);
      const double sd = std::sqrt(ss / static_cast<double>(n));
      t.mean[j] = mean;
      if (sd > 1e-12) t.scale[j] = sd;
    }
    return t;
  }

  void apply_row(std::span<const double> x, std::span<double> out) const {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (squash(x[j]) - mean[j]) / scale[j];
  }

  Matrix apply(const Matrix& x) const {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) apply_row(x.row(i), out.row(i));
    return out;
  }
};

struct ModelOutput {
  std::vector<double> scores;
  std::vector<int> labels;
};

void add_row(ExperimentResult& result, const std::string& model, fz::FeatureSet fs, int horizon,
             std::uint64_t seed, std::span<const int> truth, ModelOutput out) {
  const auto conf = confusion_metrics(truth, out.labels);
  const auto auc = auc_mann_whitney(truth, out.scores);
  MetricRow row;
  row.model = model;
  row.feature_set = fz::feature_set_name(fs);
  row.horizon_days = horizon;
  row.n = truth.size();
  row.positives = auc.positives;
  row.recall = conf.recall;
  row.precision = conf.precision;
  row.f_measure = conf.f_measure;
  row.auc = auc.auc;
  row.auc_ci_lo = auc.ci_lo;
  row.auc_ci_hi = auc.ci_hi;
  row.seed = seed;
  result.rows.push_back(row);
  result.cells.push_back({model, row.feature_set, horizon, seed, std::vector<int>(truth.begin(), truth.end()),
                          std::move(out.scores)});
}

template <typename Predict>
ModelOutput score_rows(const Matrix& x, Predict&& predict) {
  ModelOutput out;
  out.scores.reserve(x.rows());
  out.labels.reserve(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto [score, label] = predict(x.row(i));
    out.scores.push_back(score);
    out.labels.push_back(label);
  }
  return out;
}

json model_entry(std::string_view kind, int horizon, json model) {
  return {{"kind", kind}, {"horizon_days", horizon}, {"model", std::move(model)}};
}

}  // namespace

ModelKind parse_model(std::string_view name) {
  if (name == "cart") return ModelKind::kCart;
  if (name == "rf") return ModelKind::kForest;
  if (name == "gbm") return ModelKind::kGbm;
  if (name == "dnnd") return ModelKind::kDnnd;
  if (name == "lasso") return ModelKind::kLasso;
  if (name == "clinician") return ModelKind::kClinician;
  throw ConfigError("unknown model '" + std::string(name) + "' (expected cart, rf, gbm, dnnd, lasso or clinician)");
}

std::string model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kCart: return "cart";
    case ModelKind::kForest: return "rf";
    case ModelKind::kGbm: return "gbm";
    case ModelKind::kDnnd: return "dnnd";
    case ModelKind::kLasso: return "lasso";
    case ModelKind::kClinician: return "clinician";
  }
  return "?";
}

void validate(const ExperimentConfig& c) {
  if (c.source == CohortSource::kFile && c.cohort_path.empty()) {
    throw ConfigError("cohort.path is required when cohort.source = file");
  }
  if (c.source == CohortSource::kSynthetic) cohort::validate_config(c.synthetic);
  if (c.feature_sets.empty()) throw ConfigError("experiment.feature_sets must not be empty");
  if (c.horizons.empty()) throw ConfigError("experiment.horizons must not be empty");
  if (c.models.empty()) throw ConfigError("experiment.models must not be empty");
  if (c.seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  for (int h : c.horizons) {
    if (h <= 0) throw ConfigError("experiment.horizons must be positive day counts");
  }
  if (std::set<int>(c.horizons.begin(), c.horizons.end()).size() != c.horizons.size()) {
    throw ConfigError("experiment.horizons contains a duplicate");
  }
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    throw ConfigError("experiment.train_fraction must lie in (0,1)");
  }
  if (!(c.rare_threshold >= 0.0 && c.rare_threshold <= 1.0)) {
    throw ConfigError("featurize.rare_threshold must lie in [0,1]");
  }
  fz::IntervalScheme{c.interval_months};
  trees::validate(c.cart);
  if (c.rf.n_trees < 1) throw ConfigError("rf.n_trees must be at least 1");
  if (!(c.rf.min_leaf_fraction > 0.0 && c.rf.min_leaf_fraction <= 0.5)) {
    throw ConfigError("rf.min_leaf_fraction must lie in (0,0.5]");
  }
  ensemble::validate(c.gbm);
  nn::validate(c.dnnd);
  nn::NetArchitecture arch;
  arch.input_dim = 1;
  arch.hidden = c.dnnd_hidden;
  arch.n_tasks = c.horizons.size();
  nn::validate(arch);
  if (c.lasso_grid_size < 1) throw ConfigError("lasso.grid_size must be at least 1");
  if (!(c.lasso_grid_ratio >= 1.0)) throw ConfigError("lasso.grid_ratio must be at least 1");
  if (!(c.lasso.tolerance > 0.0)) throw ConfigError("lasso.tolerance must be positive");
  if (c.lasso.max_sweeps < 1) throw ConfigError("lasso.max_sweeps must be at least 1");
}

cohort::CohortDataset load_experiment_cohort(const ExperimentConfig& config) {
  if (config.source == CohortSource::kSynthetic) {
    return cohort::generate_synthetic_cohort(config.synthetic, config.cohort_seed);
  }
  const auto format = config.cohort_format ? *config.cohort_format : cohort::infer_format(config.cohort_path);
  return cohort::load_cohort(config.cohort_path, format);
}

fz::MappingTables load_mapping_tables(const ExperimentConfig& config) {
  fz::MappingTables tables;
  if (!config.elixhauser_path.empty()) tables.elixhauser = fz::MappingTable::load("elixhauser", config.elixhauser_path);
  if (!config.mhdg_path.empty()) tables.mhdg = fz::MappingTable::load("mhdg", config.mhdg_path);
  return tables;
}

fz::RiskyCodeTable load_risky_codes(const ExperimentConfig& config) {
  return config.risky_codes_path.empty() ? fz::RiskyCodeTable::stub() : fz::RiskyCodeTable::load(config.risky_codes_path);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  validate(config);
  return run_experiment(config, load_experiment_cohort(config), progress);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const cohort::CohortDataset& dataset,
                                const ProgressFn& progress) {
  validate(config);
  auto note = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  ExperimentResult result;
  const auto risky = load_risky_codes(config);
  fz::FeatureOptions options;
  options.scheme = fz::IntervalScheme(config.interval_months);
  options.tables = load_mapping_tables(config);

  const auto labels = fz::label_outcomes(dataset, risky, config.horizons);
  if (labels.size() == 0) throw DataError("cohort has no assessment anchors");
  for (std::size_t h = 0; h < config.horizons.size(); ++h) result.prevalence.push_back(labels.prevalence(h));

  std::vector<fz::FeatureMatrix> full;
  for (auto fs : config.feature_sets) {
    note("featurizing " + fz::feature_set_name(fs));
    full.push_back(in_cell(cell_name("featurize", fs, 0), [&] { return fz::build_feature_matrix(dataset, labels, fs, options); }));
  }

  json archive;
  archive["magic"] = kArchiveMagic;
  archive["version"] = kArchiveVersion;
  archive["seed"] = config.seeds.front();
  archive["horizons"] = config.horizons;
  archive["interval_months"] = config.interval_months;
  archive["clinician_threshold"] = config.clinician_threshold;
  archive["mapping_tables"] = {{"elixhauser", table_json(options.tables.elixhauser)},
                               {"mhdg", table_json(options.tables.mhdg)}};
  archive["feature_sets"] = json::array();

  const std::size_t n_tasks = config.horizons.size();
  for (std::size_t seed_index = 0; seed_index < config.seeds.size(); ++seed_index) {
    const std::uint64_t seed = config.seeds[seed_index];
    const bool keep_models = seed_index == 0;
    const auto split = cohort::split_patients(dataset, config.train_fraction, seed);
    std::unordered_set<std::string> train_ids;
    for (const auto& p : split.train.patients) train_ids.insert(p.patient_id);
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
    for (std::size_t i = 0; i < labels.anchors.size(); ++i) {
      (train_ids.count(labels.anchors[i].patient_id) ? train_rows : val_rows).push_back(i);
    }
    if (train_rows.empty() || val_rows.empty()) {
      throw DataError("split leaves no anchors on one side (train " + std::to_string(train_rows.size()) +
                      ", validation " + std::to_string(val_rows.size()) + ")");
    }

    for (std::size_t f = 0; f < config.feature_sets.size(); ++f) {
      const auto fs = config.feature_sets[f];
      const auto filtered = in_cell(cell_name("filter", fs, 0), [&] {
        return fz::filter_rare_features(full[f], train_rows, config.rare_threshold);
      });
      const Matrix x_train = filtered.matrix.values.select_rows(train_rows);
      const Matrix x_val = filtered.matrix.values.select_rows(val_rows);
      note("seed " + std::to_string(seed) + " " + fz::feature_set_name(fs) + ": " +
           std::to_string(filtered.retained.size()) + " of " + std::to_string(full[f].columns.size()) +
           " columns retained");
      json fs_entry = {{"name", fz::feature_set_name(fs)}, {"retained", filtered.retained}, {"models", json::array()}};

      for (ModelKind kind : config.models) {
        const std::string name = model_name(kind);
        if (kind == ModelKind::kDnnd) {
          const std::string cell = cell_name(name, fs, 0);
          note(cell + "training");
          in_cell(cell, [&] {
            const auto transform = InputTransform::fit(x_train);
            std::vector<int> y(train_rows.size() * n_tasks);
            for (std::size_t i = 0; i < train_rows.size(); ++i) {
              for (std::size_t h = 0; h < n_tasks; ++h) y[i * n_tasks + h] = labels.label(train_rows[i], h);
            }
            nn::NetArchitecture arch;
            arch.input_dim = x_train.cols();
            arch.hidden = config.dnnd_hidden;
            arch.n_tasks = n_tasks;
            auto schedule = config.dnnd;
            schedule.seed = cell_seed(seed, fs, kind, 0);
            const auto net = nn::train_dnnd(transform.apply(x_train), y, arch, schedule);
            for (const auto& w : net.report.warnings) result.warnings.push_back(cell + w);
            const Matrix xv = transform.apply(x_val);
            std::vector<std::vector<nn::TaskPrediction>> preds;
            for (std::size_t i = 0; i < xv.rows(); ++i) preds.push_back(nn::predict_dnnd(net, xv.row(i)));
            for (std::size_t h = 0; h < n_tasks; ++h) {
              ModelOutput out;
              for (const auto& p : preds) {
                out.scores.push_back(p[h].score);
                out.labels.push_back(p[h].label);
              }
              in_cell(cell_name(name, fs, config.horizons[h]), [&] {
                add_row(result, name, fs, config.horizons[h], seed, labels.column(h, val_rows), std::move(out));
                return 0;
              });
            }
            if (keep_models) {
              json entry = model_entry("dnnd.v1", 0, net.to_json());
              entry["input_mean"] = transform.mean;
              entry["input_scale"] = transform.scale;
              fs_entry["models"].push_back(std::move(entry));
            }
            return 0;
          });
          continue;
        }

        for (std::size_t h = 0; h < n_tasks; ++h) {
          const int horizon = config.horizons[h];
          const std::string cell = cell_name(name, fs, horizon);
          in_cell(cell, [&] {
            const auto y_train = labels.column(h, train_rows);
            const auto y_val = labels.column(h, val_rows);
            const std::uint64_t s = cell_seed(seed, fs, kind, horizon);
            ModelOutput out;
            json saved;
            std::string kind_tag;
            switch (kind) {
              case ModelKind::kCart: {
                auto params = config.cart;
                params.task = trees::Task::kClassification;
                params.seed = s;
                const auto tree = trees::fit_classification_tree(x_train, y_train, params);
                out = score_rows(x_val, [&](std::span<const double> x) {
                  const double p = tree.predict(x);
                  return std::pair{p, p >= 0.5 ? 1 : -1};
                });
                kind_tag = "cart.v1";
                if (keep_models) saved = tree.to_json();
                break;
              }
              case ModelKind::kForest: {
                auto params = config.rf;
                params.seed = s;
                const auto forest = ensemble::fit_random_forest(x_train, y_train, params);
                out = score_rows(x_val, [&](std::span<const double> x) {
                  const auto r = ensemble::predict_forest(forest, x);
                  return std::pair{r.score, r.label};
                });
                kind_tag = "forest.v1";
                if (keep_models) saved = forest.to_json();
                break;
              }
              case ModelKind::kGbm: {
                auto params = config.gbm;
                params.seed = s;
                const auto model = ensemble::fit_gbm(x_train, y_train, params);
                out = score_rows(x_val, [&](std::span<const double> x) {
                  const auto r = ensemble::predict_gbm(model, x);
                  return std::pair{r.score, r.label};
                });
                kind_tag = "gbm.v1";
                if (keep_models) saved = model.to_json();
                break;
              }
              case ModelKind::kLasso: {
                const auto grid = linear::default_grid(linear::alpha_max(x_train, y_train), config.lasso_grid_size,
                                                       config.lasso_grid_ratio);
                const auto tuned = linear::tune_penalty(x_train, y_train, x_val, y_val, grid, config.lasso);
                for (const auto& w : tuned.model.warnings) result.warnings.push_back(cell + w);
                LassoSupport support{fz::feature_set_name(fs), horizon, seed, tuned.best_alpha, {}};
                for (std::size_t j = 0; j < tuned.model.weights.size(); ++j) {
                  if (tuned.model.weights[j] != 0.0) support.features.push_back(filtered.retained[j]);
                }
                result.lasso_supports.push_back(std::move(support));
                out = score_rows(x_val, [&](std::span<const double> x) {
                  const auto r = linear::predict_logistic(tuned.model, x);
                  return std::pair{r.probability, r.label};
                });
                kind_tag = "lasso.v1";
                if (keep_models) saved = tuned.model.to_json();
                break;
              }
              case ModelKind::kClinician: {
                for (std::size_t r : val_rows) {
                  const double rating = filtered.matrix.anchor_overall[r];
                  out.scores.push_back(rating);
                  out.labels.push_back(rating >= config.clinician_threshold ? 1 : -1);
                }
                break;
              }
              case ModelKind::kDnnd:
                break;
            }
            add_row(result, name, fs, horizon, seed, y_val, std::move(out));
            if (keep_models && !kind_tag.empty()) fs_entry["models"].push_back(model_entry(kind_tag, horizon, std::move(saved)));
            return 0;
          });
        }
        note(cell_name(name, fs, 0) + "done");
      }
      if (keep_models) archive["feature_sets"].push_back(std::move(fs_entry));
    }
  }
  result.archive = std::move(archive);
  return result;
}

std::string format_metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out(kMetricsHeader);
  out += '\n';
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%llu\n", r.model.c_str(),
                  r.feature_set.c_str(), r.horizon_days, r.n, r.positives, r.recall, r.precision, r.f_measure, r.auc,
                  r.auc_ci_lo, r.auc_ci_hi, static_cast<unsigned long long>(r.seed));
    out += buf;
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void write_outputs(const ExperimentResult& result, const std::filesystem::path& out_dir, bool write_roc) {
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "metrics.csv", format_metrics_csv(result.rows));
  write_text_file(out_dir / "models.json", result.archive.dump());
  std::string support = "seed,feature_set,horizon_days,alpha,feature\n";
  for (const auto& s : result.lasso_supports) {
    for (const auto& f : s.features) {
      support += std::to_string(s.seed) + "," + s.feature_set + "," + std::to_string(s.horizon_days) + "," +
                 format_double(s.alpha) + "," + f + "\n";
    }
  }
  write_text_file(out_dir / "lasso_support.csv", support);
  if (!write_roc) return;
  for (const auto& cell : result.cells) {
    std::string text = "threshold,fpr,tpr\n";
    for (const auto& p : roc_curve(cell.labels, cell.scores)) {
      text += format_double(p.threshold) + "," + format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
    }
    const std::string name = cell.model + "_" + cell.feature_set + "_h" + std::to_string(cell.horizon_days) + "_s" +
                             std::to_string(cell.seed) + ".csv";
    write_text_file(out_dir / "roc" / name, text);
  }
}

std::string score_cohort(const json& archive, const cohort::CohortDataset& dataset) {
  try {
    if (archive.at("magic").get<std::string>() != kArchiveMagic) throw DataError("not a model archive");
    if (archive.at("version").get<int>() > kArchiveVersion) throw DataError("model archive version is newer than supported");

    fz::FeatureOptions options;
    options.scheme = fz::IntervalScheme(archive.at("interval_months").get<std::vector<int>>());
    options.tables.elixhauser = table_from_json("elixhauser", archive.at("mapping_tables").at("elixhauser"));
    options.tables.mhdg = table_from_json("mhdg", archive.at("mapping_tables").at("mhdg"));
    const auto horizons = archive.at("horizons").get<std::vector<int>>();

    std::string out = "patient_id,assessment_index,day,model,feature_set,horizon_days,score,label\n";
    auto emit = [&](const fz::AnchorKey& a, std::string_view model, const std::string& fs, int horizon, double score,
                    int label) {
      out += a.patient_id + "," + std::to_string(a.assessment_index) + "," + std::to_string(a.day) + "," +
             std::string(model) + "," + fs + "," + std::to_string(horizon) + "," + format_double(score) + "," +
             std::to_string(label) + "\n";
    };

    for (const auto& entry : archive.at("feature_sets")) {
      const auto fs_name = entry.at("name").get<std::string>();
      const auto fs = fz::parse_feature_set(fs_name);
      const auto retained = entry.at("retained").get<std::vector<std::string>>();
      const auto matrix = fz::align_columns(fz::build_feature_matrix(dataset, fs, options), retained);
      const Matrix& x = matrix.values;
      for (const auto& m : entry.at("models")) {
        const auto kind = m.at("kind").get<std::string>();
        const int horizon = m.at("horizon_days").get<int>();
        const auto& body = m.at("model");
        if (kind == "dnnd.v1") {
          const auto net = nn::TrainedNet::from_json(body);
          InputTransform transform;
          transform.mean = m.at("input_mean").get<std::vector<double>>();
          transform.scale = m.at("input_scale").get<std::vector<double>>();
          if (transform.mean.size() != x.cols() || transform.scale.size() != x.cols() ||
              net.net.arch.n_tasks != horizons.size()) {
            throw DataError("dnnd entry does not match the archive");
          }
          std::vector<double> row(x.cols());
          for (std::size_t i = 0; i < x.rows(); ++i) {
            transform.apply_row(x.row(i), row);
            const auto preds = nn::predict_dnnd(net, row);
            for (std::size_t h = 0; h < horizons.size(); ++h) {
              emit(matrix.anchors[i], "dnnd", fs_name, horizons[h], preds[h].score, preds[h].label);
            }
          }
        } else if (kind == "cart.v1") {
          const auto tree = trees::Tree::from_json(body);
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const double p = tree.predict(x.row(i));
            emit(matrix.anchors[i], "cart", fs_name, horizon, p, p >= 0.5 ? 1 : -1);
          }
        } else if (kind == "forest.v1") {
          const auto forest = ensemble::Forest::from_json(body);
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const auto r = ensemble::predict_forest(forest, x.row(i));
            emit(matrix.anchors[i], "rf", fs_name, horizon, r.score, r.label);
          }
        } else if (kind == "gbm.v1") {
          const auto model = ensemble::GbmModel::from_json(body);
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const auto r = ensemble::predict_gbm(model, x.row(i));
            emit(matrix.anchors[i], "gbm", fs_name, horizon, r.score, r.label);
          }
        } else if (kind == "lasso.v1") {
          const auto model = linear::LassoModel::from_json(body);
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const auto r = linear::predict_logistic(model, x.row(i));
            emit(matrix.anchors[i], "lasso", fs_name, horizon, r.probability, r.label);
          }
        } else {
          throw DataError("unknown model entry '" + kind + "'");
        }
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model archive: ") + e.what());
  }
}

}  // namespace redrisk::eval
