#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "redrisk/config.hpp"
#include "redrisk/error.hpp"
#include "redrisk/experiment.hpp"

namespace {

using namespace redrisk;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

cohort::Format format_for(const std::string& flag, const std::filesystem::path& path) {
  return flag.empty() ? cohort::infer_format(path) : cohort::parse_format(flag);
}

struct GenArgs {
  std::string config;
  std::string out;
  std::string format;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_patients;
};

struct ValidateArgs {
  std::string config;
  std::string data;
  std::string format;
};

struct RunArgs {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string models;
  std::string feature_sets;
};

struct ScoreArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string format;
};

int do_gen(const GenArgs& a) {
  auto config = a.config.empty() ? eval::ExperimentConfig{} : config::load_config(a.config);
  if (a.seed) config.cohort_seed = *a.seed;
  if (a.n_patients) config.synthetic.n_patients = *a.n_patients;
  cohort::validate_config(config.synthetic);
  const auto dataset = cohort::generate_synthetic_cohort(config.synthetic, config.cohort_seed);
  cohort::save_cohort(dataset, a.out, format_for(a.format, a.out));
  spdlog::info("wrote {} patients ({} assessments) to {}", dataset.patients.size(), dataset.assessment_count(), a.out);
  return 0;
}

int do_validate(const ValidateArgs& a) {
  if (a.config.empty() && a.data.empty()) throw ConfigError("validate needs --config and/or --data");
  if (!a.config.empty()) {
    config::load_config(a.config);
    spdlog::info("config {} is valid", a.config);
  }
  if (!a.data.empty()) {
    const auto dataset = cohort::load_cohort(a.data, format_for(a.format, a.data));
    const auto report = cohort::validate(dataset);
    for (const auto& code : report.flagged_codes) spdlog::warn("malformed ICD-10 code {}", code);
    spdlog::info("cohort {} is valid: {} patients, {} assessments, {} diagnoses", a.data, report.patients,
                 report.assessments, report.diagnoses);
  }
  return 0;
}

int do_run(const RunArgs& a) {
  const std::string bytes = read_bytes(a.config);
  auto config = config::parse_config(bytes);
  if (a.seed) config.seeds = {*a.seed};
  if (!a.models.empty()) {
    config.models.clear();
    for (const auto& m : split_csv(a.models)) config.models.push_back(eval::parse_model(m));
  }
  if (!a.feature_sets.empty()) {
    config.feature_sets.clear();
    for (const auto& f : split_csv(a.feature_sets)) config.feature_sets.push_back(featurize::parse_feature_set(f));
  }
  eval::validate(config);

  const std::filesystem::path out_dir(a.out_dir);
  std::filesystem::create_directories(out_dir);
  config::RunManifest manifest;
  manifest.config_path = a.config;
  manifest.config_sha256 = config::sha256_hex(bytes);
  manifest.seeds = config.seeds;
  manifest.started_at = config::utc_timestamp();
  manifest.status = "running";
  const auto manifest_path = out_dir / "manifest.json";
  eval::write_text_file(manifest_path, manifest.to_json().dump(2) + "\n");

  try {
    const auto result = eval::run_experiment(config, [](const std::string& msg) { spdlog::info("{}", msg); });
    for (const auto& w : result.warnings) spdlog::warn("{}", w);
    eval::write_outputs(result, out_dir, config.write_roc);
    manifest.outputs = {"metrics.csv", "models.json", "lasso_support.csv"};
    if (config.write_roc) manifest.outputs.push_back("roc/");
    manifest.warnings = result.warnings;
    manifest.status = "complete";
  } catch (...) {
    manifest.status = "failed";
    manifest.finished_at = config::utc_timestamp();
    eval::write_text_file(manifest_path, manifest.to_json().dump(2) + "\n");
    throw;
  }

  if (config::sha256_hex(read_bytes(a.config)) != manifest.config_sha256) {
    manifest.status = "config_changed";
    manifest.finished_at = config::utc_timestamp();
    eval::write_text_file(manifest_path, manifest.to_json().dump(2) + "\n");
    throw ConfigError("config file changed while the run was in progress");
  }
  manifest.finished_at = config::utc_timestamp();
  eval::write_text_file(manifest_path, manifest.to_json().dump(2) + "\n");
  spdlog::info("wrote results to {}", a.out_dir);
  return 0;
}

int do_score(const ScoreArgs& a) {
  nlohmann::json archive;
  try {
    archive = nlohmann::json::parse(read_bytes(a.model));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse model archive " + a.model + ": " + e.what());
  }
  const auto dataset = cohort::load_cohort(a.data, format_for(a.format, a.data));
  eval::write_text_file(a.out, eval::score_cohort(archive, dataset));
  spdlog::info("wrote scores to {}", a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-horizon risk prediction from assessment-anchored patient timelines", "redrisk"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->envname("REDRISK_LOG_LEVEL")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic cohort");
  gen_cmd->add_option("--config", gen.config, "Config file (cohort section is used)");
  gen_cmd->add_option("--out", gen.out, "Output cohort file")->required();
  gen_cmd->add_option("--format", gen.format, "event-lines or cohort-archive (default: from extension)");
  gen_cmd->add_option("--seed", gen.seed, "Cohort seed");
  gen_cmd->add_option("--n-patients", gen.n_patients, "Number of patients");

  ValidateArgs val;
  auto* val_cmd = app.add_subcommand("validate", "Check a config file and/or a cohort file");
  val_cmd->add_option("--config", val.config, "Config file");
  val_cmd->add_option("--data", val.data, "Cohort file");
  val_cmd->add_option("--format", val.format, "event-lines or cohort-archive (default: from extension)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment protocol");
  run_cmd->add_option("--config", run.config, "Config file")->required();
  run_cmd->add_option("--out-dir", run.out_dir, "Output directory")->required();
  run_cmd->add_option("--seed", run.seed, "Run a single split seed instead of experiment.seeds");
  run_cmd->add_option("--models", run.models, "Comma-separated subset of cart,lasso,rf,gbm,dnnd,clinician");
  run_cmd->add_option("--feature-sets", run.feature_sets, "Comma-separated subset of fs1,fs2,fs3");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score a cohort with a saved model archive");
  score_cmd->add_option("--model", score.model, "models.json from a run")->required();
  score_cmd->add_option("--data", score.data, "Cohort file")->required();
  score_cmd->add_option("--out", score.out, "Output CSV")->required();
  score_cmd->add_option("--format", score.format, "event-lines or cohort-archive (default: from extension)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  auto logger = spdlog::stderr_color_mt("redrisk");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen_cmd) return do_gen(gen);
    if (*val_cmd) return do_validate(val);
    if (*run_cmd) return do_run(run);
    if (*score_cmd) return do_score(score);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return 0;
}
