#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <set>
#include <sstream>

#include "redrisk/config.hpp"
#include "redrisk/error.hpp"
#include "support.hpp"

using namespace redrisk;
using namespace redrisk::config;

namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, std::string_view part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("empty config yields the published model settings") {
  for (std::string_view text : {"", "\n\n", "# comment only\n; another\n", "[rf]\n"}) {
    const auto c = parse_config(text);
    CHECK(c.rf.n_trees == 25);
    CHECK(c.rf.features_per_split == 0);
    CHECK(c.rf.min_leaf_fraction == 1.0 / 64);
    CHECK(c.cart.min_leaf_fraction == 1.0 / 64);
    CHECK(c.gbm.n_learners == 200);
    CHECK(c.gbm.rho == 0.5);
    CHECK(c.gbm.lr_cap == 0.1);
    CHECK(c.gbm.min_leaf_fraction == 1.0 / 64);
    CHECK(c.dnnd_hidden == std::vector<std::size_t>{50, 50});
    CHECK(c.dnnd.minibatch == 64);
    CHECK(c.dnnd.lr_start == 0.1);
    CHECK(c.dnnd.lr_stop == 1e-4);
    CHECK(c.dnnd.momentum == 0.9);
    CHECK(c.dnnd.retain_rate == 0.5);
    CHECK(c.dnnd.max_norm == 1.0);
    CHECK(c.horizons == std::vector<int>{15, 30, 60, 90, 180, 360});
    CHECK(c.feature_sets.size() == 3);
    CHECK(c.models.size() == 5);
    CHECK(c.synthetic.n_patients == 7399);
    CHECK(c.lasso_grid_size == 20);
    CHECK(c.lasso.max_sweeps == 1000);
  }
}

TEST_CASE("sections and dotted keys address the same settings") {
  const auto a = parse_config("[gbm]\nrho = 0.3\n[rf]\nn_trees = 7  # inline comment\n");
  const auto b = parse_config("gbm.rho=0.3\nrf.n_trees = 7\n");
  CHECK(a.gbm.rho == 0.3);
  CHECK(b.gbm.rho == 0.3);
  CHECK(a.rf.n_trees == 7);
  CHECK(b.rf.n_trees == 7);
  const auto c = parse_config("[experiment]\nhorizons = 30, 90\nmodels = rf,lasso\nfeature_sets = fs2\n");
  CHECK(c.horizons == std::vector<int>{30, 90});
  CHECK(c.models.size() == 2);
  CHECK(c.feature_sets == std::vector<featurize::FeatureSet>{featurize::FeatureSet::kFs2});
}

TEST_CASE("out-of-range rho names the bound") {
  const auto msg = error_of("gbm.rho = 1.5\n");
  CHECK(contains(msg, "gbm.rho"));
  CHECK(contains(msg, "(0,1)"));
  CHECK(contains(msg, "line 1"));
  CHECK(contains(error_of("gbm.rho = 0\n"), "(0,1)"));
}

TEST_CASE("duplicate keys name the line") {
  const auto msg = error_of("gbm.rho = 0.4\ngbm.rho = 0.6\n");
  CHECK(contains(msg, "line 2"));
  CHECK(contains(msg, "gbm.rho"));
  CHECK(contains(error_of("gbm.rho = 0.4\n[gbm]\nrho = 0.6\n"), "line 3"));
}

TEST_CASE("unknown keys, malformed lines and type mismatches are rejected") {
  CHECK(contains(error_of("rf.trees = 3\n"), "rf.trees"));
  CHECK(contains(error_of("\n\njust words\n"), "line 3"));
  const auto msg = error_of("rf.n_trees = many\n");
  CHECK(contains(msg, "rf.n_trees"));
  CHECK(contains(msg, "integer"));
  CHECK_FALSE(error_of("experiment.models = rf,svm\n").empty());
  CHECK_FALSE(error_of("experiment.horizons = 30,-1\n").empty());
  CHECK_FALSE(error_of("dnnd.dropout_rate = 1\n").empty());
  CHECK_FALSE(error_of("experiment.train_fraction = 1\n").empty());
  CHECK_FALSE(error_of("[unclosed\n").empty());
}

TEST_CASE("documented keys are unique and their defaults parse") {
  const auto keys = known_keys();
  std::set<std::string> seen;
  for (const auto& k : keys) {
    CHECK(seen.insert(k.key).second);
    CHECK_FALSE(k.expected.empty());
    if (k.key.find('<') != std::string::npos || k.default_value.find(' ') != std::string::npos ||
        k.default_value.find('(') != std::string::npos || contains(k.expected, "path"))
      continue;
    INFO(k.key);
    CHECK(error_of(k.key + " = " + k.default_value + "\n").empty());
  }
  CHECK(seen.count("gbm.rho") == 1);
  CHECK(seen.count("rf.n_trees") == 1);
}

TEST_CASE("prevalence keys accept horizons by name") {
  const auto c = parse_config("cohort.prevalence_30 = 0.09\n");
  CHECK(c.synthetic.prevalence_by_horizon.at(30) == 0.09);
  CHECK_FALSE(error_of("cohort.prevalence_30 = 1.2\n").empty());
}

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest json round trip") {
  RunManifest m;
  m.config_path = "run.ini";
  m.config_sha256 = sha256_hex("x");
  m.seeds = {1, 2, 3};
  m.started_at = utc_timestamp();
  m.finished_at = m.started_at;
  m.status = "complete";
  m.outputs = {"metrics.csv", "models.json"};
  m.warnings = {"lasso stopped early"};
  const auto j = m.to_json();
  CHECK(j.contains("module_versions"));
  const auto back = RunManifest::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.seeds == m.seeds);
  CHECK(m.started_at.size() == 20);
  CHECK(m.started_at.back() == 'Z');
}

TEST_CASE("load_config reads a file and reports missing ones") {
  const auto dir = testsupport::temp_dir("config");
  std::ofstream(dir / "a.ini") << "[rf]\nn_trees = 9\n";
  CHECK(load_config(dir / "a.ini").rf.n_trees == 9);
  CHECK_THROWS(load_config(dir / "missing.ini"));
}

TEST_CASE("the configuration reference lists every key") {
  std::ifstream in(std::string(REDRISK_DOCS_DIR) + "/config.md");
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto doc = ss.str();
  for (const auto& k : known_keys()) {
    const auto dot = k.key.find('.');
    INFO(k.key);
    CHECK(contains(doc, "### [" + k.key.substr(0, dot) + "]"));
    CHECK(contains(doc, "| `" + k.key.substr(dot + 1) + "` | " + k.expected + " | " + k.default_value + " |"));
  }
}
