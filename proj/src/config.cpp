#include "redrisk/config.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "redrisk/error.hpp"

namespace redrisk::config {

using nlohmann::json;

namespace {

// Value-level problem; the caller adds key and line.
struct BadValue {
  std::string message;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    const auto item = trim(value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (item.empty()) throw BadValue{"empty list element"};
    out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t parse_uint(std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw BadValue{"expected a non-negative integer, got '" + std::string(v) + "'"};
  return out;
}

int parse_int(std::string_view v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw BadValue{"expected an integer, got '" + std::string(v) + "'"};
  return out;
}

double parse_real(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw BadValue{"expected a real number, got '" + std::string(v) + "'"};
  }
  return out;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw BadValue{"expected true or false, got '" + std::string(v) + "'"};
}

// Range helpers; `form` is what the error message reports.
double real_in(std::string_view v, double lo, double hi, bool lo_open, bool hi_open, const std::string& form) {
  const double x = parse_real(v);
  const bool ok = (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
  if (!ok) throw BadValue{std::string(v) + " is outside " + form};
  return x;
}

std::uint64_t uint_at_least(std::string_view v, std::uint64_t lo) {
  const auto x = parse_uint(v);
  if (x < lo) throw BadValue{std::string(v) + " is below the minimum " + std::to_string(lo)};
  return x;
}

using Apply = std::function<void(eval::ExperimentConfig&, std::string_view)>;

struct Entry {
  KeyInfo info;
  Apply apply;
};

const std::vector<Entry>& registry() {
  using C = eval::ExperimentConfig;
  static const std::vector<Entry> entries = {
      {{"cohort.source", "synthetic or file", "synthetic"},
       [](C& c, std::string_view v) {
         if (v == "synthetic") {
           c.source = eval::CohortSource::kSynthetic;
         } else if (v == "file") {
           c.source = eval::CohortSource::kFile;
         } else {
           throw BadValue{"expected synthetic or file, got '" + std::string(v) + "'"};
         }
       }},
      {{"cohort.path", "path to a cohort file", "(none)"}, [](C& c, std::string_view v) { c.cohort_path = std::string(v); }},
      {{"cohort.format", "event-lines or cohort-archive", "from the file extension"},
       [](C& c, std::string_view v) {
         try {
           c.cohort_format = cohort::parse_format(v);
         } catch (const ConfigError& e) {
           throw BadValue{e.what()};
         }
       }},
      {{"cohort.n_patients", "integer >= 2", "7399"},
       [](C& c, std::string_view v) { c.synthetic.n_patients = uint_at_least(v, 2); }},
      {{"cohort.prevalence_<days>", "real in (0,1), non-decreasing in days", "15:0.040 30:0.071 60:0.103 90:0.131 180:0.186 360:0.240"},
       nullptr},
      {{"cohort.signal_strength", "real in [0,1]", "0.8"},
       [](C& c, std::string_view v) { c.synthetic.signal_strength = real_in(v, 0, 1, false, false, "[0,1]"); }},
      {{"cohort.redundancy_factor", "integer in [0," + std::to_string(cohort::kMaxRedundancy) + "]", "0"},
       [](C& c, std::string_view v) {
         const auto x = parse_uint(v);
         if (x > cohort::kMaxRedundancy) throw BadValue{std::string(v) + " is above the maximum " + std::to_string(cohort::kMaxRedundancy)};
         c.synthetic.redundancy_factor = x;
       }},
      {{"cohort.seed", "non-negative integer", "1"}, [](C& c, std::string_view v) { c.cohort_seed = parse_uint(v); }},

      {{"featurize.interval_months", "increasing month boundaries starting at 0", "0,3,6,12,24,48"},
       [](C& c, std::string_view v) {
         std::vector<int> months;
         for (const auto& item : split_list(v)) months.push_back(parse_int(item));
         try {
           featurize::IntervalScheme check(months);
         } catch (const ConfigError& e) {
           throw BadValue{e.what()};
         }
         c.interval_months = months;
       }},
      {{"featurize.rare_threshold", "real in [0,1]", "0.01"},
       [](C& c, std::string_view v) { c.rare_threshold = real_in(v, 0, 1, false, false, "[0,1]"); }},
      {{"featurize.elixhauser_table", "path to a PREFIX<TAB>GROUP file", "bundled stub"},
       [](C& c, std::string_view v) { c.elixhauser_path = std::string(v); }},
      {{"featurize.mhdg_table", "path to a PREFIX<TAB>GROUP file", "bundled stub"},
       [](C& c, std::string_view v) { c.mhdg_path = std::string(v); }},
      {{"featurize.risky_codes", "path to a prefix-per-line file", "bundled stub"},
       [](C& c, std::string_view v) { c.risky_codes_path = std::string(v); }},

      {{"experiment.feature_sets", "list of fs1, fs2, fs3", "fs1,fs2,fs3"},
       [](C& c, std::string_view v) {
         c.feature_sets.clear();
         for (const auto& item : split_list(v)) {
           try {
             c.feature_sets.push_back(featurize::parse_feature_set(item));
           } catch (const ConfigError& e) {
             throw BadValue{e.what()};
           }
         }
       }},
      {{"experiment.horizons", "list of positive day counts", "15,30,60,90,180,360"},
       [](C& c, std::string_view v) {
         c.horizons.clear();
         for (const auto& item : split_list(v)) {
           const int h = parse_int(item);
           if (h <= 0) throw BadValue{"horizons must be positive"};
           c.horizons.push_back(h);
         }
       }},
      {{"experiment.models", "list of cart, lasso, rf, gbm, dnnd, clinician", "cart,lasso,rf,gbm,dnnd"},
       [](C& c, std::string_view v) {
         c.models.clear();
         for (const auto& item : split_list(v)) {
           try {
             c.models.push_back(eval::parse_model(item));
           } catch (const ConfigError& e) {
             throw BadValue{e.what()};
           }
         }
       }},
      {{"experiment.seeds", "list of non-negative integers", "1"},
       [](C& c, std::string_view v) {
         c.seeds.clear();
         for (const auto& item : split_list(v)) c.seeds.push_back(parse_uint(item));
       }},
      {{"experiment.train_fraction", "real in (0,1)", "0.5"},
       [](C& c, std::string_view v) { c.train_fraction = real_in(v, 0, 1, true, true, "(0,1)"); }},
      {{"experiment.write_roc", "true or false", "true"}, [](C& c, std::string_view v) { c.write_roc = parse_bool(v); }},
      {{"experiment.clinician_threshold", "real", "2"},
       [](C& c, std::string_view v) { c.clinician_threshold = parse_real(v); }},

      {{"cart.min_leaf_fraction", "real in (0,0.5]", "0.015625"},
       [](C& c, std::string_view v) { c.cart.min_leaf_fraction = real_in(v, 0, 0.5, true, false, "(0,0.5]"); }},
      {{"cart.min_leaf_rows", "integer >= 1", "1"}, [](C& c, std::string_view v) { c.cart.min_leaf_rows = uint_at_least(v, 1); }},
      {{"cart.features_per_split", "integer, 0 for all", "0"},
       [](C& c, std::string_view v) { c.cart.features_per_split = parse_uint(v); }},

      {{"rf.n_trees", "integer >= 1", "25"}, [](C& c, std::string_view v) { c.rf.n_trees = uint_at_least(v, 1); }},
      {{"rf.features_per_split", "integer, 0 for floor(sqrt(p))", "0"},
       [](C& c, std::string_view v) { c.rf.features_per_split = parse_uint(v); }},
      {{"rf.min_leaf_fraction", "real in (0,0.5]", "0.015625"},
       [](C& c, std::string_view v) { c.rf.min_leaf_fraction = real_in(v, 0, 0.5, true, false, "(0,0.5]"); }},
      {{"rf.min_leaf_rows", "integer >= 1", "2"}, [](C& c, std::string_view v) { c.rf.min_leaf_rows = uint_at_least(v, 1); }},
      {{"rf.bootstrap", "true or false", "true"}, [](C& c, std::string_view v) { c.rf.bootstrap = parse_bool(v); }},

      {{"gbm.n_learners", "integer >= 1", "200"}, [](C& c, std::string_view v) { c.gbm.n_learners = uint_at_least(v, 1); }},
      {{"gbm.rho", "real in (0,1)", "0.5"}, [](C& c, std::string_view v) { c.gbm.rho = real_in(v, 0, 1, true, true, "(0,1)"); }},
      {{"gbm.learner_features", "integer, 0 for min(floor(p/3), floor(sqrt(n)))", "0"},
       [](C& c, std::string_view v) { c.gbm.learner_features = parse_uint(v); }},
      {{"gbm.split_features", "integer, 0 for floor(m/3)", "0"},
       [](C& c, std::string_view v) { c.gbm.split_features = parse_uint(v); }},
      {{"gbm.lr_start", "real in (0,lr_cap)", "0.001"},
       [](C& c, std::string_view v) { c.gbm.lr_start = real_in(v, 0, 1e300, true, false, "(0,inf)"); }},
      {{"gbm.lr_cap", "real > lr_start", "0.1"},
       [](C& c, std::string_view v) { c.gbm.lr_cap = real_in(v, 0, 1e300, true, false, "(0,inf)"); }},
      {{"gbm.min_leaf_fraction", "real in (0,0.5]", "0.015625"},
       [](C& c, std::string_view v) { c.gbm.min_leaf_fraction = real_in(v, 0, 0.5, true, false, "(0,0.5]"); }},
      {{"gbm.min_leaf_rows", "integer >= 1", "2"}, [](C& c, std::string_view v) { c.gbm.min_leaf_rows = uint_at_least(v, 1); }},

      {{"dnnd.hidden", "list of layer widths >= 1", "50,50"},
       [](C& c, std::string_view v) {
         c.dnnd_hidden.clear();
         for (const auto& item : split_list(v)) c.dnnd_hidden.push_back(uint_at_least(item, 1));
       }},
      {{"dnnd.minibatch", "integer >= 1", "64"}, [](C& c, std::string_view v) { c.dnnd.minibatch = uint_at_least(v, 1); }},
      {{"dnnd.lr_start", "real > 0", "0.1"},
       [](C& c, std::string_view v) { c.dnnd.lr_start = real_in(v, 0, 1e300, true, false, "(0,inf)"); }},
      {{"dnnd.lr_stop", "real > 0", "0.0001"},
       [](C& c, std::string_view v) { c.dnnd.lr_stop = real_in(v, 0, 1e300, true, false, "(0,inf)"); }},
      {{"dnnd.momentum", "real in [0,1)", "0.9"},
       [](C& c, std::string_view v) { c.dnnd.momentum = real_in(v, 0, 1, false, true, "[0,1)"); }},
      {{"dnnd.weight_decay", "real >= 0", "0.0001"},
       [](C& c, std::string_view v) { c.dnnd.weight_decay = real_in(v, 0, 1e300, false, false, "[0,inf)"); }},
      {{"dnnd.max_norm", "real > 0", "1"},
       [](C& c, std::string_view v) { c.dnnd.max_norm = real_in(v, 0, 1e300, true, false, "(0,inf)"); }},
      {{"dnnd.dropout_rate", "retain probability, real in (0,1)", "0.5"},
       [](C& c, std::string_view v) { c.dnnd.retain_rate = real_in(v, 0, 1, true, true, "(0,1)"); }},
      {{"dnnd.plateau_patience", "integer >= 1", "2"},
       [](C& c, std::string_view v) { c.dnnd.plateau_patience = uint_at_least(v, 1); }},
      {{"dnnd.plateau_tolerance", "real >= 0", "0.0001"},
       [](C& c, std::string_view v) { c.dnnd.plateau_tolerance = real_in(v, 0, 1, false, true, "[0,1)"); }},
      {{"dnnd.max_epochs", "integer >= 1", "200"}, [](C& c, std::string_view v) { c.dnnd.max_epochs = uint_at_least(v, 1); }},

      {{"lasso.grid_size", "integer >= 1", "20"}, [](C& c, std::string_view v) { c.lasso_grid_size = uint_at_least(v, 1); }},
      {{"lasso.grid_ratio", "real >= 1", "1000"},
       [](C& c, std::string_view v) { c.lasso_grid_ratio = real_in(v, 1, 1e300, false, false, "[1,inf)"); }},
      {{"lasso.tolerance", "real > 0", "1e-06"},
       [](C& c, std::string_view v) { c.lasso.tolerance = real_in(v, 0, 1, true, false, "(0,1]"); }},
      {{"lasso.max_sweeps", "integer >= 1", "1000"}, [](C& c, std::string_view v) { c.lasso.max_sweeps = uint_at_least(v, 1); }},
  };
  return entries;
}

constexpr std::string_view kPrevalencePrefix = "cohort.prevalence_";

}  // namespace

std::vector<KeyInfo> known_keys() {
  std::vector<KeyInfo> out;
  for (const auto& e : registry()) out.push_back(e.info);
  return out;
}

eval::ExperimentConfig parse_config(std::string_view text) {
  eval::ExperimentConfig config;
  std::map<std::string, std::size_t> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;

    const auto comment = line.find_first_of("#;");
    if (comment != std::string_view::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto bare = std::string(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    if (bare.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key");
    const std::string key = section.empty() ? bare : section + "." + bare;
    const std::string where = "line " + std::to_string(line_no) + ": " + key;

    if (auto [it, inserted] = seen.emplace(key, line_no); !inserted) {
      throw ConfigError(where + " duplicates the key set on line " + std::to_string(it->second));
    }
    if (value.empty()) throw ConfigError(where + ": missing value");

    try {
      if (key.rfind(kPrevalencePrefix, 0) == 0) {
        const int horizon = parse_int(std::string_view(key).substr(kPrevalencePrefix.size()));
        if (horizon <= 0) throw BadValue{"horizon in the key must be positive"};
        config.synthetic.prevalence_by_horizon[horizon] = real_in(value, 0, 1, true, true, "(0,1)");
        continue;
      }
      const auto& entries = registry();
      const auto entry = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.info.key == key; });
      if (entry == entries.end() || !entry->apply) throw ConfigError(where + ": unknown key");
      entry->apply(config, value);
    } catch (const BadValue& bad) {
      const auto& entries = registry();
      const auto entry = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.info.key == key; });
      const std::string expected = entry != entries.end() ? " (expected " + entry->info.expected + ")" : "";
      throw ConfigError(where + ": " + bad.message + expected);
    }
  }
  try {
    eval::validate(config);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return config;
}

eval::ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json module_versions() {
  return {{"cohort", cohort::kSchemaVersion}, {"forest", 1}, {"gbm", 1}, {"dnnd", 1}, {"lasso", 1}, {"cart", 1},
          {"metrics_csv", 1}};
}

json RunManifest::to_json() const {
  return {{"config_path", config_path}, {"config_sha256", config_sha256}, {"seeds", seeds},
          {"module_versions", module_versions()}, {"started_at", started_at}, {"finished_at", finished_at},
          {"status", status}, {"outputs", outputs}, {"warnings", warnings}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.config_path = j.at("config_path").get<std::string>();
  m.config_sha256 = j.at("config_sha256").get<std::string>();
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  m.status = j.at("status").get<std::string>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

}  // namespace redrisk::config
