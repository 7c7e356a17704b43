#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "redrisk/cohort.hpp"
#include "redrisk/matrix.hpp"
#include "redrisk/random.hpp"

namespace testsupport {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("redrisk_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline redrisk::cohort::Demographics default_demographics() {
  redrisk::cohort::Demographics d;
  const auto& schema = redrisk::cohort::demographic_schema();
  auto fields = d.fields();
  for (std::size_t f = 0; f < schema.size(); ++f) *fields[f] = std::string(schema[f].categories.front());
  return d;
}

inline redrisk::cohort::AssessmentEvent assessment(redrisk::cohort::Day day, int item_value, int overall) {
  redrisk::cohort::AssessmentEvent a;
  a.day = day;
  a.items.fill(item_value);
  a.overall = overall;
  return a;
}

inline redrisk::cohort::PatientRecord patient(std::string id) {
  redrisk::cohort::PatientRecord p;
  p.patient_id = std::move(id);
  p.demographics = default_demographics();
  return p;
}

// n x p standard normal design.
inline redrisk::Matrix normal_matrix(std::size_t n, std::size_t p, redrisk::Rng& rng) {
  redrisk::Matrix x(n, p);
  for (auto& v : x.data()) v = rng.normal();
  return x;
}

}  // namespace testsupport
