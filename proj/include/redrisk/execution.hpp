#pragma once

namespace redrisk {

// Selects between the OpenMP kernels and the serial reference path. Both
// produce identical results; the serial path is kept for tests and benchmarks.
enum class Execution { kSerial, kParallel };

}  // namespace redrisk
