#pragma once

namespace priorart {

/// Selects between the serial reference path and the OpenMP path of a kernel.
/// Both produce bit-identical results; tests compare them and benchmarks time
/// them against each other.
enum class Execution {
    serial,
    parallel,
};

}  // namespace priorart
