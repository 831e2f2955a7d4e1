#pragma once

#include <string>

#include "drmpc/experiments.hpp"

namespace drmpc {

/// Parses a JSON experiment configuration (fields mirror ExperimentConfig).
ExperimentConfig load_config(const std::string& path);

/// Parses "name=v1,v2,..." into a sweep specification.
SweepSpec parse_sweep(const std::string& text);

/// Entry point behind the drmpc binary. Exit codes: 0 success, 2 bad
/// configuration or arguments, 3 solver/validation failure.
int cli_main(int argc, char** argv);

}  // namespace drmpc
