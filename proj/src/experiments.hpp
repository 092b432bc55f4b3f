#pragma once

#include "steinflow/cli.hpp"

namespace steinflow::cli {

ExperimentResult run_check(const ExperimentSpec& spec);
ExperimentResult run_gmm(const ExperimentSpec& spec);
ExperimentResult run_pfa(const ExperimentSpec& spec);
ExperimentResult run_density_toy(const ExperimentSpec& spec);
ExperimentResult run_semisup_toy(const ExperimentSpec& spec);

}  // namespace steinflow::cli
