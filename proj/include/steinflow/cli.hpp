#pragma once

#include "steinflow/trainer.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace steinflow::cli {

// Invalid configuration input; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class ExperimentTag { Gmm, Pfa, DensityToy, SemisupToy, Check };

std::string tag_name(ExperimentTag tag);
ExperimentTag tag_from_name(const std::string& name);  // throws ConfigError

struct ExperimentSpec {
  ExperimentTag tag = ExperimentTag::Check;
  std::string out_dir = "out";
  trainer::RunConfig config;

  // dataset and evaluation scale
  int train_n = 2000;
  int test_n = 10;
  int recog_hidden = 100;
  int decoder_hidden = 50;
  int elbo_samples = 100;
  int selbo_k = 50;
  int selbo_repeats = 20;
  int unlabeled_n = 500;
  int labeled_per_class = 10;
  int seed_reps = 5;
  int predict_samples = 20;
  std::int64_t check_samples = 1000000;  // directional-derivative sample count
  std::int64_t check_groups = 1000000;   // KL^k Monte Carlo group count
};

// Defaults for the tag, then `key = value` lines from config_path (empty
// string for none), then flag overrides on top. Unknown keys and malformed
// values raise ConfigError naming the key.
ExperimentSpec parse_config(const std::string& tag,
                            const std::string& config_path,
                            const std::map<std::string, std::string>& overrides);

// Full key = value echo of a spec; parse_config on the written file
// reproduces the spec exactly.
std::string render_config(const ExperimentSpec& spec);

std::string format_double(double v);  // %.17g

// Writes config.txt, metrics.csv (epoch,minibatch,metric_name,value,seed),
// samples.csv (datum_id,sample_id,dim,value) and summary.txt under
// spec.out_dir. Returns 0 when every acceptance check in the experiment
// passed, 1 otherwise. Numeric failures propagate as exceptions (the CLI
// maps them to exit code 3).
int run(const ExperimentSpec& spec);

// One experiment-level sample row for samples.csv.
struct SampleRow {
  std::int64_t datum_id = 0;
  std::int64_t sample_id = 0;
  int dim = 0;
  double value = 0.0;
};

struct ExperimentResult {
  std::vector<trainer::MetricRow> metrics;
  std::vector<SampleRow> samples;
  std::vector<std::string> summary;  // "name: PASS/FAIL (detail)" or metrics
  bool all_passed = true;
};

}  // namespace steinflow::cli
