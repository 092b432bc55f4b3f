#include "steinflow/cli.hpp"

#include "experiments.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace steinflow::cli {

std::string tag_name(ExperimentTag tag) {
  switch (tag) {
    case ExperimentTag::Gmm: return "gmm";
    case ExperimentTag::Pfa: return "pfa";
    case ExperimentTag::DensityToy: return "density-toy";
    case ExperimentTag::SemisupToy: return "semisup-toy";
    case ExperimentTag::Check: return "check";
  }
  return "check";
}

ExperimentTag tag_from_name(const std::string& name) {
  if (name == "gmm") return ExperimentTag::Gmm;
  if (name == "pfa") return ExperimentTag::Pfa;
  if (name == "density-toy") return ExperimentTag::DensityToy;
  if (name == "semisup-toy") return ExperimentTag::SemisupToy;
  if (name == "check") return ExperimentTag::Check;
  throw ConfigError("unknown experiment tag '" + name + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void apply_tag_defaults(ExperimentSpec& spec) {
  trainer::RunConfig& c = spec.config;
  switch (spec.tag) {
    case ExperimentTag::Gmm:
      c.epochs = 40;
      c.m_theta = 1;
      c.m_codes = 100;
      c.train_decoder = false;
      c.lr_code = 0.05;
      c.recog_lr = 1e-3;
      spec.train_n = 2000;
      spec.test_n = 10;
      break;
    case ExperimentTag::Pfa:
      c.epochs = 60;
      c.m_theta = 1;
      c.m_codes = 50;
      c.train_decoder = false;
      c.lr_code = 0.05;
      spec.train_n = 400;
      spec.test_n = 8;
      break;
    case ExperimentTag::DensityToy:
      c.epochs = 21;
      c.m_theta = 8;
      c.m_codes = 8;
      c.lr_theta = 2e-3;
      c.lr_code = 0.02;
      c.recog_lr = 2e-3;
      spec.train_n = 1200;
      spec.test_n = 200;
      spec.decoder_hidden = 50;
      spec.recog_hidden = 50;
      spec.elbo_samples = 100;
      break;
    case ExperimentTag::SemisupToy:
      c.epochs = 60;
      c.m_theta = 5;
      c.m_codes = 10;
      c.lr_theta = 0.01;
      c.lr_label = 0.05;
      c.lr_code = 0.05;
      c.recog_lr = 2e-3;
      spec.unlabeled_n = 500;
      spec.labeled_per_class = 10;
      spec.test_n = 200;
      spec.recog_hidden = 50;
      break;
    case ExperimentTag::Check:
      break;
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

void apply_kv(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  trainer::RunConfig& c = spec.config;
  if (key == "experiment") {
    spec.tag = tag_from_name(value);
  } else if (key == "out") {
    spec.out_dir = value;
  } else if (key == "particles") {
    c.m_theta = static_cast<int>(parse_int(key, value));
    if (c.m_theta < 1) throw ConfigError("key 'particles': must be >= 1");
  } else if (key == "codes") {
    c.m_codes = static_cast<int>(parse_int(key, value));
    if (c.m_codes < 1) throw ConfigError("key 'codes': must be >= 1");
  } else if (key == "iw_samples") {
    c.iw_k = static_cast<int>(parse_int(key, value));
    if (c.iw_k < 1) throw ConfigError("key 'iw_samples': must be >= 1");
  } else if (key == "batch") {
    c.batch = static_cast<int>(parse_int(key, value));
    if (c.batch < 1) throw ConfigError("key 'batch': must be >= 1");
  } else if (key == "epochs") {
    c.epochs = static_cast<int>(parse_int(key, value));
    if (c.epochs < 0) throw ConfigError("key 'epochs': must be >= 0");
  } else if (key == "lr") {
    c.lr_theta = parse_real(key, value);
  } else if (key == "lr_label") {
    c.lr_label = parse_real(key, value);
  } else if (key == "lr_code") {
    c.lr_code = parse_real(key, value);
  } else if (key == "recog_lr") {
    c.recog_lr = parse_real(key, value);
  } else if (key == "recog_steps") {
    c.recog_steps = static_cast<int>(parse_int(key, value));
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "shuffle_salt") {
    c.shuffle_salt = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "zeta") {
    c.zeta_override = parse_real(key, value);
  } else if (key == "bandwidth_mode") {
    if (value == "squared")
      c.bandwidth_mode = kernels::BandwidthMode::Squared;
    else if (value == "unsquared")
      c.bandwidth_mode = kernels::BandwidthMode::Unsquared;
    else
      throw ConfigError("key 'bandwidth_mode': expected squared|unsquared, got '" + value + "'");
  } else if (key == "shared_noise") {
    c.shared_noise = parse_bool(key, value);
  } else if (key == "train_decoder") {
    c.train_decoder = parse_bool(key, value);
  } else if (key == "raw_step") {
    c.raw_step = parse_bool(key, value);
  } else if (key == "prior_scale") {
    c.prior_scale = parse_real(key, value);
  } else if (key == "leaky_slope") {
    c.leaky_slope = parse_real(key, value);
  } else if (key == "train_n") {
    spec.train_n = static_cast<int>(parse_int(key, value));
  } else if (key == "test_n") {
    spec.test_n = static_cast<int>(parse_int(key, value));
  } else if (key == "recog_hidden") {
    spec.recog_hidden = static_cast<int>(parse_int(key, value));
  } else if (key == "decoder_hidden") {
    spec.decoder_hidden = static_cast<int>(parse_int(key, value));
  } else if (key == "elbo_samples") {
    spec.elbo_samples = static_cast<int>(parse_int(key, value));
  } else if (key == "selbo_k") {
    spec.selbo_k = static_cast<int>(parse_int(key, value));
  } else if (key == "selbo_repeats") {
    spec.selbo_repeats = static_cast<int>(parse_int(key, value));
  } else if (key == "unlabeled_n") {
    spec.unlabeled_n = static_cast<int>(parse_int(key, value));
  } else if (key == "labeled_per_class") {
    spec.labeled_per_class = static_cast<int>(parse_int(key, value));
  } else if (key == "seed_reps") {
    spec.seed_reps = static_cast<int>(parse_int(key, value));
  } else if (key == "predict_samples") {
    spec.predict_samples = static_cast<int>(parse_int(key, value));
  } else if (key == "check_samples") {
    spec.check_samples = parse_int(key, value);
  } else if (key == "check_groups") {
    spec.check_groups = parse_int(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

ExperimentSpec parse_config(const std::string& tag,
                            const std::string& config_path,
                            const std::map<std::string, std::string>& overrides) {
  ExperimentSpec spec;
  spec.tag = tag_from_name(tag);
  apply_tag_defaults(spec);

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot read config file '" + config_path + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string stripped = trim(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": expected 'key = value', got '" + stripped + "'");
      const std::string key = trim(stripped.substr(0, eq));
      const std::string value = trim(stripped.substr(eq + 1));
      if (key == "experiment" && tag_from_name(value) != spec.tag)
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": experiment '" + value + "' does not match '" + tag + "'");
      apply_kv(spec, key, value);
    }
  }
  for (const auto& [key, value] : overrides) apply_kv(spec, key, value);
  return spec;
}

std::string render_config(const ExperimentSpec& spec) {
  const trainer::RunConfig& c = spec.config;
  std::ostringstream out;
  out << "experiment = " << tag_name(spec.tag) << "\n";
  out << "out = " << spec.out_dir << "\n";
  out << "particles = " << c.m_theta << "\n";
  out << "codes = " << c.m_codes << "\n";
  out << "iw_samples = " << c.iw_k << "\n";
  out << "batch = " << c.batch << "\n";
  out << "epochs = " << c.epochs << "\n";
  out << "lr = " << format_double(c.lr_theta) << "\n";
  out << "lr_label = " << format_double(c.lr_label) << "\n";
  out << "lr_code = " << format_double(c.lr_code) << "\n";
  out << "recog_lr = " << format_double(c.recog_lr) << "\n";
  out << "recog_steps = " << c.recog_steps << "\n";
  out << "seed = " << c.seed << "\n";
  out << "shuffle_salt = " << c.shuffle_salt << "\n";
  out << "zeta = " << format_double(c.zeta_override) << "\n";
  out << "bandwidth_mode = "
      << (c.bandwidth_mode == kernels::BandwidthMode::Squared ? "squared" : "unsquared")
      << "\n";
  out << "shared_noise = " << (c.shared_noise ? "true" : "false") << "\n";
  out << "train_decoder = " << (c.train_decoder ? "true" : "false") << "\n";
  out << "raw_step = " << (c.raw_step ? "true" : "false") << "\n";
  out << "prior_scale = " << format_double(c.prior_scale) << "\n";
  out << "leaky_slope = " << format_double(c.leaky_slope) << "\n";
  out << "train_n = " << spec.train_n << "\n";
  out << "test_n = " << spec.test_n << "\n";
  out << "recog_hidden = " << spec.recog_hidden << "\n";
  out << "decoder_hidden = " << spec.decoder_hidden << "\n";
  out << "elbo_samples = " << spec.elbo_samples << "\n";
  out << "selbo_k = " << spec.selbo_k << "\n";
  out << "selbo_repeats = " << spec.selbo_repeats << "\n";
  out << "unlabeled_n = " << spec.unlabeled_n << "\n";
  out << "labeled_per_class = " << spec.labeled_per_class << "\n";
  out << "seed_reps = " << spec.seed_reps << "\n";
  out << "predict_samples = " << spec.predict_samples << "\n";
  out << "check_samples = " << spec.check_samples << "\n";
  out << "check_groups = " << spec.check_groups << "\n";
  return out.str();
}

int run(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(spec.out_dir);

  {
    std::ofstream echo(fs::path(spec.out_dir) / "config.txt");
    if (!echo) throw std::runtime_error("cannot write config echo in " + spec.out_dir);
    echo << render_config(spec);
  }

  ExperimentResult result;
  switch (spec.tag) {
    case ExperimentTag::Check: result = run_check(spec); break;
    case ExperimentTag::Gmm: result = run_gmm(spec); break;
    case ExperimentTag::Pfa: result = run_pfa(spec); break;
    case ExperimentTag::DensityToy: result = run_density_toy(spec); break;
    case ExperimentTag::SemisupToy: result = run_semisup_toy(spec); break;
  }

  {
    std::ofstream metrics(fs::path(spec.out_dir) / "metrics.csv");
    metrics << "epoch,minibatch,metric_name,value,seed\n";
    for (const trainer::MetricRow& row : result.metrics)
      metrics << row.epoch << "," << row.minibatch << "," << row.name << ","
              << format_double(row.value) << "," << spec.config.seed << "\n";
  }
  {
    std::ofstream samples(fs::path(spec.out_dir) / "samples.csv");
    samples << "datum_id,sample_id,dim,value\n";
    for (const SampleRow& row : result.samples)
      samples << row.datum_id << "," << row.sample_id << "," << row.dim << ","
              << format_double(row.value) << "\n";
  }
  {
    std::ofstream summary(fs::path(spec.out_dir) / "summary.txt");
    for (const std::string& line : result.summary) summary << line << "\n";
    summary << "overall: " << (result.all_passed ? "PASS" : "FAIL") << "\n";
  }
  return result.all_passed ? 0 : 1;
}

}  // namespace steinflow::cli
