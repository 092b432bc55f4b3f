#include "steinflow/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <map>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Stein variational gradient descent training of variational autoencoders"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::string out_dir;
  std::string seed, particles, iw_samples, epochs, batch, lr;

  std::vector<CLI::App*> subs;
  for (const char* name : {"gmm", "pfa", "density-toy", "semisup-toy", "check"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--particles", particles, "decoder particle count M");
    sub->add_option("--iw-samples", iw_samples, "importance-weighted group count k");
    sub->add_option("--epochs", epochs, "training epochs");
    sub->add_option("--batch", batch, "minibatch size");
    sub->add_option("--lr", lr, "Adam learning rate for decoder particles");
    sub->add_option("--out", out_dir, "output directory");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string tag = app.get_subcommands().front()->get_name();
  if (!seed.empty()) overrides["seed"] = seed;
  if (!particles.empty()) overrides["particles"] = particles;
  if (!iw_samples.empty()) overrides["iw_samples"] = iw_samples;
  if (!epochs.empty()) overrides["epochs"] = epochs;
  if (!batch.empty()) overrides["batch"] = batch;
  if (!lr.empty()) overrides["lr"] = lr;
  if (!out_dir.empty()) overrides["out"] = out_dir;

  try {
    const steinflow::cli::ExperimentSpec spec =
        steinflow::cli::parse_config(tag, config_path, overrides);
    return steinflow::cli::run(spec);
  } catch (const steinflow::cli::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 3;
  }
}
