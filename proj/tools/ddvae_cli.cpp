#include "ddvae/config.hpp"
#include "ddvae/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <string>

namespace {

struct Options {
  std::string config;
  std::string output_dir;
  int threads = 0;
  bool serial = false;
};

void add_common(CLI::App *cmd, Options &o) {
  cmd->add_option("-c,--config", o.config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--output-dir", o.output_dir, "override the configured output directory");
  cmd->add_flag("--serial", o.serial, "run every kernel on one thread");
  cmd->add_option("-j,--threads", o.threads, "OpenMP thread count (0: runtime default)")->check(CLI::NonNegativeNumber);
}

ddvae::ExperimentConfig resolve(const Options &o) {
  auto c = ddvae::load_config(o.config);
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.serial) c.parallel = false;
  if (o.threads > 0) ddvae::set_threads(o.threads);
  return c;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Domain-decomposed VAE priors with pCN MCMC for Darcy inversion"};
  app.require_subcommand(1);
  Options opt;
  std::string scope, method;
  std::string stage;
  std::function<void(const ddvae::ExperimentConfig &)> action;

  auto sub = [&](const char *name, const char *help, auto fn) {
    auto *cmd = app.add_subcommand(name, help);
    add_common(cmd, opt);
    cmd->callback([&, name, fn] {
      stage = name;
      action = fn;
    });
    return cmd;
  };

  sub("generate-data", "sample the KL training set, the truth field and noisy observations",
      [](const auto &c) { ddvae::stages::generate_data(c); });
  sub("train-vae", "train the global or the domain-decomposed VAE",
      [&](const auto &c) { ddvae::stages::train_vae(c, scope); })
      ->add_option("--scope", scope, "global | local")
      ->required()
      ->check(CLI::IsMember({"global", "local"}));
  sub("fit-interfaces", "adaptive GP models of the interface pressure",
      [](const auto &c) { ddvae::stages::fit_interfaces(c); });
  sub("invert", "run the pCN chains",
      [&](const auto &c) { ddvae::stages::invert(c, method); })
      ->add_option("--method", method, "dd | global")
      ->required()
      ->check(CLI::IsMember({"dd", "global"}));
  sub("blend", "Poisson-blend and stitch paired local posterior samples",
      [](const auto &c) { ddvae::stages::blend(c); });
  sub("stats", "posterior mean and variance fields and their errors",
      [](const auto &c) { ddvae::stages::stats(c); });
  sub("report", "summary JSON and CSV tables", [](const auto &c) { ddvae::stages::report(c); });

  CLI11_PARSE(app, argc, argv);
  try {
    action(resolve(opt));
  } catch (const std::exception &e) {
    std::cerr << "ddvae " << stage << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
