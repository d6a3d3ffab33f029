#pragma once

#include "ddvae/darcy.hpp"
#include "ddvae/grid.hpp"
#include "ddvae/random_field.hpp"
#include "ddvae/vae.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ddvae {

struct VaeConfig {
  Eigen::Index latent_dim = 256;
  std::vector<Eigen::Index> encoder_hidden{512, 256};
  std::vector<Eigen::Index> decoder_hidden{256, 512};
  double leaky_slope = 0.2;
  TrainConfig train{};
  std::uint64_t init_seed = 21;
};

struct ExperimentConfig {
  // Geometry
  std::size_t nx = 129;
  std::size_t ny = 65;
  Extent extent{0.0, 2.0, 0.0, 1.0};
  std::vector<Extent> cuts{{0.0, 1.1875, 0.0, 1.0}, {0.8125, 2.0, 0.0, 1.0}};

  // Field prior and training data
  double sigma_f2 = 0.5;
  double tau_min = 1.0;
  double tau_max = 2.0;
  double prior_mean = 1.0;
  double energy_frac = 0.95;
  std::size_t tau_bins = 64;
  std::size_t kl_dense_limit = 1600;
  std::size_t dataset_count = 10000;
  std::uint64_t dataset_seed = 1;

  VaeConfig vae_global{512, {512, 512, 256}, {256, 512, 512}, 0.2,
                       TrainConfig{100, 32, 1e-3, 0.5, 0.999, 1e-8, 11, false, Exec::serial}, 21};
  VaeConfig vae_local{256, {512, 256}, {256, 512}, 0.2,
                      TrainConfig{100, 64, 1e-4, 0.5, 0.999, 1e-8, 12, false, Exec::serial}, 22};

  // Observations
  std::size_t sensors_n1 = 13;
  std::size_t sensors_n2 = 5;
  std::string sensor_csv;  // optional explicit sensor table; values ignored
  double noise_fraction = 0.01;
  double noise_scale = 1.0;  // multiplier on the added noise; 0 gives noiseless data
  std::uint64_t noise_seed = 3;

  // Truth parameter field
  std::uint64_t truth_seed = 1001;
  std::optional<double> truth_tau;  // drawn from [tau_min, tau_max] when unset
  std::string truth_file;          // FLD1 file overriding the KL draw

  // PDE
  std::vector<double> dirichlet_abscissae{0.0, 2.0};
  Point source_center{1.0, 0.5};
  LinearSolverKind solver = LinearSolverKind::direct;

  // Interface GP
  double gp_delta_tol = 1e-7;
  std::size_t gp_max_acquisitions = static_cast<std::size_t>(-1);
  std::size_t gp_grid_points = 64;
  double gp_scale_min = 1e-2;
  double gp_scale_max = 1e1;

  // MCMC
  double gamma_global = 0.03;
  std::vector<double> gamma_local{0.04, 0.03};
  std::size_t n_local = 4000;
  std::size_t n_global = 0;  // 0: derive from measured solve times
  double burn_in = 0.2;
  std::uint64_t mcmc_seed = 5;
  std::size_t cost_repetitions = 10;

  bool parallel = true;
  std::filesystem::path output_dir = "out";

  Exec exec() const { return parallel ? Exec::parallel : Exec::serial; }
  double gamma_for(int subdomain) const;
  DatasetSpec dataset_spec() const;
  /// Throws on inconsistent settings.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json &j);
nlohmann::json config_to_json(const ExperimentConfig &c);
ExperimentConfig load_config(const std::filesystem::path &path);
void save_config(const std::filesystem::path &path, const ExperimentConfig &c);

}  // namespace ddvae
