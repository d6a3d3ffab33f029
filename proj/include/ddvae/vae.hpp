#pragma once

#include "ddvae/parallel.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ddvae {

/// Affine layer whose weights (out x in, column-major) and bias live in a
/// shared flat parameter vector starting at `offset`.
struct DenseLayer {
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  Eigen::Index offset = 0;
  bool activated = true;  // leaky ReLU after the affine map, else linear

  Eigen::Index weight_count() const { return in * out; }
  Eigen::Index bias_offset() const { return offset + in * out; }
  Eigen::Index size() const { return in * out + out; }
};

struct Mlp {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().out; }
};

struct VaeArchitecture {
  Eigen::Index input_dim = 0;
  Eigen::Index latent_dim = 0;
  std::vector<Eigen::Index> encoder_hidden{512, 256};
  std::vector<Eigen::Index> decoder_hidden{256, 512};
  double leaky_slope = 0.2;
};

/// Encoder trunk, two linear heads (mean and log-variance) and decoder.
struct VaeModel {
  VaeArchitecture arch;
  Mlp encoder;
  DenseLayer mu_head;
  DenseLayer logvar_head;
  Mlp decoder;
  Eigen::VectorXd params;
  /// Inputs are standardized as (x - data_shift) / data_scale before
  /// encoding; generated fields are mapped back.
  double data_shift = 0.0;
  double data_scale = 1.0;

  Eigen::Index input_dim() const { return arch.input_dim; }
  Eigen::Index latent_dim() const { return arch.latent_dim; }
  Eigen::Index parameter_count() const { return params.size(); }
};

/// Lays out the parameter vector and draws Glorot-uniform weights with zero
/// biases.
VaeModel make_vae(const VaeArchitecture &arch, std::uint64_t seed);

/// Weight matrix / bias views of one layer.
Eigen::Map<const Eigen::MatrixXd> layer_weights(const VaeModel &m, const DenseLayer &l);
Eigen::Map<Eigen::MatrixXd> layer_weights(VaeModel &m, const DenseLayer &l);
Eigen::Map<const Eigen::VectorXd> layer_bias(const VaeModel &m, const DenseLayer &l);
Eigen::Map<Eigen::VectorXd> layer_bias(VaeModel &m, const DenseLayer &l);

struct Encoding {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
};

inline constexpr double kLogvarMin = -20.0;
inline constexpr double kLogvarMax = 20.0;

Encoding encode(const VaeModel &model, const Eigen::VectorXd &x);

/// mu + exp(logvar / 2) * eps
Eigen::VectorXd reparameterize(const Eigen::VectorXd &mu, const Eigen::VectorXd &logvar,
                               const Eigen::VectorXd &eps);

/// 1/2 sum(1 + logvar - mu^2 - exp(logvar)), the negative KL divergence to N(0, I).
double kl_term(const Eigen::VectorXd &mu, const Eigen::VectorXd &logvar);

struct BatchResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // same layout as VaeModel::params
};

/// Loss sum_k |dec(alpha_k) - x_k|^2 - KL_k over the batch columns, with
/// alpha_k reparameterized from eps column k, and its parameter gradient.
/// The parallel kernel splits the batch into fixed chunks and reduces them
/// in chunk order.
BatchResult elbo_batch(const VaeModel &model, const Eigen::MatrixXd &batch,
                       const Eigen::MatrixXd &eps, Exec exec = Exec::serial);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 7;
  /// Fit data_shift / data_scale to the training set before training.
  bool standardize = false;
  Exec exec = Exec::serial;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::size_t t = 0;
};

void adam_step(Eigen::VectorXd &params, const Eigen::VectorXd &grads, AdamState &state,
               const TrainConfig &config);

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean per-sample loss of each epoch
};

/// Mini-batch training on the columns of `data`.
TrainHistory train(VaeModel &model, const Eigen::MatrixXd &data, const TrainConfig &config);

/// Decoder mean output for one latent vector, in data units.
Eigen::VectorXd generate(const VaeModel &model, const Eigen::VectorXd &latent);

// Checkpoint layout, little-endian:
//   magic "VAE1", header length (uint64), UTF-8 JSON header with the
//   architecture, standardization and parameter count, then the parameters
//   as float64 in layer order (encoder trunk, mu head, logvar head,
//   decoder); each layer stores its weights column-major followed by bias.
void save_vae(const std::filesystem::path &path, const VaeModel &model,
              const std::string &extra_json = "{}");
VaeModel load_vae(const std::filesystem::path &path);

}  // namespace ddvae
