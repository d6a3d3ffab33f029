#pragma once

#include "ddvae/grid.hpp"
#include "ddvae/parallel.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace ddvae {

/// sigma_f^2 * exp(-|a - b| / tau)
double exp_covariance(const Point &a, const Point &b, double sigma_f, double tau);

/// Symmetrically weighted covariance W^{1/2} C W^{1/2} with trapezoidal
/// weights W. Its eigenvalues are the discrete KL eigenvalues.
Eigen::MatrixXd weighted_covariance(const Grid &grid, double sigma_f, double tau,
                                    Exec exec = Exec::parallel);

struct KLOptions {
  std::size_t max_nodes = 20000;
  /// Grids up to this size use a full dense eigendecomposition; larger ones
  /// use block subspace iteration for the leading modes only.
  std::size_t dense_limit = 1600;
  double residual_tol = 1e-10;
  std::uint64_t seed = 0x4b4c;
};

/// Truncated discrete Karhunen-Loeve basis of the exponential covariance.
struct KLBasis {
  Grid grid;
  double mean = 1.0;
  double sigma_f = 1.0;
  double tau = 1.0;
  double energy_frac = 0.95;
  double total_variance = 0.0;   // sum of all eigenvalues (trace)
  Eigen::VectorXd eigenvalues;   // non-increasing, length n_kl
  Eigen::MatrixXd eigenfunctions;  // grid.size() x n_kl, orthonormal in the weighted inner product

  std::size_t n_kl() const { return static_cast<std::size_t>(eigenvalues.size()); }
  double retained_fraction() const { return eigenvalues.sum() / total_variance; }
};

KLBasis kl_decompose(const Grid &grid, double sigma_f, double tau, double energy_frac,
                     double mean, const KLOptions &opts = {});

/// mean + sum_r sqrt(lambda_r) psi_r kappa_r
Field sample_field(const KLBasis &basis, const Eigen::VectorXd &kappa);

/// Leading eigenpairs of a symmetric PSD matrix, enough of them to hold
/// `energy_frac` of `trace`. Values come back in non-increasing order.
struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
EigenPairs leading_eigenpairs(const Eigen::MatrixXd &a, double trace, double energy_frac,
                              const KLOptions &opts);

struct SampleMeta {
  double tau = 0.0;        // correlation length drawn for this sample
  double tau_basis = 0.0;  // bin-centre length whose basis was used
  std::uint64_t seed = 0;  // per-sample stream seed
};

struct Dataset {
  Grid grid;
  std::vector<Field> samples;
  std::vector<SampleMeta> meta;

  std::size_t size() const { return samples.size(); }
  /// grid.size() x count, one sample per column.
  Eigen::MatrixXd matrix() const;
};

struct DatasetSpec {
  double tau_min = 1.0;
  double tau_max = 2.0;
  double sigma_f = std::sqrt(0.5);
  double mean = 1.0;
  double energy_frac = 0.95;
  std::size_t count = 1;
  std::uint64_t seed = 1;
  std::size_t tau_bins = 64;
  KLOptions kl{};
};

/// Quantized correlation length used for basis caching.
double quantize_tau(double tau, const DatasetSpec &spec);

Dataset generate_dataset(const Grid &grid, const DatasetSpec &spec,
                         Exec exec = Exec::parallel);

/// Restricts every sample to every subdomain: M*K local fields, ordered
/// sample-major (sample k, subdomain 1..M).
Dataset augment_dataset(const Dataset &ds, const Decomposition &decomposition);

/// Directory of Field binaries plus manifest.json.
void save_dataset(const std::filesystem::path &dir, const Dataset &ds);
Dataset load_dataset(const std::filesystem::path &dir);

}  // namespace ddvae
