#pragma once

#include "ddvae/grid.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <filesystem>
#include <limits>
#include <vector>

namespace ddvae {

/// exp(-|a - b|^2 / (2 sigma_gp^2))
double rbf_kernel(const Point &a, const Point &b, double sigma_gp);

/// Zero-mean GP regressor over 2D locations with a factorized
/// K_N + noise_var I.
struct GpInterfaceModel {
  std::vector<Point> train_locations;
  Eigen::VectorXd train_values;
  double kernel_scale = 1.0;
  double noise_var = 0.0;
  double jitter = 0.0;          // diagonal shift added when the factorization needed it
  Eigen::LLT<Eigen::MatrixXd> factor;
  Eigen::VectorXd weights;      // (K_N + noise_var I)^{-1} d

  std::size_t size() const { return train_locations.size(); }
};

GpInterfaceModel fit_gp(const std::vector<Point> &locations, const Eigen::VectorXd &values,
                        double kernel_scale, double noise_var);

struct GpPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  double max_clamp = 0.0;  // largest negative variance clamped to zero
};

GpPrediction gp_posterior(const GpInterfaceModel &model, const std::vector<Point> &queries);

double log_marginal_likelihood(const std::vector<Point> &locations, const Eigen::VectorXd &values,
                               double kernel_scale, double noise_var);

struct HyperparameterOptions {
  std::size_t grid_points = 64;
  double scale_min = 1e-2;
  double scale_max = 1e1;
  std::size_t golden_iterations = 60;
  /// Returned when the likelihood is flat in the scale (single point or
  /// coincident locations); callers pass a quarter of the domain diagonal.
  double fallback_scale = 0.5;
};

/// Maximizes the log marginal likelihood over a log-spaced grid, then refines
/// the best bracket by golden-section search in log scale.
double fit_hyperparameter(const std::vector<Point> &locations, const Eigen::VectorXd &values,
                          double noise_var, const HyperparameterOptions &opts = {});

struct AcquisitionStep {
  std::size_t iteration = 0;
  std::size_t train_size = 0;  // |Lambda| of the model this row describes
  Point test_point{};          // argmax of the posterior variance
  bool has_sensor = false;
  Point sensor{};              // sensor acquired next, if any
  double max_variance = 0.0;
  double kernel_scale = 0.0;
};

struct AcquisitionTrace {
  std::vector<AcquisitionStep> steps;
  bool converged = false;
  bool exhausted = false;

  std::size_t acquisitions() const;
  double final_max_variance() const { return steps.empty() ? 0.0 : steps.back().max_variance; }
};

struct AdaptiveOptions {
  double delta_tol = 1e-7;
  double noise_var = 0.0;
  /// Stop after this many acquisitions even if the threshold is not met.
  std::size_t max_acquisitions = std::numeric_limits<std::size_t>::max();
  HyperparameterOptions hyper{};
};

struct AdaptiveResult {
  GpInterfaceModel model;
  AcquisitionTrace trace;
};

/// Adaptive max-variance design. Starts from the sensor nearest the centre of
/// the test set, then repeatedly refits the scale, locates the test point of
/// largest posterior variance and adds the closest unused sensor
/// (ties broken by (s1, s2)). Stops once the maximum variance drops below
/// delta_tol, or flags exhaustion when no sensors remain.
AdaptiveResult adaptive_fit(const ObservationSet &sensors, const std::vector<Point> &test_set,
                            const AdaptiveOptions &opts);

/// Posterior means at the interface nodes.
Eigen::VectorXd interface_values(const GpInterfaceModel &model, const std::vector<Point> &nodes);

/// CSV: iteration,train_size,test_s1,test_s2,sensor_s1,sensor_s2,max_variance,kernel_scale
void save_acquisition_csv(const std::filesystem::path &path, const AcquisitionTrace &trace);

}  // namespace ddvae
