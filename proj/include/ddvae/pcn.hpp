#pragma once

#include "ddvae/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace ddvae {

/// N(mean, cov) on R^n. The default latent prior is N(0, I).
class GaussianPrior {
public:
  explicit GaussianPrior(Eigen::Index dim);
  GaussianPrior(Eigen::VectorXd mean, const Eigen::MatrixXd &cov);

  Eigen::Index dim() const { return mean_.size(); }
  const Eigen::VectorXd &mean() const { return mean_; }
  bool identity_covariance() const { return identity_; }
  Eigen::MatrixXd covariance() const;

  /// Draw from N(0, C), the centred part of the prior.
  Eigen::VectorXd draw_centred(Rng &rng) const;
  /// Draw from N(mean, C).
  Eigen::VectorXd draw(Rng &rng) const { return mean_ + draw_centred(rng); }
  /// Log density up to the normalizing constant.
  double log_density(const Eigen::VectorXd &x) const;

private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd chol_;  // lower factor of C (empty for identity)
  bool identity_ = true;
};

/// -|predicted - observed|^2 / (2 sigma^2)
double log_likelihood(const Eigen::VectorXd &predicted, const Eigen::VectorXd &observed,
                      double noise_std);

/// sqrt(1 - gamma^2) (x - mu) + gamma zeta + mu, with zeta ~ N(0, C) given.
Eigen::VectorXd pcn_propose(const Eigen::VectorXd &current, double gamma,
                            const GaussianPrior &prior, const Eigen::VectorXd &zeta);
Eigen::VectorXd pcn_propose(const Eigen::VectorXd &current, double gamma,
                            const GaussianPrior &prior, Rng &rng);

/// log N(to; mu + sqrt(1 - gamma^2)(from - mu), gamma^2 C) up to a constant
/// shared by every pair.
double pcn_log_transition(const Eigen::VectorXd &from, const Eigen::VectorXd &to, double gamma,
                          const GaussianPrior &prior);

/// min(1, exp(proposed - current)); 0 when the proposal log-likelihood is -inf or NaN.
double acceptance_prob(double loglik_current, double loglik_proposed);

struct Chain {
  Eigen::MatrixXd samples;        // n_steps x dim, one state per row
  Eigen::VectorXd log_likelihoods;
  std::size_t accepted = 0;
  std::size_t forward_evaluations = 0;
  double gamma = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
};

using ForwardMap = std::function<Eigen::VectorXd(const Eigen::VectorXd &)>;

/// pCN chain of n_steps states. The initial state is drawn from the prior;
/// every state, including the first, costs exactly one forward evaluation.
Chain run_chain(const ForwardMap &forward, const Eigen::VectorXd &observed, double noise_std,
                const GaussianPrior &prior, double gamma, std::size_t n_steps,
                std::uint64_t seed);

/// accepted / (n_steps - 1)
double acceptance_rate(const Chain &chain);

/// Writes `<stem>.mat` (MAT1 sample matrix) and `<stem>.json` (summary).
void save_chain(const std::filesystem::path &stem, const Chain &chain);
Chain load_chain(const std::filesystem::path &stem);

}  // namespace ddvae
