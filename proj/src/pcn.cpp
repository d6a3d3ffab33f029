#include "ddvae/pcn.hpp"

#include "ddvae/field_io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace ddvae {

GaussianPrior::GaussianPrior(Eigen::Index dim) : mean_(Eigen::VectorXd::Zero(dim)) {
  if (dim < 1) throw std::invalid_argument("GaussianPrior: dimension must be positive");
}

GaussianPrior::GaussianPrior(Eigen::VectorXd mean, const Eigen::MatrixXd &cov)
    : mean_(std::move(mean)), identity_(false) {
  if (cov.rows() != mean_.size() || cov.cols() != mean_.size())
    throw std::invalid_argument("GaussianPrior: covariance shape does not match the mean");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("GaussianPrior: covariance is not positive definite");
  chol_ = llt.matrixL();
}

Eigen::MatrixXd GaussianPrior::covariance() const {
  if (identity_) return Eigen::MatrixXd::Identity(dim(), dim());
  return chol_ * chol_.transpose();
}

Eigen::VectorXd GaussianPrior::draw_centred(Rng &rng) const {
  Eigen::VectorXd z = rng.normal_vector(dim());
  if (identity_) return z;
  return chol_ * z;
}

double GaussianPrior::log_density(const Eigen::VectorXd &x) const {
  const Eigen::VectorXd r = x - mean_;
  if (identity_) return -0.5 * r.squaredNorm();
  return -0.5 * chol_.triangularView<Eigen::Lower>().solve(r).squaredNorm();
}

double log_likelihood(const Eigen::VectorXd &predicted, const Eigen::VectorXd &observed,
                      double noise_std) {
  if (predicted.size() != observed.size())
    throw std::invalid_argument("log_likelihood: length mismatch");
  if (!(noise_std > 0.0)) throw std::invalid_argument("log_likelihood: noise_std must be positive");
  return -(predicted - observed).squaredNorm() / (2.0 * noise_std * noise_std);
}

namespace {
void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("pcn: step size must lie in (0, 1]");
}
}  // namespace

Eigen::VectorXd pcn_propose(const Eigen::VectorXd &current, double gamma,
                            const GaussianPrior &prior, const Eigen::VectorXd &zeta) {
  check_gamma(gamma);
  if (current.size() != prior.dim() || zeta.size() != prior.dim())
    throw std::invalid_argument("pcn_propose: dimension mismatch");
  const double c = std::sqrt(1.0 - gamma * gamma);
  return c * (current - prior.mean()) + gamma * zeta + prior.mean();
}

Eigen::VectorXd pcn_propose(const Eigen::VectorXd &current, double gamma,
                            const GaussianPrior &prior, Rng &rng) {
  return pcn_propose(current, gamma, prior, prior.draw_centred(rng));
}

double pcn_log_transition(const Eigen::VectorXd &from, const Eigen::VectorXd &to, double gamma,
                          const GaussianPrior &prior) {
  check_gamma(gamma);
  const Eigen::VectorXd centre =
      prior.mean() + std::sqrt(1.0 - gamma * gamma) * (from - prior.mean());
  // N(to; centre, gamma^2 C) = prior-shaped density of (to - centre) / gamma.
  const Eigen::VectorXd r = (to - centre) / gamma + prior.mean();
  return prior.log_density(r);
}

double acceptance_prob(double loglik_current, double loglik_proposed) {
  if (std::isnan(loglik_proposed) || loglik_proposed == -std::numeric_limits<double>::infinity())
    return 0.0;
  if (loglik_current == -std::numeric_limits<double>::infinity()) return 1.0;
  const double d = loglik_proposed - loglik_current;
  return d >= 0.0 ? 1.0 : std::exp(d);
}

Chain run_chain(const ForwardMap &forward, const Eigen::VectorXd &observed, double noise_std,
                const GaussianPrior &prior, double gamma, std::size_t n_steps,
                std::uint64_t seed) {
  check_gamma(gamma);
  if (n_steps < 1) throw std::invalid_argument("run_chain: need at least one step");
  Chain chain;
  chain.gamma = gamma;
  chain.seed = seed;
  chain.samples.resize(static_cast<Eigen::Index>(n_steps), prior.dim());
  chain.log_likelihoods.resize(static_cast<Eigen::Index>(n_steps));

  Rng rng(seed, 0x70636e);
  auto evaluate = [&](const Eigen::VectorXd &x, std::size_t step) {
    ++chain.forward_evaluations;
    Eigen::VectorXd pred;
    try {
      pred = forward(x);
    } catch (const std::exception &e) {
      throw std::runtime_error("run_chain: forward map failed at step " + std::to_string(step) +
                               ": " + e.what());
    }
    return log_likelihood(pred, observed, noise_std);
  };

  Eigen::VectorXd x = prior.draw(rng);
  double ll = evaluate(x, 0);
  chain.samples.row(0) = x.transpose();
  chain.log_likelihoods[0] = ll;
  for (std::size_t k = 1; k < n_steps; ++k) {
    const Eigen::VectorXd prop = pcn_propose(x, gamma, prior, rng);
    const double ll_prop = evaluate(prop, k);
    const double nu = rng.uniform();
    if (nu < acceptance_prob(ll, ll_prop)) {
      x = prop;
      ll = ll_prop;
      ++chain.accepted;
    }
    chain.samples.row(static_cast<Eigen::Index>(k)) = x.transpose();
    chain.log_likelihoods[static_cast<Eigen::Index>(k)] = ll;
  }
  return chain;
}

double acceptance_rate(const Chain &chain) {
  if (chain.size() == 0) throw std::invalid_argument("acceptance_rate: empty chain");
  if (chain.size() == 1) return 0.0;
  return static_cast<double>(chain.accepted) / static_cast<double>(chain.size() - 1);
}

void save_chain(const std::filesystem::path &stem, const Chain &chain) {
  auto mat = stem;
  mat += ".mat";
  save_matrix(mat, chain.samples);
  nlohmann::json j;
  j["gamma"] = chain.gamma;
  j["n_steps"] = chain.size();
  j["dim"] = chain.samples.cols();
  j["accepted"] = chain.accepted;
  j["acceptance_rate"] = acceptance_rate(chain);
  j["forward_evaluations"] = chain.forward_evaluations;
  j["seed"] = chain.seed;
  j["log_likelihoods"] = std::vector<double>(chain.log_likelihoods.data(),
                                             chain.log_likelihoods.data() + chain.log_likelihoods.size());
  auto js = stem;
  js += ".json";
  std::ofstream os(js);
  if (!os) throw std::runtime_error("save_chain: cannot open " + js.string());
  os << j.dump(2) << '\n';
}

Chain load_chain(const std::filesystem::path &stem) {
  auto mat = stem;
  mat += ".mat";
  auto js = stem;
  js += ".json";
  std::ifstream is(js);
  if (!is) throw std::runtime_error("load_chain: cannot open " + js.string());
  const auto j = nlohmann::json::parse(is);
  Chain c;
  c.samples = load_matrix(mat);
  c.gamma = j.at("gamma").get<double>();
  c.accepted = j.at("accepted").get<std::size_t>();
  c.forward_evaluations = j.at("forward_evaluations").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto ll = j.at("log_likelihoods").get<std::vector<double>>();
  if (ll.size() != c.size()) throw std::runtime_error("load_chain: summary and samples disagree");
  c.log_likelihoods = Eigen::Map<const Eigen::VectorXd>(ll.data(), static_cast<Eigen::Index>(ll.size()));
  return c;
}

}  // namespace ddvae
