#include "ddvae/pcn.hpp"
#include "ddvae/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <limits>

using namespace ddvae;
using test_support::TempDir;

namespace {

Eigen::MatrixXd random_spd(Eigen::Index n, Rng &rng) {
  Eigen::MatrixXd a(n, n);
  rng.fill_normal(a);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

// Unnormalized Gaussian log density written from scratch.
double gauss_log(const Eigen::VectorXd &x, const Eigen::VectorXd &m, const Eigen::MatrixXd &cov) {
  const Eigen::VectorXd r = x - m;
  return -0.5 * r.dot(cov.inverse() * r);
}

}  // namespace

TEST_CASE("log likelihood and acceptance probability") {
  const Eigen::Vector2d a(1.0, 2.0), b(1.5, 1.0);
  CHECK(log_likelihood(a, b, 0.5) == doctest::Approx(-(0.25 + 1.0) / (2 * 0.25)));
  CHECK(acceptance_prob(-1.0, -0.5) == 1.0);
  CHECK(acceptance_prob(-1.0, -2.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(acceptance_prob(-1.0, -std::numeric_limits<double>::infinity()) == 0.0);
  CHECK(acceptance_prob(-1.0, std::nan("")) == 0.0);
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double p = acceptance_prob(rng.normal() * 50, rng.normal() * 50);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("proposal arithmetic") {
  const GaussianPrior prior(Eigen::Vector2d(1.0, -1.0), Eigen::Matrix2d::Identity());
  const Eigen::Vector2d x(2.0, 0.0), z(0.5, -0.5);
  const Eigen::VectorXd y = pcn_propose(x, 0.6, prior, z);
  CHECK(y[0] == doctest::Approx(0.8 * 1.0 + 0.6 * 0.5 + 1.0));
  CHECK(y[1] == doctest::Approx(0.8 * 1.0 - 0.3 - 1.0));
  CHECK(pcn_propose(x, 1.0, prior, z) == prior.mean() + z);
  Rng rng(1);
  CHECK_THROWS(pcn_propose(x, 1.5, prior, rng));
  CHECK_THROWS(pcn_propose(x, 0.0, prior, rng));
  CHECK_THROWS(pcn_propose(Eigen::Vector3d::Zero(), 0.5, prior, z));
}

TEST_CASE("pCN transition satisfies detailed balance with respect to the prior") {
  Rng rng(42);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = 2 + trial % 7;
    const Eigen::MatrixXd cov = random_spd(n, rng);
    const Eigen::VectorXd mean = rng.normal_vector(n);
    const GaussianPrior prior(mean, cov);
    const double gamma = rng.uniform(0.05, 0.95);
    const Eigen::VectorXd x = prior.draw(rng), y = prior.draw(rng);
    const double lhs = pcn_log_transition(x, y, gamma, prior) + prior.log_density(x);
    const double rhs = pcn_log_transition(y, x, gamma, prior) + prior.log_density(y);
    worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));

    // Independent check of both pieces.
    const double b = std::sqrt(1 - gamma * gamma);
    const Eigen::MatrixXd qcov = gamma * gamma * cov;
    const double ol = gauss_log(y, mean + b * (x - mean), qcov) + gauss_log(x, mean, cov);
    const double orr = gauss_log(x, mean + b * (y - mean), qcov) + gauss_log(y, mean, cov);
    CHECK(ol == doctest::Approx(orr).epsilon(1e-8));
    CHECK(pcn_log_transition(x, y, gamma, prior) == doctest::Approx(gauss_log(y, mean + b * (x - mean), qcov)).epsilon(1e-8));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("correlated prior draws have the requested covariance") {
  Rng rng(3);
  const Eigen::MatrixXd cov = random_spd(3, rng);
  const GaussianPrior prior(Eigen::Vector3d(1, 2, 3), cov);
  CHECK((prior.covariance() - cov).cwiseAbs().maxCoeff() < 1e-12);
  const int n = 200000;
  Eigen::MatrixXd s(n, 3);
  for (int k = 0; k < n; ++k) s.row(k) = prior.draw_centred(rng).transpose();
  const Eigen::MatrixXd emp = s.transpose() * s / n;
  CHECK((emp - cov).cwiseAbs().maxCoeff() < 0.05 * cov.cwiseAbs().maxCoeff());
  CHECK_THROWS(GaussianPrior(Eigen::Vector2d::Zero(), -Eigen::Matrix2d::Identity()));
}

TEST_CASE("chain bookkeeping") {
  const GaussianPrior prior(3);
  const Eigen::Vector2d obs(0.1, -0.2);
  std::size_t calls = 0;
  const ForwardMap f = [&](const Eigen::VectorXd &a) {
    ++calls;
    return Eigen::Vector2d(a[0], a[1] + a[2]);
  };
  const Chain c = run_chain(f, obs, 0.3, prior, 0.4, 500, 77);
  CHECK(c.size() == 500);
  CHECK(c.samples.cols() == 3);
  CHECK(c.forward_evaluations == 500);
  CHECK(calls == 500);
  CHECK(c.accepted <= 499);
  CHECK(c.samples.allFinite());
  CHECK(acceptance_rate(c) == doctest::Approx(c.accepted / 499.0));
  // Rejections repeat the previous state; log-likelihoods follow the states.
  for (Eigen::Index k = 0; k < 500; ++k) {
    const Eigen::VectorXd a = c.samples.row(k).transpose();
    CHECK(c.log_likelihoods[k] == doctest::Approx(log_likelihood(f(a), obs, 0.3)));
  }
  const Chain again = run_chain(f, obs, 0.3, prior, 0.4, 500, 77);
  CHECK(again.samples == c.samples);
  const Chain other = run_chain(f, obs, 0.3, prior, 0.4, 500, 78);
  CHECK(other.samples != c.samples);
}

TEST_CASE("flat likelihood accepts every proposal") {
  const GaussianPrior prior(4);
  const ForwardMap f = [](const Eigen::VectorXd &) { return Eigen::VectorXd::Zero(2); };
  const Chain c = run_chain(f, Eigen::VectorXd::Zero(2), 1.0, prior, 0.3, 200, 1);
  CHECK(c.accepted == 199);
  CHECK(acceptance_rate(c) == 1.0);
}

TEST_CASE("forward failures name the step") {
  const GaussianPrior prior(2);
  int calls = 0;
  const ForwardMap f = [&](const Eigen::VectorXd &) -> Eigen::VectorXd {
    if (++calls == 5) throw std::runtime_error("boom");
    return Eigen::VectorXd::Zero(1);
  };
  try {
    run_chain(f, Eigen::VectorXd::Zero(1), 1.0, prior, 0.3, 10, 1);
    FAIL("expected a throw");
  } catch (const std::exception &e) {
    CHECK(std::string(e.what()).find("step 4") != std::string::npos);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
  CHECK_THROWS(run_chain([](const Eigen::VectorXd &) { return Eigen::VectorXd::Zero(1); },
                         Eigen::VectorXd::Zero(1), 0.0, prior, 0.3, 10, 1));
}

TEST_CASE("chain dump round-trip") {
  TempDir dir("pcn");
  const GaussianPrior prior(2);
  const Chain c = run_chain([](const Eigen::VectorXd &a) { return a; }, Eigen::Vector2d(0.5, 0.5), 0.5, prior,
                            0.5, 50, 9);
  save_chain(dir / "c", c);
  CHECK(std::filesystem::exists(dir / "c.mat"));
  CHECK(std::filesystem::exists(dir / "c.json"));
  const Chain b = load_chain(dir / "c");
  CHECK(b.samples == c.samples);
  CHECK(b.accepted == c.accepted);
  CHECK(b.gamma == c.gamma);
  CHECK(b.seed == c.seed);
  CHECK(b.forward_evaluations == c.forward_evaluations);
  CHECK((b.log_likelihoods - c.log_likelihoods).cwiseAbs().maxCoeff() == 0.0);
}
