#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace ddvae {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Random stream identified by (seed, stream id). Two Rng objects built from
/// the same pair produce identical sequences, so work split across threads
/// reproduces a serial run when every task owns its stream.
class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t bits() { return engine_(); }
  Eigen::VectorXd normal_vector(Eigen::Index n);
  void fill_normal(Eigen::Ref<Eigen::MatrixXd> m);
  std::mt19937_64 &engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Seed of a child stream, e.g. derive_seed(seed, subdomain_index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id);

}  // namespace ddvae
