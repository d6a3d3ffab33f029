#include "ddvae/blend.hpp"
#include "ddvae/random_field.hpp"
#include "ddvae/rng.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>

using namespace ddvae;

namespace {

// Hand-built geometry: 5x5 grid, the 3x3 interior as Omega.
BlendProblem interior_problem(Rng &rng) {
  const Grid g(5, 5, {0.0, 1.0, 0.0, 1.0});
  BlendProblem p;
  auto &geo = p.geometry;
  geo.grid = g;
  geo.slot.assign(25, -1);
  geo.owner.assign(25, 1);
  geo.in_overlap.assign(25, 1);
  for (std::size_t j = 1; j <= 3; ++j)
    for (std::size_t i = 1; i <= 3; ++i) {
      geo.slot[g.index(i, j)] = static_cast<Eigen::Index>(geo.omega.size());
      geo.omega.push_back(g.index(i, j));
    }
  for (std::size_t n = 0; n < 25; ++n)
    if (!geo.in_omega(n) && !(n == 0 || n == 4 || n == 20 || n == 24)) geo.boundary.push_back(n);
  p.target = Field(g, rng.normal_vector(25));
  p.source = Field(g, rng.normal_vector(25));
  return p;
}

struct Pair {
  Decomposition dec;
  Field truth;
  Field x1, x2;
};

Pair smooth_pair(std::uint64_t seed, double amplitude) {
  static const Grid g(33, 17, {0.0, 2.0, 0.0, 1.0});
  static const KLBasis basis = kl_decompose(g, std::sqrt(0.5), 1.2, 0.95, 1.0);
  Rng rng(seed);
  Pair p{decompose(g, {{0.0, 1.1875, 0.0, 1.0}, {0.8125, 2.0, 0.0, 1.0}}), {}, {}, {}};
  const auto k = static_cast<Eigen::Index>(basis.n_kl());
  p.truth = sample_field(basis, rng.normal_vector(k));
  Field d1 = sample_field(basis, rng.normal_vector(k)), d2 = sample_field(basis, rng.normal_vector(k));
  d1.values = p.truth.values + amplitude * (d1.values.array() - 1.0).matrix();
  d2.values = p.truth.values + amplitude * (d2.values.array() - 1.0).matrix();
  p.x1 = restrict_field(d1, p.dec.sub(1));
  p.x2 = restrict_field(d2, p.dec.sub(2));
  return p;
}

}  // namespace

TEST_CASE("5x5 interior blend equals a dense solve of the hand-assembled system") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const BlendProblem p = interior_problem(rng);
    const Field out = blend(p);
    const Grid &g = p.geometry.grid;
    // 9x9 system: 4 I(s) - sum_{Omega nbrs} I(s') = sum_{boundary nbrs} I*(s') + sum_nbrs (B(s) - B(s')).
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(9, 9);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(9);
    auto slot = [](std::size_t i, std::size_t j) { return static_cast<Eigen::Index>((j - 1) * 3 + (i - 1)); };
    for (std::size_t j = 1; j <= 3; ++j)
      for (std::size_t i = 1; i <= 3; ++i) {
        const auto r = slot(i, j);
        a(r, r) = 4.0;
        const std::pair<std::size_t, std::size_t> nb[4] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        for (auto [ni, nj] : nb) {
          const bool inner = ni >= 1 && ni <= 3 && nj >= 1 && nj <= 3;
          if (inner)
            a(r, slot(ni, nj)) = -1.0;
          else
            b[r] += p.target(ni, nj);
          b[r] += p.source(i, j) - p.source(ni, nj);
        }
      }
    const Eigen::VectorXd x = a.fullPivLu().solve(b);
    for (std::size_t j = 1; j <= 3; ++j)
      for (std::size_t i = 1; i <= 3; ++i) CHECK(std::abs(out(i, j) - x[slot(i, j)]) < 1e-10);
    for (std::size_t n = 0; n < g.size(); ++n)
      if (!p.geometry.in_omega(n)) CHECK(out.values[static_cast<Eigen::Index>(n)] == p.target.values[static_cast<Eigen::Index>(n)]);
    CHECK((Eigen::MatrixXd(blend_matrix(p.geometry)) - a).cwiseAbs().maxCoeff() == 0.0);
    CHECK((blend_rhs(p) - b).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("constant source gradient and constant boundary give a constant interior") {
  Rng rng(1);
  BlendProblem p = interior_problem(rng);
  p.source.values.setConstant(4.2);
  p.target.values.setConstant(-1.5);
  const Field out = blend(p);
  CHECK((out.values.array() + 1.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("node classification on a 7x3 grid with a 3-column overlap") {
  const Grid g(7, 3, {0.0, 6.0, 0.0, 2.0});
  const auto dec = decompose(g, {{0.0, 3.0, 0.0, 2.0}, {1.0, 6.0, 0.0, 2.0}});
  const BlendGeometry geo = blend_geometry(dec);
  CHECK(geo.omega == std::vector<std::size_t>{2, 9, 16});
  std::vector<std::size_t> boundary = geo.boundary;
  std::sort(boundary.begin(), boundary.end());
  CHECK(boundary == std::vector<std::size_t>{1, 3, 8, 10, 15, 17});
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(geo.owner[g.index(0, j)] == 1);
    CHECK(geo.owner[g.index(1, j)] == 1);
    CHECK(geo.owner[g.index(3, j)] == 2);
    CHECK(geo.owner[g.index(5, j)] == 2);
    CHECK(geo.in_overlap[g.index(1, j)]);
    CHECK(geo.in_overlap[g.index(3, j)]);
    CHECK_FALSE(geo.in_overlap[g.index(4, j)]);
  }
  // Top and bottom rows of Omega have three neighbours inside the grid.
  CHECK(geo.neighbors(2).size() == 3);
  CHECK(geo.neighbors(9).size() == 4);
}

TEST_CASE("blend geometry of the paper-shaped grid spans the open overlap") {
  const Grid g(129, 65, {0.0, 2.0, 0.0, 1.0});
  const auto dec = decompose(g, {{0.0, 1.1875, 0.0, 1.0}, {0.8125, 2.0, 0.0, 1.0}});
  const BlendGeometry geo = blend_geometry(dec);
  double lo = 10, hi = -10;
  for (auto n : geo.omega) {
    lo = std::min(lo, g.location(n).s1);
    hi = std::max(hi, g.location(n).s1);
  }
  CHECK(lo > 0.8125);
  CHECK(hi < 1.1875);
  CHECK(lo == doctest::Approx(0.8125 + g.h1()));
  CHECK(hi == doctest::Approx(1.1875 - g.h1()));
  CHECK(geo.omega.size() == 23 * 65);
}

TEST_CASE("blending rejects bad inputs") {
  const Grid g(9, 5, {0.0, 2.0, 0.0, 1.0});
  const auto one = decompose(g, {{0.0, 2.0, 0.0, 1.0}});
  CHECK_THROWS(blend_geometry(one));
  const auto dec = decompose(g, {{0.0, 1.25, 0.0, 1.0}, {0.75, 2.0, 0.0, 1.0}});
  const Field x1 = Field::constant(dec.sub(1).local_grid, 1.0);
  CHECK_THROWS(build_blend_problem(x1, Field::constant(g, 1.0), dec));
  Rng rng(1);
  BlendProblem p = interior_problem(rng);
  p.geometry.omega.clear();
  p.geometry.slot.assign(25, -1);
  CHECK_THROWS(blend(p));
}

TEST_CASE("identities: equal constants and consistent restrictions") {
  const Pair p = smooth_pair(3, 0.0);
  const Field c1 = Field::constant(p.dec.sub(1).local_grid, 2.5), c2 = Field::constant(p.dec.sub(2).local_grid, 2.5);
  const Field cb = blend_posterior_sample(c1, c2, p.dec);
  CHECK((cb.values.array() - 2.5).abs().maxCoeff() < 1e-12);
  const Field tb = blend_posterior_sample(p.x1, p.x2, p.dec);
  CHECK((tb.values - p.truth.values).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("discontinuous inputs: Dirichlet exactness and the interior equation") {
  Rng rng(5);
  const Pair base = smooth_pair(4, 0.0);
  const Field x1(base.dec.sub(1).local_grid, rng.normal_vector(static_cast<Eigen::Index>(base.x1.values.size())));
  const Field x2(base.dec.sub(2).local_grid, rng.normal_vector(static_cast<Eigen::Index>(base.x2.values.size())));
  const BlendProblem prob = build_blend_problem(x1, x2, base.dec);
  const Field out = blend(prob);
  const auto &geo = prob.geometry;
  for (auto n : geo.boundary) CHECK(out.values[static_cast<Eigen::Index>(n)] == prob.target.values[static_cast<Eigen::Index>(n)]);
  for (std::size_t n = 0; n < geo.grid.size(); ++n)
    if (!geo.in_omega(n)) CHECK(out.values[static_cast<Eigen::Index>(n)] == prob.target.values[static_cast<Eigen::Index>(n)]);

  // Discrete Laplacian of the result on Omega matches that of B, with I* on the boundary.
  Eigen::VectorXd res(static_cast<Eigen::Index>(geo.omega.size()));
  double scale = 0.0;
  for (std::size_t r = 0; r < geo.omega.size(); ++r) {
    const auto s = geo.omega[r];
    double lhs = 0.0, rhs = 0.0;
    for (auto nb : geo.neighbors(s)) {
      lhs += out.values[static_cast<Eigen::Index>(s)] - out.values[static_cast<Eigen::Index>(nb)];
      rhs += prob.source.values[static_cast<Eigen::Index>(s)] - prob.source.values[static_cast<Eigen::Index>(nb)];
    }
    res[static_cast<Eigen::Index>(r)] = lhs - rhs;
    scale = std::max(scale, std::abs(rhs));
  }
  CHECK(res.cwiseAbs().maxCoeff() < 1e-9 * std::max(scale, 1.0));

  // The blend is affine: doubling both inputs doubles the output.
  Field y1 = x1, y2 = x2;
  y1.values *= 2.0;
  y2.values *= 2.0;
  const Field out2 = blend_posterior_sample(y1, y2, base.dec);
  CHECK((out2.values - 2.0 * out.values).cwiseAbs().maxCoeff() < 1e-10);
  // Zero-boundary homogeneity: a multiple of the source alone scales the interior.
  BlendProblem hom = prob;
  hom.target.values.setZero();
  const Field h1 = blend(hom);
  hom.source.values *= -3.0;
  const Field h3 = blend(hom);
  CHECK((h3.values + 3.0 * h1.values).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("cached blender, batch kernels and seam metric on random pairs") {
  const Grid g(65, 33, {0.0, 2.0, 0.0, 1.0});
  const auto dec = decompose(g, {{0.0, 1.1875, 0.0, 1.0}, {0.8125, 2.0, 0.0, 1.0}});
  const KLBasis basis = kl_decompose(g, std::sqrt(0.5), 1.5, 0.95, 1.0);
  const auto nk = static_cast<Eigen::Index>(basis.n_kl());
  Rng rng(100);
  std::vector<Field> x1, x2;
  for (int s = 0; s < 100; ++s) {
    x1.push_back(restrict_field(sample_field(basis, rng.normal_vector(nk)), dec.sub(1)));
    x2.push_back(restrict_field(sample_field(basis, rng.normal_vector(nk)), dec.sub(2)));
  }
  const PoissonBlender blender(dec);
  const auto serial = blender.blend_batch(x1, x2, Exec::serial);
  const auto parallel = blender.blend_batch(x1, x2, Exec::parallel);
  std::size_t ok = 0;
  for (std::size_t k = 0; k < x1.size(); ++k) {
    CHECK(serial[k].values == parallel[k].values);
    const Field once = blend_posterior_sample(x1[k], x2[k], dec);
    CHECK((once.values - serial[k].values).cwiseAbs().maxCoeff() < 1e-12);
    const Field st = stitch_fields({x1[k], x2[k]}, dec);
    ok += seam_jump(serial[k], dec) <= seam_jump(st, dec);
  }
  CHECK(ok == x1.size());
  CHECK_THROWS(blender.blend_batch(x1, {}, Exec::serial));
}
