#include "ddvae/darcy.hpp"
#include "ddvae/random_field.hpp"
#include "ddvae/rng.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

using namespace ddvae;

namespace {

// Element stiffness by 3x3 Gauss quadrature of grad(phi_a) . grad(phi_b).
Eigen::Matrix4d quadrature_stiffness(double h1, double h2, double k) {
  const double q[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  const double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double sx[4] = {-1, 1, 1, -1}, sy[4] = {-1, -1, 1, 1};
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const double xi = q[a], eta = q[b];
      double gx[4], gy[4];
      for (int n = 0; n < 4; ++n) {
        gx[n] = 0.25 * sx[n] * (1 + sy[n] * eta) * 2.0 / h1;
        gy[n] = 0.25 * sy[n] * (1 + sx[n] * xi) * 2.0 / h2;
      }
      const double jw = w[a] * w[b] * 0.25 * h1 * h2;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) += jw * k * (gx[r] * gx[c] + gy[r] * gy[c]);
    }
  return m;
}

// Manufactured pair u = sin(pi s1 / 2) cos(pi s2), x = 0.3 sin(s1) cos(s2):
// u vanishes at s1 = 0, 2 and has zero normal flux at s2 = 0, 1.
double mms_u(const Point &p) { return std::sin(0.5 * std::numbers::pi * p.s1) * std::cos(std::numbers::pi * p.s2); }
double mms_x(const Point &p) { return 0.3 * std::sin(p.s1) * std::cos(p.s2); }
double mms_f(const Point &p) {
  const double pi = std::numbers::pi;
  const double k = std::exp(mms_x(p));
  const double kx = k * 0.3 * std::cos(p.s1) * std::cos(p.s2);
  const double ky = -k * 0.3 * std::sin(p.s1) * std::sin(p.s2);
  const double ux = 0.5 * pi * std::cos(0.5 * pi * p.s1) * std::cos(pi * p.s2);
  const double uy = -pi * std::sin(0.5 * pi * p.s1) * std::sin(pi * p.s2);
  const double lap = -(0.25 * pi * pi + pi * pi) * mms_u(p);
  return -(k * lap + kx * ux + ky * uy);
}

double mms_error(std::size_t nx, std::size_t ny) {
  const Grid g(nx, ny, {0.0, 2.0, 0.0, 1.0});
  Eigen::VectorXd x(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k) x[static_cast<Eigen::Index>(k)] = mms_x(g.location(k));
  const Field u = solve_forward(g, Field(g, x), darcy_boundary(g, {0.0, 2.0}), mms_f);
  double err = 0.0, norm = 0.0;
  const Eigen::VectorXd w = g.quadrature_weights();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double e = u.values[static_cast<Eigen::Index>(k)] - mms_u(g.location(k));
    err += w[static_cast<Eigen::Index>(k)] * e * e;
    norm += w[static_cast<Eigen::Index>(k)] * mms_u(g.location(k)) * mms_u(g.location(k));
  }
  return std::sqrt(err / norm);
}

}  // namespace

TEST_CASE("gaussian source") {
  CHECK(source_term({1.0, 0.5}, {1.0, 0.5}) == doctest::Approx(3.0));
  CHECK(source_term({0.0, 0.5}, {1.0, 0.5}) == doctest::Approx(3.0 * std::exp(-1.0)));
  CHECK(gaussian_source({0.0, 0.0})({1.0, 1.0}) == doctest::Approx(3.0 * std::exp(-2.0)));
}

TEST_CASE("element stiffness matches Gauss quadrature of the bilinear basis") {
  for (auto [h1, h2, k] : {std::tuple{0.25, 0.5, 1.0}, {0.1, 0.03, 2.7}, {1.0, 1.0, 0.4}}) {
    const Eigen::Matrix4d a = element_stiffness(h1, h2, k);
    const Eigen::Matrix4d b = quadrature_stiffness(h1, h2, k);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12 * b.cwiseAbs().maxCoeff());
    CHECK(a.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12 * k / std::min(h1, h2));
    CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  // Square cell, unit coefficient: textbook diagonal 2/3 and opposite corner -1/3.
  const Eigen::Matrix4d s = element_stiffness(1.0, 1.0, 1.0);
  CHECK(s(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(s(0, 1) == doctest::Approx(-1.0 / 6.0));
  CHECK(s(0, 2) == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("global assembly matches an element-by-element quadrature loop") {
  const Grid g(5, 4, {0.0, 2.0, 0.0, 1.0});
  Rng rng(5);
  const Field x(g, 0.5 * rng.normal_vector(static_cast<Eigen::Index>(g.size())));
  const ScalarFn f = gaussian_source({1.0, 0.5});
  const StiffnessSystem sys = assemble(g, x, f);

  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd load = Eigen::VectorXd::Zero(n);
  const double q[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  const double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  for (std::size_t j = 0; j + 1 < g.ny(); ++j)
    for (std::size_t i = 0; i + 1 < g.nx(); ++i) {
      const std::size_t nd[4] = {g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1)};
      double mean = 0.0;
      for (auto v : nd) mean += 0.25 * x.values[static_cast<Eigen::Index>(v)];
      const Eigen::Matrix4d ke = quadrature_stiffness(g.h1(), g.h2(), std::exp(mean));
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) dense(static_cast<Eigen::Index>(nd[a]), static_cast<Eigen::Index>(nd[b])) += ke(a, b);
      // Load with 3x3 Gauss; the operator uses 2x2, so compare loosely.
      const Point o = g.location(i, j);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const double xi = q[a], eta = q[b];
          const double val = f({o.s1 + 0.5 * (1 + xi) * g.h1(), o.s2 + 0.5 * (1 + eta) * g.h2()}) * w[a] * w[b] *
                             0.25 * g.h1() * g.h2();
          const double phi[4] = {0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
                                 0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
          for (int c = 0; c < 4; ++c) load[static_cast<Eigen::Index>(nd[c])] += val * phi[c];
        }
    }
  CHECK((Eigen::MatrixXd(sys.matrix) - dense).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((sys.load - load).cwiseAbs().maxCoeff() < 1e-3 * load.cwiseAbs().maxCoeff());
  // Integral of the source equals the sum of the load vector.
  CHECK(sys.load.sum() == doctest::Approx(load.sum()).epsilon(1e-3));
}

TEST_CASE("boundary handling") {
  const Grid g(9, 5, {0.0, 2.0, 0.0, 1.0});
  const BoundarySpec bcs = darcy_boundary(g, {0.0, 2.0});
  CHECK(bcs.side(Side::left).kind == SideCondition::Kind::dirichlet);
  CHECK(bcs.side(Side::right).kind == SideCondition::Kind::dirichlet);
  CHECK(bcs.side(Side::top).kind == SideCondition::Kind::neumann);
  CHECK(bcs.nodal.empty());
  const BoundarySpec inner = darcy_boundary(g, {0.0, 1.5});
  CHECK(inner.nodal.size() == 5);
  CHECK(g.i_of(inner.nodal.front().node) == 6);
  CHECK_THROWS(darcy_boundary(g, {1.3}));

  const Field zero = Field::constant(g, 0.0);
  const Field u = solve_forward(g, zero, bcs, gaussian_source());
  for (auto n : g.side_nodes(Side::left)) CHECK(u.values[static_cast<Eigen::Index>(n)] == 0.0);
  for (auto n : g.side_nodes(Side::right)) CHECK(u.values[static_cast<Eigen::Index>(n)] == 0.0);
  CHECK(u.values.maxCoeff() > 0.0);

  BoundarySpec none;
  CHECK_THROWS(solve_forward(g, zero, none, gaussian_source()));
  BoundarySpec clash = bcs;
  clash.nodal.push_back({0, 1.0});
  CHECK_THROWS(solve_forward(g, zero, clash, gaussian_source()));
}

TEST_CASE("constant coefficient with linear Dirichlet data is reproduced exactly") {
  const Grid g(9, 5, {0.0, 2.0, 0.0, 1.0});
  BoundarySpec bcs;
  for (Side s : all_sides) bcs.side(s) = SideCondition::dirichlet([](const Point &p) { return 1.0 + 2.0 * p.s1 - p.s2; });
  const Field u = solve_forward(g, Field::constant(g, 0.7), bcs, nullptr);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Point p = g.location(k);
    CHECK(u.values[static_cast<Eigen::Index>(k)] == doctest::Approx(1.0 + 2.0 * p.s1 - p.s2).epsilon(1e-10));
  }
  // Neumann flux data: u = s1 with k = 1 has outward flux -1 on the left, +1 on the right.
  BoundarySpec nm;
  nm.side(Side::left) = SideCondition::dirichlet(0.0);
  nm.side(Side::right) = SideCondition::neumann(1.0);
  nm.side(Side::bottom) = SideCondition::neumann(0.0);
  nm.side(Side::top) = SideCondition::neumann(0.0);
  const Field v = solve_forward(g, Field::constant(g, 0.0), nm, nullptr);
  for (std::size_t k = 0; k < g.size(); ++k)
    CHECK(v.values[static_cast<Eigen::Index>(k)] == doctest::Approx(g.location(k).s1).epsilon(1e-10));
}

TEST_CASE("manufactured solution converges at second order") {
  const double e1 = mms_error(17, 9), e2 = mms_error(33, 17), e3 = mms_error(65, 33);
  CHECK(e2 < e1);
  CHECK(e3 < e2);
  const double r1 = std::log2(e1 / e2), r2 = std::log2(e2 / e3);
  CHECK(r1 > 1.8);
  CHECK(r1 < 2.2);
  CHECK(r2 > 1.8);
  CHECK(r2 < 2.2);
}

TEST_CASE("direct and CG solvers agree and satisfy the residual bound") {
  const Grid g(33, 17, {0.0, 2.0, 0.0, 1.0});
  Rng rng(8);
  const KLBasis basis = kl_decompose(g, std::sqrt(0.5), 1.2, 0.95, 1.0);
  const Field x = sample_field(basis, rng.normal_vector(static_cast<Eigen::Index>(basis.n_kl())));
  const BoundarySpec bcs = darcy_boundary(g, {0.0, 2.0});
  SolveOptions cg;
  cg.solver = LinearSolverKind::cg;
  const Field a = solve_forward(g, x, bcs, gaussian_source());
  const Field b = solve_forward(g, x, bcs, gaussian_source(), cg);
  CHECK((a.values - b.values).norm() <= 1e-8 * a.values.norm());

  const LinearSystem sys = apply_boundary(g, assemble(g, x, gaussian_source()), bcs);
  const Eigen::VectorXd u = solve_reduced(sys);
  CHECK((sys.matrix * u - sys.rhs).norm() <= 1e-10 * sys.rhs.norm());
  // Maximum principle for a positive source with zero Dirichlet data.
  CHECK(a.values.minCoeff() >= -1e-12);
}

TEST_CASE("local solves with exact interface traces reproduce the global state") {
  const Grid g(33, 17, {0.0, 2.0, 0.0, 1.0});
  const auto dec = decompose(g, {{0.0, 1.1875, 0.0, 1.0}, {0.8125, 2.0, 0.0, 1.0}});
  Rng rng(2);
  const KLBasis basis = kl_decompose(g, std::sqrt(0.5), 1.5, 0.95, 1.0);
  const Field x = sample_field(basis, rng.normal_vector(static_cast<Eigen::Index>(basis.n_kl())));
  const BoundarySpec bcs = darcy_boundary(g, {0.0, 2.0});
  const Field u = solve_forward(g, x, bcs, gaussian_source());
  for (const auto &sub : dec.subdomains) {
    const auto traces = interface_traces(u, sub);
    REQUIRE(traces.size() == 1);
    const Field ul = solve_local_forward(dec, sub, restrict_field(x, sub), traces, bcs, gaussian_source());
    const Field ref = restrict_field(u, sub);
    CHECK((ul.values - ref.values).cwiseAbs().maxCoeff() < 1e-10 * ref.values.cwiseAbs().maxCoeff());
    for (std::size_t k = 0; k < sub.interfaces[0].local_nodes.size(); ++k)
      CHECK(ul.values[static_cast<Eigen::Index>(sub.interfaces[0].local_nodes[k])] ==
            traces.begin()->second[static_cast<Eigen::Index>(k)]);
  }
  CHECK_THROWS(solve_local_forward(dec, dec.sub(1), restrict_field(x, dec.sub(1)), {}, bcs, gaussian_source()));
}

TEST_CASE("observe reads nodal values in sensor order") {
  const Grid g(9, 5, {0.0, 2.0, 0.0, 1.0});
  const Field f(g, Eigen::VectorXd::LinSpaced(45, 0.0, 44.0));
  const std::vector<Sensor> s{{10, g.location(10)}, {3, g.location(3)}};
  const Eigen::VectorXd v = observe(f, s);
  CHECK(v[0] == 10.0);
  CHECK(v[1] == 3.0);
  CHECK_THROWS(observe(f, {{3, g.location(4)}}));
  CHECK_THROWS(observe(f, {{100, {}}}));
}
