#include "ddvae/darcy.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace ddvae {

double source_term(const Point &s, const Point &center) {
  const double d1 = center.s1 - s.s1, d2 = center.s2 - s.s2;
  return 3.0 * std::exp(-(d1 * d1 + d2 * d2));
}

ScalarFn gaussian_source(Point center) {
  return [center](const Point &s) { return source_term(s, center); };
}

SideCondition SideCondition::dirichlet(double v) {
  return {Kind::dirichlet, [v](const Point &) { return v; }};
}
SideCondition SideCondition::dirichlet(ScalarFn g) { return {Kind::dirichlet, std::move(g)}; }
SideCondition SideCondition::neumann(double flux) {
  return {Kind::neumann, [flux](const Point &) { return flux; }};
}

BoundarySpec darcy_boundary(const Grid &grid, const std::vector<double> &abscissae) {
  BoundarySpec bcs;
  for (Side s : all_sides) bcs.side(s) = SideCondition::neumann(0.0);
  const Extent &e = grid.extent();
  const double tol = 1e-9 * grid.h1();
  for (double a : abscissae) {
    if (std::abs(a - e.s1_min) <= tol) {
      bcs.side(Side::left) = SideCondition::dirichlet(0.0);
    } else if (std::abs(a - e.s1_max) <= tol) {
      bcs.side(Side::right) = SideCondition::dirichlet(0.0);
    } else {
      const std::size_t first = grid.node_at({a, e.s2_min});
      const std::size_t i = grid.i_of(first);
      for (std::size_t j = 0; j < grid.ny(); ++j) bcs.nodal.push_back({grid.index(i, j), 0.0});
    }
  }
  return bcs;
}

Eigen::Matrix4d element_stiffness(double h1, double h2, double k) {
  // Tensor products of 1D stiffness and mass matrices.
  static constexpr int ax[4] = {0, 1, 1, 0};
  static constexpr int ay[4] = {0, 0, 1, 1};
  Eigen::Matrix4d m;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const double kx = (ax[a] == ax[b] ? 1.0 : -1.0) / h1;
      const double ky = (ay[a] == ay[b] ? 1.0 : -1.0) / h2;
      const double mx = h1 / 6.0 * (ax[a] == ax[b] ? 2.0 : 1.0);
      const double my = h2 / 6.0 * (ay[a] == ay[b] ? 2.0 : 1.0);
      m(a, b) = k * (kx * my + mx * ky);
    }
  return m;
}

StiffnessSystem assemble(const Grid &grid, const Field &log_perm, const ScalarFn &source) {
  if (!(log_perm.grid == grid))
    throw std::invalid_argument("assemble: log-permeability lives on a different grid");
  const auto n = static_cast<Eigen::Index>(grid.size());
  const double h1 = grid.h1(), h2 = grid.h2();
  const Eigen::Matrix4d unit = element_stiffness(h1, h2, 1.0);

  static const double gp = 1.0 / std::sqrt(3.0);
  static constexpr double gq[2] = {-1.0, 1.0};

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve((grid.nx() - 1) * (grid.ny() - 1) * 16);
  Eigen::VectorXd load = Eigen::VectorXd::Zero(n);

  for (std::size_t j = 0; j + 1 < grid.ny(); ++j)
    for (std::size_t i = 0; i + 1 < grid.nx(); ++i) {
      const std::size_t node[4] = {grid.index(i, j), grid.index(i + 1, j),
                                   grid.index(i + 1, j + 1), grid.index(i, j + 1)};
      double xc = 0.0;
      for (auto nd : node) xc += log_perm.values[static_cast<Eigen::Index>(nd)];
      const double k = std::exp(0.25 * xc);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          trip.emplace_back(static_cast<int>(node[a]), static_cast<int>(node[b]), k * unit(a, b));

      if (source) {
        const Point o = grid.location(i, j);
        for (double qx : gq)
          for (double qy : gq) {
            const double xi = qx * gp, eta = qy * gp;  // reference coords in [-1,1]
            const Point p{o.s1 + 0.5 * (1.0 + xi) * h1, o.s2 + 0.5 * (1.0 + eta) * h2};
            const double f = source(p) * 0.25 * h1 * h2;
            const double phi[4] = {0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
                                   0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
            for (int a = 0; a < 4; ++a) load[static_cast<Eigen::Index>(node[a])] += f * phi[a];
          }
      }
    }
  StiffnessSystem sys;
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(trip.begin(), trip.end());
  sys.load = std::move(load);
  return sys;
}

namespace {

// Adds the Neumann flux contribution of one boundary side to the load.
void add_neumann(const Grid &grid, Side side, const ScalarFn &flux, Eigen::VectorXd &load) {
  const auto nodes = grid.side_nodes(side);
  static const double gp = 1.0 / std::sqrt(3.0);
  for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
    const Point a = grid.location(nodes[e]), b = grid.location(nodes[e + 1]);
    const double len = distance(a, b);
    for (double q : {-gp, gp}) {
      const double t = 0.5 * (1.0 + q);
      const Point p{a.s1 + t * (b.s1 - a.s1), a.s2 + t * (b.s2 - a.s2)};
      const double g = flux(p) * 0.5 * len;
      load[static_cast<Eigen::Index>(nodes[e])] += g * (1.0 - t);
      load[static_cast<Eigen::Index>(nodes[e + 1])] += g * t;
    }
  }
}

}  // namespace

LinearSystem apply_boundary(const Grid &grid, const StiffnessSystem &system,
                            const BoundarySpec &bcs) {
  const std::size_t n = grid.size();
  Eigen::VectorXd load = system.load;
  for (Side s : all_sides) {
    const auto &c = bcs.side(s);
    if (c.kind == SideCondition::Kind::neumann && c.value) add_neumann(grid, s, c.value, load);
  }

  // Collect Dirichlet values and check consistency.
  std::vector<char> fixed(n, 0);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  const auto fix = [&](std::size_t node, double v) {
    if (fixed[node] && std::abs(value[static_cast<Eigen::Index>(node)] - v) >
                           1e-12 * (1.0 + std::abs(v)))
      throw std::invalid_argument("apply_boundary: conflicting Dirichlet values at node " +
                                  std::to_string(node));
    fixed[node] = 1;
    value[static_cast<Eigen::Index>(node)] = v;
  };
  for (Side s : all_sides) {
    const auto &c = bcs.side(s);
    if (c.kind != SideCondition::Kind::dirichlet) continue;
    if (!c.value) throw std::invalid_argument("apply_boundary: Dirichlet side without a value");
    for (auto node : grid.side_nodes(s)) fix(node, c.value(grid.location(node)));
  }
  for (const auto &nd : bcs.nodal) {
    if (nd.node >= n) throw std::invalid_argument("apply_boundary: nodal Dirichlet node out of range");
    fix(nd.node, nd.value);
  }

  LinearSystem out;
  std::vector<Eigen::Index> slot(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    if (fixed[k]) {
      out.fixed_nodes.push_back(k);
    } else {
      slot[k] = static_cast<Eigen::Index>(out.free_nodes.size());
      out.free_nodes.push_back(k);
    }
  }
  if (out.fixed_nodes.empty())
    throw std::invalid_argument("apply_boundary: no Dirichlet data, system is singular");
  out.fixed_values.resize(static_cast<Eigen::Index>(out.fixed_nodes.size()));
  for (std::size_t k = 0; k < out.fixed_nodes.size(); ++k)
    out.fixed_values[static_cast<Eigen::Index>(k)] = value[static_cast<Eigen::Index>(out.fixed_nodes[k])];

  const auto nf = static_cast<Eigen::Index>(out.free_nodes.size());
  out.rhs.resize(nf);
  for (Eigen::Index r = 0; r < nf; ++r) out.rhs[r] = load[static_cast<Eigen::Index>(out.free_nodes[static_cast<std::size_t>(r)])];
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(system.matrix.nonZeros()));
  for (int col = 0; col < system.matrix.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(system.matrix, col); it; ++it) {
      const auto r = static_cast<std::size_t>(it.row()), c = static_cast<std::size_t>(it.col());
      if (fixed[r]) continue;
      if (fixed[c]) {
        out.rhs[slot[r]] -= it.value() * value[static_cast<Eigen::Index>(c)];
      } else {
        trip.emplace_back(static_cast<int>(slot[r]), static_cast<int>(slot[c]), it.value());
      }
    }
  out.matrix.resize(nf, nf);
  out.matrix.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Eigen::VectorXd solve_reduced(const LinearSystem &sys, const SolveOptions &opts) {
  if (sys.matrix.rows() == 0) return Eigen::VectorXd(0);
  Eigen::VectorXd u;
  if (opts.solver == LinearSolverKind::direct) {
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt(sys.matrix);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("solve: Cholesky factorization failed (matrix not SPD)");
    u = llt.solve(sys.rhs);
  } else {
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>> cg;
    cg.setTolerance(std::min(1e-13, 0.01 * opts.residual_tol));
    cg.setMaxIterations(10 * static_cast<Eigen::Index>(sys.matrix.rows()) + 100);
    cg.compute(sys.matrix);
    u = cg.solve(sys.rhs);
    if (cg.info() != Eigen::Success && cg.info() != Eigen::NoConvergence)
      throw std::runtime_error("solve: conjugate gradient setup failed");
  }
  const double rn = sys.rhs.norm();
  const double res = (sys.matrix * u - sys.rhs).norm();
  const double rel = rn > 0.0 ? res / rn : res;
  if (!(rel <= opts.residual_tol))
    throw std::runtime_error("solve: relative residual " + std::to_string(rel) +
                             " exceeds tolerance");
  return u;
}

Field solve_forward(const Grid &grid, const Field &log_perm, const BoundarySpec &bcs,
                    const ScalarFn &source, const SolveOptions &opts) {
  const StiffnessSystem full = assemble(grid, log_perm, source);
  const LinearSystem sys = apply_boundary(grid, full, bcs);
  const Eigen::VectorXd uf = solve_reduced(sys, opts);
  Eigen::VectorXd u(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < sys.free_nodes.size(); ++k)
    u[static_cast<Eigen::Index>(sys.free_nodes[k])] = uf[static_cast<Eigen::Index>(k)];
  for (std::size_t k = 0; k < sys.fixed_nodes.size(); ++k)
    u[static_cast<Eigen::Index>(sys.fixed_nodes[k])] = sys.fixed_values[static_cast<Eigen::Index>(k)];
  return Field(grid, std::move(u));
}

BoundarySpec local_boundary(const Decomposition &dec, const Subdomain &sub,
                            const std::map<int, Eigen::VectorXd> &interface_values,
                            const BoundarySpec &global_bcs) {
  BoundarySpec local;
  for (Side s : all_sides) {
    if (sub.external[static_cast<std::size_t>(s)])
      local.side(s) = global_bcs.side(s);
    else
      local.side(s) = SideCondition::neumann(0.0);  // covered node-wise by interfaces
  }
  for (const auto &nd : global_bcs.nodal)
    if (sub.contains_global(dec.grid, nd.node))
      local.nodal.push_back({sub.to_local(dec.grid, nd.node), nd.value});
  for (const auto &seg : sub.interfaces) {
    const auto it = interface_values.find(seg.neighbor);
    if (it == interface_values.end())
      throw std::invalid_argument("solve_local_forward: missing interface data for neighbor " +
                                  std::to_string(seg.neighbor) + " of subdomain " +
                                  std::to_string(sub.index));
    if (static_cast<std::size_t>(it->second.size()) != seg.local_nodes.size())
      throw std::invalid_argument("solve_local_forward: interface value count mismatch");
    for (std::size_t k = 0; k < seg.local_nodes.size(); ++k)
      local.nodal.push_back({seg.local_nodes[k], it->second[static_cast<Eigen::Index>(k)]});
  }
  return local;
}

Field solve_local_forward(const Decomposition &dec, const Subdomain &sub,
                          const Field &local_log_perm,
                          const std::map<int, Eigen::VectorXd> &interface_values,
                          const BoundarySpec &global_bcs, const ScalarFn &source,
                          const SolveOptions &opts) {
  if (!(local_log_perm.grid == sub.local_grid))
    throw std::invalid_argument("solve_local_forward: local field is not on the subdomain grid");
  return solve_forward(sub.local_grid, local_log_perm,
                       local_boundary(dec, sub, interface_values, global_bcs), source, opts);
}

std::map<int, Eigen::VectorXd> interface_traces(const Field &global_state, const Subdomain &sub) {
  std::map<int, Eigen::VectorXd> out;
  for (const auto &seg : sub.interfaces) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(seg.global_nodes.size()));
    for (std::size_t k = 0; k < seg.global_nodes.size(); ++k)
      v[static_cast<Eigen::Index>(k)] = global_state.values[static_cast<Eigen::Index>(seg.global_nodes[k])];
    out.emplace(seg.neighbor, std::move(v));
  }
  return out;
}

Eigen::VectorXd observe(const Field &state, const std::vector<Sensor> &sensors) {
  const Grid &g = state.grid;
  Eigen::VectorXd out(static_cast<Eigen::Index>(sensors.size()));
  for (std::size_t t = 0; t < sensors.size(); ++t) {
    const auto &s = sensors[t];
    if (s.node >= g.size())
      throw std::invalid_argument("observe: sensor node out of range");
    const Point p = g.location(s.node);
    if (std::abs(p.s1 - s.location.s1) > 1e-9 * g.h1() ||
        std::abs(p.s2 - s.location.s2) > 1e-9 * g.h2())
      throw std::invalid_argument("observe: sensor does not sit on its grid node");
    out[static_cast<Eigen::Index>(t)] = state.values[static_cast<Eigen::Index>(s.node)];
  }
  return out;
}

}  // namespace ddvae
