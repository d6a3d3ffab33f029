#include "ddvae/blend.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddvae {

namespace {

// True when (i, j) lies on an edge of `box` that is not part of the global boundary.
bool on_inner_edge(const NodeBox &box, const Grid &g, std::size_t i, std::size_t j) {
  return (i == box.i0 && box.i0 != 0) || (i == box.i1 && box.i1 != g.nx() - 1) ||
         (j == box.j0 && box.j0 != 0) || (j == box.j1 && box.j1 != g.ny() - 1);
}

const Grid &check_local(const Field &x, const Subdomain &sub, const char *name) {
  if (!(x.grid == sub.local_grid))
    throw std::invalid_argument(std::string("build_blend_problem: ") + name +
                                " is not on its subdomain grid");
  return x.grid;
}

}  // namespace

std::vector<std::size_t> BlendGeometry::neighbors(std::size_t node) const {
  std::vector<std::size_t> out;
  const auto i = grid.i_of(node), j = grid.j_of(node);
  if (i > 0) out.push_back(node - 1);
  if (i + 1 < grid.nx()) out.push_back(node + 1);
  if (j > 0) out.push_back(node - grid.nx());
  if (j + 1 < grid.ny()) out.push_back(node + grid.nx());
  return out;
}

BlendGeometry blend_geometry(const Decomposition &dec) {
  if (dec.size() != 2)
    throw std::invalid_argument("blend_geometry: blending needs exactly two subdomains");
  const Grid &g = dec.grid;
  const Subdomain &a = dec.sub(1), &b = dec.sub(2);
  NodeBox ov{std::max(a.box.i0, b.box.i0), std::min(a.box.i1, b.box.i1),
             std::max(a.box.j0, b.box.j0), std::min(a.box.j1, b.box.j1)};
  if (ov.i0 >= ov.i1 || ov.j0 >= ov.j1)
    throw std::invalid_argument("blend_geometry: subdomains do not overlap");

  BlendGeometry geo;
  geo.grid = g;
  const std::size_t n = g.size();
  geo.slot.assign(n, -1);
  geo.owner.assign(n, 0);
  geo.in_overlap.assign(n, 0);
  for (std::size_t node = 0; node < n; ++node) {
    const auto i = g.i_of(node), j = g.j_of(node);
    const bool in_a = a.box.contains(i, j), in_b = b.box.contains(i, j);
    if (in_a && in_b) {
      geo.in_overlap[node] = 1;
      const bool edge_a = on_inner_edge(a.box, g, i, j), edge_b = on_inner_edge(b.box, g, i, j);
      if (!on_inner_edge(ov, g, i, j)) {
        geo.slot[node] = static_cast<Eigen::Index>(geo.omega.size());
        geo.omega.push_back(node);
      } else {
        geo.owner[node] = (edge_a && !edge_b) ? 2 : 1;
      }
    } else {
      geo.owner[node] = in_a ? 1 : 2;
    }
  }
  if (geo.omega.empty()) throw std::invalid_argument("blend_geometry: empty blending region");
  for (std::size_t node = 0; node < n; ++node) {
    if (geo.in_omega(node)) continue;
    for (auto nb : geo.neighbors(node))
      if (geo.in_omega(nb)) {
        geo.boundary.push_back(node);
        break;
      }
  }
  if (geo.boundary.empty())
    throw std::invalid_argument("blend_geometry: blending region has no Dirichlet boundary");
  return geo;
}

BlendProblem build_blend_problem(const Field &x1, const Field &x2, const Decomposition &dec) {
  BlendProblem p;
  p.geometry = blend_geometry(dec);
  const Grid &g = dec.grid;
  const Subdomain &a = dec.sub(1), &b = dec.sub(2);
  check_local(x1, a, "x1");
  check_local(x2, b, "x2");
  Eigen::VectorXd target = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
  Eigen::VectorXd source = target;
  for (std::size_t node = 0; node < g.size(); ++node) {
    const auto k = static_cast<Eigen::Index>(node);
    const auto i = g.i_of(node), j = g.j_of(node);
    const bool in_a = a.box.contains(i, j), in_b = b.box.contains(i, j);
    const double v1 = in_a ? x1.values[static_cast<Eigen::Index>(a.to_local(g, node))] : 0.0;
    const double v2 = in_b ? x2.values[static_cast<Eigen::Index>(b.to_local(g, node))] : 0.0;
    if (p.geometry.in_overlap[node]) source[k] = 0.5 * (v1 + v2);
    if (p.geometry.in_omega(node))
      target[k] = source[k];  // placeholder, replaced by the solve
    else
      target[k] = p.geometry.owner[node] == 1 ? v1 : v2;
  }
  p.target = Field(g, std::move(target));
  p.source = Field(g, std::move(source));
  return p;
}

SparseMatrix blend_matrix(const BlendGeometry &geo) {
  const auto m = static_cast<Eigen::Index>(geo.omega.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(geo.omega.size() * 5);
  for (std::size_t r = 0; r < geo.omega.size(); ++r) {
    const auto nbs = geo.neighbors(geo.omega[r]);
    trip.emplace_back(static_cast<int>(r), static_cast<int>(r), static_cast<double>(nbs.size()));
    for (auto nb : nbs)
      if (geo.in_omega(nb)) trip.emplace_back(static_cast<int>(r), static_cast<int>(geo.slot[nb]), -1.0);
  }
  SparseMatrix a(m, m);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

Eigen::VectorXd blend_rhs(const BlendProblem &p) {
  const auto &geo = p.geometry;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(geo.omega.size()));
  for (std::size_t r = 0; r < geo.omega.size(); ++r) {
    const std::size_t s = geo.omega[r];
    const double bs = p.source.values[static_cast<Eigen::Index>(s)];
    double acc = 0.0;
    for (auto nb : geo.neighbors(s)) {
      const auto k = static_cast<Eigen::Index>(nb);
      if (!geo.in_omega(nb)) acc += p.target.values[k];
      acc += bs - p.source.values[k];
    }
    rhs[static_cast<Eigen::Index>(r)] = acc;
  }
  return rhs;
}

namespace {

Field assemble_result(const BlendProblem &p, const Eigen::VectorXd &inner, const SparseMatrix &a,
                      const Eigen::VectorXd &rhs, double tol) {
  const double rn = rhs.norm();
  const double res = (a * inner - rhs).norm();
  if (!(res <= tol * std::max(rn, 1e-300)) && !(rn == 0.0 && res == 0.0))
    throw std::runtime_error("blend: Poisson solve residual above tolerance");
  Eigen::VectorXd out = p.target.values;
  for (std::size_t r = 0; r < p.geometry.omega.size(); ++r)
    out[static_cast<Eigen::Index>(p.geometry.omega[r])] = inner[static_cast<Eigen::Index>(r)];
  return Field(p.target.grid, std::move(out));
}

}  // namespace

Field blend(const BlendProblem &problem, double residual_tol) {
  if (problem.geometry.omega.empty() || problem.geometry.boundary.empty())
    throw std::invalid_argument("blend: blending region or its boundary is empty");
  const SparseMatrix a = blend_matrix(problem.geometry);
  Eigen::SimplicialLLT<SparseMatrix> llt(a);
  if (llt.info() != Eigen::Success) throw std::runtime_error("blend: singular Poisson operator");
  const Eigen::VectorXd rhs = blend_rhs(problem);
  return assemble_result(problem, llt.solve(rhs), a, rhs, residual_tol);
}

PoissonBlender::PoissonBlender(const Decomposition &dec, double residual_tol)
    : dec_(&dec), geometry_(blend_geometry(dec)), residual_tol_(residual_tol) {
  matrix_ = blend_matrix(geometry_);
  factor_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(matrix_);
  if (factor_->info() != Eigen::Success)
    throw std::runtime_error("PoissonBlender: singular Poisson operator");
}

Field PoissonBlender::blend(const BlendProblem &problem) const {
  if (problem.geometry.omega != geometry_.omega)
    throw std::invalid_argument("PoissonBlender: problem built for a different region");
  const Eigen::VectorXd rhs = blend_rhs(problem);
  return assemble_result(problem, factor_->solve(rhs), matrix_, rhs, residual_tol_);
}

Field PoissonBlender::blend_pair(const Field &x1, const Field &x2) const {
  return blend(build_blend_problem(x1, x2, *dec_));
}

std::vector<Field> PoissonBlender::blend_batch(const std::vector<Field> &x1,
                                               const std::vector<Field> &x2, Exec exec) const {
  if (x1.size() != x2.size())
    throw std::invalid_argument("blend_batch: sample counts of the two subdomains differ");
  std::vector<Field> out(x1.size());
  const auto n = static_cast<std::ptrdiff_t>(x1.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = blend_pair(x1[static_cast<std::size_t>(k)], x2[static_cast<std::size_t>(k)]);
    return out;
  }
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    try {
      out[static_cast<std::size_t>(k)] = blend_pair(x1[static_cast<std::size_t>(k)], x2[static_cast<std::size_t>(k)]);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

Field blend_posterior_sample(const Field &x1, const Field &x2, const Decomposition &dec) {
  return blend(build_blend_problem(x1, x2, dec));
}

double seam_jump(const Field &field, const Decomposition &dec) {
  const Grid &g = field.grid;
  if (!(g == dec.grid)) throw std::invalid_argument("seam_jump: field is not on the global grid");
  double jump = 0.0;
  auto diff = [&](std::size_t p, std::size_t q) {
    jump = std::max(jump, std::abs(field.values[static_cast<Eigen::Index>(p)] -
                                   field.values[static_cast<Eigen::Index>(q)]));
  };
  for (const auto &sub : dec.subdomains)
    for (const auto &seg : sub.interfaces) {
      if (seg.global_nodes.empty()) continue;
      const auto i0 = g.i_of(seg.global_nodes.front());
      const bool vertical = std::all_of(seg.global_nodes.begin(), seg.global_nodes.end(),
                                        [&](std::size_t n) { return g.i_of(n) == i0; });
      for (auto node : seg.global_nodes) {
        const auto i = g.i_of(node), j = g.j_of(node);
        if (vertical) {
          if (i > 0) diff(node, node - 1);
          if (i + 1 < g.nx()) diff(node, node + 1);
        } else {
          if (j > 0) diff(node, node - g.nx());
          if (j + 1 < g.ny()) diff(node, node + g.nx());
        }
      }
    }
  return jump;
}

}  // namespace ddvae
