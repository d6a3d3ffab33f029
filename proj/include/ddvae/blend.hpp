#pragma once

#include "ddvae/darcy.hpp"
#include "ddvae/grid.hpp"
#include "ddvae/parallel.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCholesky>

#include <memory>
#include <vector>

namespace ddvae {

/// Node classification for blending two overlapping subdomains on the
/// global grid C.
///
/// Omega is the overlap minus the interface lines; nodes of Omega on the
/// outer boundary of C are kept and simply have fewer neighbours. The
/// boundary set holds the nodes outside Omega with a 4-neighbour inside it.
struct BlendGeometry {
  Grid grid;
  std::vector<std::size_t> omega;
  std::vector<std::size_t> boundary;
  std::vector<Eigen::Index> slot;  // position in omega, -1 outside
  /// Subdomain (1 or 2) whose local field supplies the target outside Omega.
  std::vector<int> owner;
  /// Overlap nodes, where the source B is defined.
  std::vector<char> in_overlap;

  bool in_omega(std::size_t node) const { return slot[node] >= 0; }
  /// 4-neighbours of a node inside C.
  std::vector<std::size_t> neighbors(std::size_t node) const;
};

BlendGeometry blend_geometry(const Decomposition &dec);

/// Target I* (x1 / x2 outside Omega, the owner's value on interface lines)
/// and source B = (x1 + x2) / 2 on the overlap; both as global fields, with
/// B zero away from the overlap.
struct BlendProblem {
  BlendGeometry geometry;
  Field target;
  Field source;
};

BlendProblem build_blend_problem(const Field &x1, const Field &x2, const Decomposition &dec);

/// Discrete Poisson operator on Omega: |N_s| on the diagonal and -1 for each
/// neighbour inside Omega.
SparseMatrix blend_matrix(const BlendGeometry &geometry);
/// Right-hand side: target values on neighbouring boundary nodes plus the
/// guidance sum over all neighbours of B(s) - B(s').
Eigen::VectorXd blend_rhs(const BlendProblem &problem);

/// One-off solve; returns I* outside Omega and the Poisson solution inside.
Field blend(const BlendProblem &problem, double residual_tol = 1e-10);

/// Caches the factorization of the Omega operator for one decomposition and
/// reuses it for every sample.
class PoissonBlender {
public:
  explicit PoissonBlender(const Decomposition &dec, double residual_tol = 1e-10);

  const BlendGeometry &geometry() const { return geometry_; }
  Field blend(const BlendProblem &problem) const;
  Field blend_pair(const Field &x1, const Field &x2) const;
  std::vector<Field> blend_batch(const std::vector<Field> &x1, const std::vector<Field> &x2,
                                 Exec exec = Exec::parallel) const;

private:
  const Decomposition *dec_;
  BlendGeometry geometry_;
  SparseMatrix matrix_;
  std::shared_ptr<Eigen::SimplicialLLT<SparseMatrix>> factor_;
  double residual_tol_;
};

Field blend_posterior_sample(const Field &x1, const Field &x2, const Decomposition &dec);

/// Largest absolute first difference of the field across every interface
/// line, taken on both sides of each line node.
double seam_jump(const Field &field, const Decomposition &dec);

}  // namespace ddvae
