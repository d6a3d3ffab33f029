#pragma once

#include "ddvae/grid.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <functional>
#include <map>
#include <vector>

namespace ddvae {

using ScalarFn = std::function<double(const Point &)>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// 3 exp(-|center - s|^2), the contaminant source.
double source_term(const Point &s, const Point &center);
ScalarFn gaussian_source(Point center = {1.0, 0.5});

struct SideCondition {
  enum class Kind { dirichlet, neumann };
  Kind kind = Kind::neumann;
  ScalarFn value;  // Dirichlet value g, or outward flux exp(x) grad u . n

  static SideCondition dirichlet(double v);
  static SideCondition dirichlet(ScalarFn g);
  static SideCondition neumann(double flux = 0.0);
};

struct NodalDirichlet {
  std::size_t node = 0;
  double value = 0.0;
};

/// Boundary data for one rectangle: one condition per side plus node-wise
/// Dirichlet values (interior node lines, interface traces). Dirichlet wins
/// over Neumann at shared corners; two different Dirichlet values on one node
/// are rejected.
struct BoundarySpec {
  std::array<SideCondition, 4> sides{};  // indexed by Side
  std::vector<NodalDirichlet> nodal;

  SideCondition &side(Side s) { return sides[static_cast<std::size_t>(s)]; }
  const SideCondition &side(Side s) const { return sides[static_cast<std::size_t>(s)]; }
};

/// Zero Dirichlet on the vertical node lines at the given abscissae (left or
/// right edge, or an interior line), zero-flux Neumann everywhere else.
BoundarySpec darcy_boundary(const Grid &grid, const std::vector<double> &dirichlet_abscissae);

/// Bilinear element stiffness for coefficient k on an h1 x h2 cell.
/// Local node order: (0,0), (1,0), (1,1), (0,1).
Eigen::Matrix4d element_stiffness(double h1, double h2, double k);

/// Unconstrained Galerkin system: stiffness of -div(exp(x) grad u) and load.
struct StiffnessSystem {
  SparseMatrix matrix;
  Eigen::VectorXd load;
};
StiffnessSystem assemble(const Grid &grid, const Field &log_perm, const ScalarFn &source);

/// System over free nodes after Dirichlet elimination.
struct LinearSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
  std::vector<std::size_t> free_nodes;
  std::vector<std::size_t> fixed_nodes;
  Eigen::VectorXd fixed_values;
};
LinearSystem apply_boundary(const Grid &grid, const StiffnessSystem &system,
                            const BoundarySpec &bcs);

enum class LinearSolverKind { direct, cg };

struct SolveOptions {
  LinearSolverKind solver = LinearSolverKind::direct;
  double residual_tol = 1e-10;
};

/// Solves the reduced system; throws on a singular system or if the relative
/// residual exceeds the tolerance.
Eigen::VectorXd solve_reduced(const LinearSystem &sys, const SolveOptions &opts = {});

Field solve_forward(const Grid &grid, const Field &log_perm, const BoundarySpec &bcs,
                    const ScalarFn &source, const SolveOptions &opts = {});

/// Boundary data of subdomain `sub`: external sides inherit the global
/// conditions, interface nodes take the supplied Dirichlet values (ordered as
/// the segment's nodes).
BoundarySpec local_boundary(const Decomposition &dec, const Subdomain &sub,
                            const std::map<int, Eigen::VectorXd> &interface_values,
                            const BoundarySpec &global_bcs);

Field solve_local_forward(const Decomposition &dec, const Subdomain &sub,
                          const Field &local_log_perm,
                          const std::map<int, Eigen::VectorXd> &interface_values,
                          const BoundarySpec &global_bcs, const ScalarFn &source,
                          const SolveOptions &opts = {});

/// Exact interface traces of a global state, for every interface of `sub`.
std::map<int, Eigen::VectorXd> interface_traces(const Field &global_state, const Subdomain &sub);

/// Nodal state values at the sensors, in sensor order.
Eigen::VectorXd observe(const Field &state, const std::vector<Sensor> &sensors);

}  // namespace ddvae
