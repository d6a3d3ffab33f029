#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace ddvae {

struct Point {
  double s1 = 0.0;
  double s2 = 0.0;
};

double distance(const Point &a, const Point &b);

/// Axis-aligned rectangle [s1_min, s1_max] x [s2_min, s2_max].
struct Extent {
  double s1_min = 0.0;
  double s1_max = 1.0;
  double s2_min = 0.0;
  double s2_max = 1.0;

  double width() const { return s1_max - s1_min; }
  double height() const { return s2_max - s2_min; }
  double area() const { return width() * height(); }
  double diagonal() const;
  /// Closed-rectangle membership with a small absolute slack.
  bool contains(const Point &p, double tol = 1e-12) const;

  friend bool operator==(const Extent &, const Extent &) = default;
};

/// Index box of grid nodes, inclusive on both ends.
struct NodeBox {
  std::size_t i0 = 0, i1 = 0;
  std::size_t j0 = 0, j1 = 0;

  std::size_t nx() const { return i1 - i0 + 1; }
  std::size_t ny() const { return j1 - j0 + 1; }
  bool contains(std::size_t i, std::size_t j) const {
    return i >= i0 && i <= i1 && j >= j0 && j <= j1;
  }
  friend bool operator==(const NodeBox &, const NodeBox &) = default;
};

enum class Side { left = 0, right = 1, bottom = 2, top = 3 };
inline constexpr std::array<Side, 4> all_sides{Side::left, Side::right,
                                               Side::bottom, Side::top};
std::string to_string(Side side);

/// Uniform rectangular node lattice.
///
/// Nodes are numbered row-major with s1 varying fastest:
/// flat index = j * nx + i for node (i, j) at (s1_min + i*h1, s2_min + j*h2).
class Grid {
public:
  Grid() = default;
  Grid(std::size_t nx, std::size_t ny, Extent extent);

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return nx_ * ny_; }
  const Extent &extent() const { return extent_; }
  double h1() const { return h1_; }
  double h2() const { return h2_; }

  std::size_t index(std::size_t i, std::size_t j) const { return j * nx_ + i; }
  std::size_t i_of(std::size_t idx) const { return idx % nx_; }
  std::size_t j_of(std::size_t idx) const { return idx / nx_; }
  Point location(std::size_t i, std::size_t j) const;
  Point location(std::size_t idx) const { return location(i_of(idx), j_of(idx)); }

  bool on_side(std::size_t idx, Side side) const;
  bool on_boundary(std::size_t idx) const;
  /// Node indices along one side, in increasing flat-index order.
  std::vector<std::size_t> side_nodes(Side side) const;

  /// Nearest node to a location; throws if the point lies outside the extent.
  std::size_t nearest_node(const Point &p) const;
  /// Node exactly at p (within 1e-9 of the spacing); throws otherwise.
  std::size_t node_at(const Point &p) const;

  /// Trapezoidal quadrature weights (cell area, halved on edges, quartered
  /// on corners). They sum to the domain area.
  Eigen::VectorXd quadrature_weights() const;

  /// Sub-grid covering a node box of this grid.
  Grid subgrid(const NodeBox &box) const;

  friend bool operator==(const Grid &a, const Grid &b) {
    return a.nx_ == b.nx_ && a.ny_ == b.ny_ && a.extent_ == b.extent_;
  }

private:
  std::size_t nx_ = 0, ny_ = 0;
  Extent extent_{};
  double h1_ = 0.0, h2_ = 0.0;
};

Grid build_grid(std::size_t nx, std::size_t ny, Extent extent);

/// Nodal values of a scalar function bound to a grid.
struct Field {
  Grid grid;
  Eigen::VectorXd values;

  Field() = default;
  Field(Grid g, Eigen::VectorXd v);
  static Field constant(const Grid &g, double value);

  double operator()(std::size_t i, std::size_t j) const {
    return values[static_cast<Eigen::Index>(grid.index(i, j))];
  }
};

struct Sensor {
  std::size_t node = 0;
  Point location{};
};

struct ObservationSet {
  std::vector<Sensor> sensors;
  Eigen::VectorXd values;
  double noise_std = 1.0;

  std::size_t size() const { return sensors.size(); }
  /// Throws if sensors repeat, sizes disagree, or noise_std <= 0.
  void validate() const;
};

/// Uniform n1 x n2 lattice of interior nodes, snapped to the grid.
std::vector<Sensor> sensor_lattice(const Grid &grid, std::size_t n1,
                                   std::size_t n2);

struct InterfaceSegment {
  int neighbor = 0;                       // 1-based subdomain index j
  std::vector<std::size_t> global_nodes;  // nodes of the interface line
  std::vector<std::size_t> local_nodes;   // same nodes, subdomain numbering
};

/// One overlapping patch D_i of the global domain.
struct Subdomain {
  int index = 0;  // 1-based
  Extent extent{};
  NodeBox box{};
  Grid local_grid{};
  /// external[k] is true when side k of the patch lies on the global boundary.
  std::array<bool, 4> external{};
  std::vector<int> neighbors;
  std::vector<InterfaceSegment> interfaces;

  bool contains_global(const Grid &global, std::size_t idx) const;
  std::size_t to_local(const Grid &global, std::size_t global_idx) const;
  const InterfaceSegment *interface_with(int neighbor) const;
  /// Global node indices of every node in the patch, in local order.
  std::vector<std::size_t> global_nodes(const Grid &global) const;
};

struct Decomposition {
  Grid grid;
  std::vector<Subdomain> subdomains;
  /// All ordered pairs (i, j) with j a neighbor of i.
  std::vector<std::pair<int, int>> pairs;

  std::size_t size() const { return subdomains.size(); }
  const Subdomain &sub(int index) const { return subdomains.at(static_cast<std::size_t>(index - 1)); }
  /// Number of subdomains whose closed extent contains each global node.
  std::vector<int> coverage_counts() const;
};

/// Builds subdomains from node-aligned, overlapping, covering sub-extents.
Decomposition decompose(const Grid &grid, const std::vector<Extent> &cuts);

/// Evenly spaced vertical strips with `overlap_cells` cells of overlap on each
/// shared edge. Throws if the widths do not come out node-aligned.
std::vector<Extent> strip_cuts(const Grid &grid, std::size_t count,
                               std::size_t strip_cells,
                               std::size_t overlap_cells);

Field restrict_field(const Field &field, const Subdomain &sub);

/// Re-numbers sensors of the global grid into the subdomain's local grid;
/// throws if a sensor lies outside the patch.
std::vector<Sensor> localize_sensors(const std::vector<Sensor> &sensors,
                                     const Subdomain &sub, const Grid &global);

/// Partition-of-unity average: every node takes the mean of the local fields
/// of all subdomains whose closed extent contains it.
Field stitch_fields(const std::vector<Field> &locals,
                    const Decomposition &decomposition);

/// Local observation sets; a sensor in an overlap goes to every subdomain
/// containing it.
std::vector<ObservationSet>
partition_observations(const ObservationSet &obs,
                       const Decomposition &decomposition);

}  // namespace ddvae
