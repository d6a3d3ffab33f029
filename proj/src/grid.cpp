#include "ddvae/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ddvae {

namespace {

constexpr double align_tol = 1e-9;

// Index of the node line at coordinate v, or throws if v is off the lattice.
std::size_t aligned_index(double v, double origin, double h, std::size_t n,
                          const char *what) {
  const double t = (v - origin) / h;
  const double r = std::round(t);
  if (std::abs(t - r) > align_tol || r < -0.5 ||
      r > static_cast<double>(n - 1) + 0.5)
    throw std::invalid_argument(std::string("decompose: cut edge ") + what +
                                " is not aligned with a grid node line");
  return static_cast<std::size_t>(r);
}

}  // namespace

double distance(const Point &a, const Point &b) {
  return std::hypot(a.s1 - b.s1, a.s2 - b.s2);
}

double Extent::diagonal() const { return std::hypot(width(), height()); }

bool Extent::contains(const Point &p, double tol) const {
  return p.s1 >= s1_min - tol && p.s1 <= s1_max + tol && p.s2 >= s2_min - tol &&
         p.s2 <= s2_max + tol;
}

std::string to_string(Side side) {
  switch (side) {
  case Side::left: return "left";
  case Side::right: return "right";
  case Side::bottom: return "bottom";
  case Side::top: return "top";
  }
  return "?";
}

Grid::Grid(std::size_t nx, std::size_t ny, Extent extent)
    : nx_(nx), ny_(ny), extent_(extent) {
  if (nx < 2 || ny < 2)
    throw std::invalid_argument("Grid: need at least 2 nodes per direction");
  if (!(extent.s1_max > extent.s1_min) || !(extent.s2_max > extent.s2_min) ||
      !std::isfinite(extent.area()))
    throw std::invalid_argument("Grid: degenerate extent");
  h1_ = extent.width() / static_cast<double>(nx - 1);
  h2_ = extent.height() / static_cast<double>(ny - 1);
}

Point Grid::location(std::size_t i, std::size_t j) const {
  return {extent_.s1_min + static_cast<double>(i) * h1_,
          extent_.s2_min + static_cast<double>(j) * h2_};
}

bool Grid::on_side(std::size_t idx, Side side) const {
  switch (side) {
  case Side::left: return i_of(idx) == 0;
  case Side::right: return i_of(idx) == nx_ - 1;
  case Side::bottom: return j_of(idx) == 0;
  case Side::top: return j_of(idx) == ny_ - 1;
  }
  return false;
}

bool Grid::on_boundary(std::size_t idx) const {
  const auto i = i_of(idx), j = j_of(idx);
  return i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1;
}

std::vector<std::size_t> Grid::side_nodes(Side side) const {
  std::vector<std::size_t> out;
  switch (side) {
  case Side::left:
  case Side::right: {
    const std::size_t i = side == Side::left ? 0 : nx_ - 1;
    for (std::size_t j = 0; j < ny_; ++j) out.push_back(index(i, j));
    break;
  }
  case Side::bottom:
  case Side::top: {
    const std::size_t j = side == Side::bottom ? 0 : ny_ - 1;
    for (std::size_t i = 0; i < nx_; ++i) out.push_back(index(i, j));
    break;
  }
  }
  return out;
}

std::size_t Grid::nearest_node(const Point &p) const {
  if (!extent_.contains(p, 1e-9 * std::max(h1_, h2_)))
    throw std::invalid_argument("Grid::nearest_node: point outside the grid");
  const auto clampi = [](double t, std::size_t n) {
    const double r = std::clamp(std::round(t), 0.0, static_cast<double>(n - 1));
    return static_cast<std::size_t>(r);
  };
  return index(clampi((p.s1 - extent_.s1_min) / h1_, nx_),
               clampi((p.s2 - extent_.s2_min) / h2_, ny_));
}

std::size_t Grid::node_at(const Point &p) const {
  const std::size_t idx = nearest_node(p);
  const Point q = location(idx);
  if (std::abs(q.s1 - p.s1) > 1e-9 * h1_ || std::abs(q.s2 - p.s2) > 1e-9 * h2_)
    throw std::invalid_argument("Grid::node_at: location is not a grid node");
  return idx;
}

Eigen::VectorXd Grid::quadrature_weights() const {
  Eigen::VectorXd w(static_cast<Eigen::Index>(size()));
  for (std::size_t j = 0; j < ny_; ++j) {
    const double wy = (j == 0 || j == ny_ - 1) ? 0.5 * h2_ : h2_;
    for (std::size_t i = 0; i < nx_; ++i) {
      const double wx = (i == 0 || i == nx_ - 1) ? 0.5 * h1_ : h1_;
      w[static_cast<Eigen::Index>(index(i, j))] = wx * wy;
    }
  }
  return w;
}

Grid Grid::subgrid(const NodeBox &box) const {
  if (box.i1 >= nx_ || box.j1 >= ny_ || box.i0 > box.i1 || box.j0 > box.j1)
    throw std::invalid_argument("Grid::subgrid: box outside grid");
  const Point lo = location(box.i0, box.j0);
  const Point hi = location(box.i1, box.j1);
  return Grid(box.nx(), box.ny(), Extent{lo.s1, hi.s1, lo.s2, hi.s2});
}

Grid build_grid(std::size_t nx, std::size_t ny, Extent extent) {
  return Grid(nx, ny, extent);
}

Field::Field(Grid g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != grid.size())
    throw std::invalid_argument("Field: value count does not match the grid");
  if (!values.allFinite())
    throw std::invalid_argument("Field: non-finite value");
}

Field Field::constant(const Grid &g, double value) {
  return Field(g, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.size()), value));
}

void ObservationSet::validate() const {
  if (static_cast<std::size_t>(values.size()) != sensors.size())
    throw std::invalid_argument("ObservationSet: value count != sensor count");
  if (!(noise_std > 0.0))
    throw std::invalid_argument("ObservationSet: noise_std must be positive");
  std::set<std::size_t> seen;
  for (const auto &s : sensors)
    if (!seen.insert(s.node).second)
      throw std::invalid_argument("ObservationSet: duplicate sensor node");
}

std::vector<Sensor> sensor_lattice(const Grid &grid, std::size_t n1,
                                   std::size_t n2) {
  if (n1 == 0 || n2 == 0)
    throw std::invalid_argument("sensor_lattice: empty lattice");
  std::vector<Sensor> out;
  std::set<std::size_t> seen;
  const Extent &e = grid.extent();
  for (std::size_t b = 1; b <= n2; ++b) {
    for (std::size_t a = 1; a <= n1; ++a) {
      const Point p{e.s1_min + e.width() * static_cast<double>(a) / static_cast<double>(n1 + 1),
                    e.s2_min + e.height() * static_cast<double>(b) / static_cast<double>(n2 + 1)};
      const std::size_t node = grid.nearest_node(p);
      if (!seen.insert(node).second)
        throw std::invalid_argument("sensor_lattice: grid too coarse for lattice");
      out.push_back({node, grid.location(node)});
    }
  }
  return out;
}

bool Subdomain::contains_global(const Grid &global, std::size_t idx) const {
  return box.contains(global.i_of(idx), global.j_of(idx));
}

std::size_t Subdomain::to_local(const Grid &global, std::size_t g) const {
  const auto i = global.i_of(g), j = global.j_of(g);
  if (!box.contains(i, j))
    throw std::out_of_range("Subdomain::to_local: node outside subdomain");
  return local_grid.index(i - box.i0, j - box.j0);
}

const InterfaceSegment *Subdomain::interface_with(int neighbor) const {
  for (const auto &seg : interfaces)
    if (seg.neighbor == neighbor) return &seg;
  return nullptr;
}

std::vector<std::size_t> Subdomain::global_nodes(const Grid &global) const {
  std::vector<std::size_t> out;
  out.reserve(local_grid.size());
  for (std::size_t j = box.j0; j <= box.j1; ++j)
    for (std::size_t i = box.i0; i <= box.i1; ++i) out.push_back(global.index(i, j));
  return out;
}

std::vector<int> Decomposition::coverage_counts() const {
  std::vector<int> counts(grid.size(), 0);
  for (const auto &sub : subdomains)
    for (std::size_t j = sub.box.j0; j <= sub.box.j1; ++j)
      for (std::size_t i = sub.box.i0; i <= sub.box.i1; ++i)
        ++counts[grid.index(i, j)];
  return counts;
}

Decomposition decompose(const Grid &grid, const std::vector<Extent> &cuts) {
  if (cuts.empty()) throw std::invalid_argument("decompose: no subdomains");
  Decomposition dec;
  dec.grid = grid;
  const Extent &ge = grid.extent();

  for (std::size_t k = 0; k < cuts.size(); ++k) {
    const Extent &c = cuts[k];
    Subdomain sub;
    sub.index = static_cast<int>(k + 1);
    sub.box.i0 = aligned_index(c.s1_min, ge.s1_min, grid.h1(), grid.nx(), "s1_min");
    sub.box.i1 = aligned_index(c.s1_max, ge.s1_min, grid.h1(), grid.nx(), "s1_max");
    sub.box.j0 = aligned_index(c.s2_min, ge.s2_min, grid.h2(), grid.ny(), "s2_min");
    sub.box.j1 = aligned_index(c.s2_max, ge.s2_min, grid.h2(), grid.ny(), "s2_max");
    if (sub.box.i1 <= sub.box.i0 || sub.box.j1 <= sub.box.j0)
      throw std::invalid_argument("decompose: degenerate sub-extent");
    sub.local_grid = grid.subgrid(sub.box);
    sub.extent = sub.local_grid.extent();
    sub.external = {sub.box.i0 == 0, sub.box.i1 == grid.nx() - 1,
                    sub.box.j0 == 0, sub.box.j1 == grid.ny() - 1};
    dec.subdomains.push_back(std::move(sub));
  }

  // Coverage of every node.
  const auto counts = dec.coverage_counts();
  if (std::any_of(counts.begin(), counts.end(), [](int c) { return c == 0; }))
    throw std::invalid_argument("decompose: sub-extents do not cover the domain");
  if (cuts.size() > 1)
    for (const auto &sub : dec.subdomains) {
      bool overlapped = false;
      for (const auto &other : dec.subdomains)
        if (other.index != sub.index) {
          const bool i_ov = std::max(sub.box.i0, other.box.i0) < std::min(sub.box.i1, other.box.i1);
          const bool j_ov = std::max(sub.box.j0, other.box.j0) < std::min(sub.box.j1, other.box.j1);
          overlapped |= i_ov && j_ov;
        }
      if (!overlapped)
        throw std::invalid_argument("decompose: subdomain without positive-width overlap");
    }

  // Neighbors: positive-area overlap. Touching along a line is rejected.
  for (auto &a : dec.subdomains) {
    for (const auto &b : dec.subdomains) {
      if (a.index == b.index) continue;
      const auto lo_i = std::max(a.box.i0, b.box.i0), hi_i = std::min(a.box.i1, b.box.i1);
      const auto lo_j = std::max(a.box.j0, b.box.j0), hi_j = std::min(a.box.j1, b.box.j1);
      if (lo_i > hi_i || lo_j > hi_j) continue;
      if (lo_i == hi_i || lo_j == hi_j)
        throw std::invalid_argument("decompose: zero-width overlap between subdomains " +
                                    std::to_string(a.index) + " and " + std::to_string(b.index));
      a.neighbors.push_back(b.index);
    }
  }

  // Nodes on a non-external side of D_i, including the line ends that touch
  // the outer boundary, go to the first neighbor that contains them strictly
  // inside (i.e. not on that neighbor's own interior boundary).
  const auto on_interior_boundary = [&](const Subdomain &s, std::size_t g) {
    const auto i = grid.i_of(g), j = grid.j_of(g);
    if (!s.box.contains(i, j)) return false;
    const auto internal = [&](Side side) { return !s.external[static_cast<std::size_t>(side)]; };
    return (i == s.box.i0 && internal(Side::left)) || (i == s.box.i1 && internal(Side::right)) ||
           (j == s.box.j0 && internal(Side::bottom)) || (j == s.box.j1 && internal(Side::top));
  };
  for (auto &sub : dec.subdomains) {
    std::map<int, InterfaceSegment> segs;
    for (std::size_t j = sub.box.j0; j <= sub.box.j1; ++j)
      for (std::size_t i = sub.box.i0; i <= sub.box.i1; ++i) {
        const std::size_t g = grid.index(i, j);
        if (!on_interior_boundary(sub, g)) continue;
        int owner = 0;
        for (int nb : sub.neighbors) {
          const auto &other = dec.sub(nb);
          if (other.contains_global(grid, g) && !on_interior_boundary(other, g)) {
            owner = nb;
            break;
          }
        }
        if (owner == 0)
          throw std::invalid_argument(
              "decompose: interface node of subdomain " + std::to_string(sub.index) +
              " is not strictly inside any neighbor");
        auto &seg = segs[owner];
        seg.neighbor = owner;
        seg.global_nodes.push_back(g);
        seg.local_nodes.push_back(sub.to_local(grid, g));
      }
    for (auto &[nb, seg] : segs) sub.interfaces.push_back(std::move(seg));
  }

  for (const auto &sub : dec.subdomains)
    for (int nb : sub.neighbors) dec.pairs.emplace_back(sub.index, nb);
  return dec;
}

std::vector<Extent> strip_cuts(const Grid &grid, std::size_t count,
                               std::size_t strip_cells, std::size_t overlap_cells) {
  if (count == 0 || strip_cells == 0 || overlap_cells >= strip_cells)
    throw std::invalid_argument("strip_cuts: bad strip layout");
  const std::size_t stride = strip_cells - overlap_cells;
  if (stride * (count - 1) + strip_cells != grid.nx() - 1)
    throw std::invalid_argument("strip_cuts: strips do not tile the grid exactly");
  std::vector<Extent> cuts;
  const Extent &e = grid.extent();
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i0 = k * stride;
    cuts.push_back({grid.location(i0, 0).s1, grid.location(i0 + strip_cells, 0).s1,
                    e.s2_min, e.s2_max});
  }
  return cuts;
}

Field restrict_field(const Field &field, const Subdomain &sub) {
  const Grid &g = field.grid;
  if (sub.box.i1 >= g.nx() || sub.box.j1 >= g.ny() || !(g.subgrid(sub.box) == sub.local_grid))
    throw std::invalid_argument("restrict_field: field grid does not match the subdomain's parent");
  Eigen::VectorXd v(static_cast<Eigen::Index>(sub.local_grid.size()));
  Eigen::Index k = 0;
  for (std::size_t j = sub.box.j0; j <= sub.box.j1; ++j)
    for (std::size_t i = sub.box.i0; i <= sub.box.i1; ++i)
      v[k++] = field.values[static_cast<Eigen::Index>(g.index(i, j))];
  return Field(sub.local_grid, std::move(v));
}

std::vector<Sensor> localize_sensors(const std::vector<Sensor> &sensors,
                                     const Subdomain &sub, const Grid &global) {
  std::vector<Sensor> out;
  out.reserve(sensors.size());
  for (const auto &s : sensors) {
    const std::size_t local = sub.to_local(global, s.node);
    out.push_back({local, sub.local_grid.location(local)});
  }
  return out;
}

Field stitch_fields(const std::vector<Field> &locals, const Decomposition &dec) {
  if (locals.size() != dec.size())
    throw std::invalid_argument("stitch_fields: need one local field per subdomain");
  const Grid &g = dec.grid;
  const auto counts = dec.coverage_counts();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < locals.size(); ++k) {
    const auto &sub = dec.subdomains[k];
    if (!(locals[k].grid == sub.local_grid))
      throw std::invalid_argument("stitch_fields: local field grid mismatch");
    for (std::size_t j = sub.box.j0; j <= sub.box.j1; ++j)
      for (std::size_t i = sub.box.i0; i <= sub.box.i1; ++i) {
        const std::size_t gi = g.index(i, j);
        out[static_cast<Eigen::Index>(gi)] +=
            locals[k](i - sub.box.i0, j - sub.box.j0) / counts[gi];
      }
  }
  return Field(g, std::move(out));
}

std::vector<ObservationSet> partition_observations(const ObservationSet &obs,
                                                   const Decomposition &dec) {
  std::vector<ObservationSet> out(dec.size());
  for (std::size_t k = 0; k < dec.size(); ++k) {
    const auto &sub = dec.subdomains[k];
    std::vector<Eigen::Index> picked;
    for (std::size_t t = 0; t < obs.sensors.size(); ++t)
      if (obs.sensors[t].node < dec.grid.size() &&
          sub.contains_global(dec.grid, obs.sensors[t].node))
        picked.push_back(static_cast<Eigen::Index>(t));
    out[k].noise_std = obs.noise_std;
    out[k].values.resize(static_cast<Eigen::Index>(picked.size()));
    for (std::size_t q = 0; q < picked.size(); ++q) {
      out[k].sensors.push_back(obs.sensors[static_cast<std::size_t>(picked[q])]);
      out[k].values[static_cast<Eigen::Index>(q)] = obs.values[picked[q]];
    }
  }
  return out;
}

}  // namespace ddvae
