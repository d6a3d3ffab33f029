#include "ddvae/grid.hpp"
#include "ddvae/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace ddvae;

TEST_CASE("grid indexing is row-major with s1 fastest") {
  const Grid g(5, 3, {0.0, 2.0, 0.0, 1.0});
  CHECK(g.size() == 15);
  CHECK(g.h1() == doctest::Approx(0.5));
  CHECK(g.h2() == doctest::Approx(0.5));
  CHECK(g.index(3, 2) == 13);
  CHECK(g.i_of(13) == 3);
  CHECK(g.j_of(13) == 2);
  const Point p = g.location(13);
  CHECK(p.s1 == doctest::Approx(1.5));
  CHECK(p.s2 == doctest::Approx(1.0));
  CHECK(g.node_at({1.5, 1.0}) == 13);
  CHECK(g.nearest_node({1.4, 0.9}) == 13);
  CHECK_THROWS(g.node_at({1.3, 1.0}));
  CHECK_THROWS(g.nearest_node({2.5, 0.0}));
}

TEST_CASE("quadrature weights integrate bilinear functions exactly") {
  const Grid g(9, 5, {0.0, 2.0, 0.0, 1.0});
  const Eigen::VectorXd w = g.quadrature_weights();
  CHECK(w.sum() == doctest::Approx(2.0).epsilon(1e-14));
  double integral = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Point p = g.location(k);
    integral += w[static_cast<Eigen::Index>(k)] * (1.0 + p.s1 + 2.0 * p.s2 + p.s1 * p.s2);
  }
  // Integral over [0,2]x[0,1] of 1 + s1 + 2 s2 + s1 s2 = 2 + 2 + 2 + 1.
  CHECK(integral == doctest::Approx(7.0).epsilon(1e-13));
  CHECK(w[0] == doctest::Approx(0.25 * g.h1() * g.h2()));
  CHECK(w[1] == doctest::Approx(0.5 * g.h1() * g.h2()));
  CHECK(w[static_cast<Eigen::Index>(g.index(3, 2))] == doctest::Approx(g.h1() * g.h2()));
}

TEST_CASE("side nodes and boundary flags") {
  const Grid g(4, 3, {0.0, 1.0, 0.0, 1.0});
  CHECK(g.side_nodes(Side::left) == std::vector<std::size_t>{0, 4, 8});
  CHECK(g.side_nodes(Side::right) == std::vector<std::size_t>{3, 7, 11});
  CHECK(g.side_nodes(Side::bottom) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(g.side_nodes(Side::top) == std::vector<std::size_t>{8, 9, 10, 11});
  CHECK(g.on_boundary(0));
  CHECK_FALSE(g.on_boundary(5));
  CHECK(g.on_side(7, Side::right));
}

TEST_CASE("two-strip decomposition of the 129x65 layout") {
  const Grid g(129, 65, {0.0, 2.0, 0.0, 1.0});
  const auto dec = decompose(g, {{0.0, 1.1875, 0.0, 1.0}, {0.8125, 2.0, 0.0, 1.0}});
  REQUIRE(dec.size() == 2);
  const auto &d1 = dec.sub(1), &d2 = dec.sub(2);
  CHECK(d1.box == NodeBox{0, 76, 0, 64});
  CHECK(d2.box == NodeBox{52, 128, 0, 64});
  CHECK(d1.local_grid.size() == 77 * 65);
  CHECK(d1.external == std::array<bool, 4>{true, false, true, true});
  CHECK(d2.external == std::array<bool, 4>{false, true, true, true});
  CHECK(dec.pairs == std::vector<std::pair<int, int>>{{1, 2}, {2, 1}});

  const auto *s12 = d1.interface_with(2);
  REQUIRE(s12 != nullptr);
  CHECK(s12->global_nodes.size() == 65);  // full node line, ends included
  for (auto n : s12->global_nodes) {
    CHECK(g.location(n).s1 == doctest::Approx(1.1875));
    CHECK(d2.contains_global(g, n));
  }
  const auto *s21 = d2.interface_with(1);
  REQUIRE(s21 != nullptr);
  for (auto n : s21->global_nodes) CHECK(g.location(n).s1 == doctest::Approx(0.8125));
  CHECK(d1.interface_with(1) == nullptr);

  const auto counts = dec.coverage_counts();
  CHECK(counts[g.index(60, 10)] == 2);
  CHECK(counts[g.index(10, 10)] == 1);
  CHECK(counts[g.index(100, 10)] == 1);
}

TEST_CASE("three-strip decomposition on an 11x5 grid") {
  const Grid g(11, 5, {0.0, 10.0, 0.0, 4.0});
  const auto cuts = strip_cuts(g, 3, 4, 1);
  REQUIRE(cuts.size() == 3);
  const auto dec = decompose(g, cuts);
  // Strips are width 4 cells with 1-cell overlaps: [0,4], [3,7], [6,10].
  CHECK(dec.sub(1).box.i0 == 0);
  CHECK(dec.sub(1).box.i1 == 4);
  CHECK(dec.sub(2).box.i0 == 3);
  CHECK(dec.sub(2).box.i1 == 7);
  CHECK(dec.sub(3).box.i0 == 6);
  CHECK(dec.sub(3).box.i1 == 10);
  CHECK(dec.sub(2).neighbors == std::vector<int>{1, 3});
  CHECK(dec.sub(1).neighbors == std::vector<int>{2});
  CHECK(dec.pairs.size() == 4);

  // Hand enumeration: D2 has interface lines i = 3 (data from D1) and i = 7 (from D3).
  const auto *a = dec.sub(2).interface_with(1);
  const auto *b = dec.sub(2).interface_with(3);
  REQUIRE(a);
  REQUIRE(b);
  std::vector<std::size_t> expect_a, expect_b;
  for (std::size_t j = 0; j <= 4; ++j) {
    expect_a.push_back(g.index(3, j));
    expect_b.push_back(g.index(7, j));
  }
  CHECK(a->global_nodes == expect_a);
  CHECK(b->global_nodes == expect_b);
  CHECK(a->local_nodes == std::vector<std::size_t>{0, 5, 10, 15, 20});
  CHECK(b->local_nodes == std::vector<std::size_t>{4, 9, 14, 19, 24});
}

TEST_CASE("decomposition rejects bad cuts") {
  const Grid g(9, 5, {0.0, 2.0, 0.0, 1.0});
  CHECK_THROWS(decompose(g, {}));
  CHECK_THROWS(decompose(g, {{0.0, 1.0, 0.0, 1.0}}));                          // uncovered
  CHECK_THROWS(decompose(g, {{0.0, 1.0, 0.0, 1.0}, {1.0, 2.0, 0.0, 1.0}}));    // line contact
  CHECK_THROWS(decompose(g, {{0.0, 1.1, 0.0, 1.0}, {0.75, 2.0, 0.0, 1.0}}));   // not node-aligned
  CHECK_NOTHROW(decompose(g, {{0.0, 2.0, 0.0, 1.0}}));
}

TEST_CASE("restriction and stitching agree with a brute-force partition of unity") {
  const Grid g(11, 5, {0.0, 10.0, 0.0, 4.0});
  const auto dec = decompose(g, strip_cuts(g, 3, 4, 1));
  Rng rng(3);
  std::vector<Field> locals;
  for (const auto &sub : dec.subdomains)
    locals.emplace_back(sub.local_grid, rng.normal_vector(static_cast<Eigen::Index>(sub.local_grid.size())));
  const Field st = stitch_fields(locals, dec);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto i = g.i_of(n), j = g.j_of(n);
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < dec.size(); ++k) {
      const auto &b = dec.subdomains[k].box;
      if (i < b.i0 || i > b.i1 || j < b.j0 || j > b.j1) continue;
      sum += locals[k]((i - b.i0), (j - b.j0));
      ++count;
    }
    CHECK(st.values[static_cast<Eigen::Index>(n)] == doctest::Approx(sum / count).epsilon(1e-15));
  }

  // A continuous field survives restriction followed by stitching.
  Field f(g, rng.normal_vector(static_cast<Eigen::Index>(g.size())));
  std::vector<Field> parts;
  for (const auto &sub : dec.subdomains) parts.push_back(restrict_field(f, sub));
  CHECK((stitch_fields(parts, dec).values - f.values).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(parts[1](0, 2) == f(3, 2));
}

TEST_CASE("sensor lattice and observation partition") {
  const Grid g(129, 65, {0.0, 2.0, 0.0, 1.0});
  const auto sensors = sensor_lattice(g, 13, 5);
  REQUIRE(sensors.size() == 65);
  std::set<std::size_t> nodes;
  for (const auto &s : sensors) {
    CHECK_FALSE(g.on_boundary(s.node));
    nodes.insert(s.node);
  }
  CHECK(nodes.size() == 65);

  const auto dec = decompose(g, {{0.0, 1.1875, 0.0, 1.0}, {0.8125, 2.0, 0.0, 1.0}});
  ObservationSet obs;
  obs.sensors = sensors;
  obs.values = Eigen::VectorXd::LinSpaced(65, 0.0, 64.0);
  obs.noise_std = 0.1;
  const auto parts = partition_observations(obs, dec);
  REQUIRE(parts.size() == 2);
  std::size_t in_both = 0;
  for (const auto &s : sensors)
    in_both += dec.sub(1).contains_global(g, s.node) && dec.sub(2).contains_global(g, s.node);
  CHECK(parts[0].size() + parts[1].size() == 65 + in_both);
  for (const auto &p : parts) {
    CHECK(p.noise_std == 0.1);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const auto it = std::find_if(sensors.begin(), sensors.end(),
                                   [&](const Sensor &s) { return s.node == p.sensors[k].node; });
      REQUIRE(it != sensors.end());
      CHECK(p.values[static_cast<Eigen::Index>(k)] == obs.values[it - sensors.begin()]);
    }
  }
  const auto local = localize_sensors(parts[1].sensors, dec.sub(2), g);
  for (std::size_t k = 0; k < local.size(); ++k) {
    const Point a = dec.sub(2).local_grid.location(local[k].node);
    CHECK(a.s1 == doctest::Approx(parts[1].sensors[k].location.s1));
    CHECK(a.s2 == doctest::Approx(parts[1].sensors[k].location.s2));
  }
  CHECK_THROWS(localize_sensors(sensors, dec.sub(2), g));
}

TEST_CASE("observation set validation") {
  ObservationSet obs;
  obs.sensors = {{1, {}}, {1, {}}};
  obs.values = Eigen::VectorXd::Zero(2);
  CHECK_THROWS(obs.validate());
  obs.sensors[1].node = 2;
  CHECK_NOTHROW(obs.validate());
  obs.noise_std = 0.0;
  CHECK_THROWS(obs.validate());
}
