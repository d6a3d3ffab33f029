#include "ddvae/field_io.hpp"
#include "ddvae/random_field.hpp"
#include "ddvae/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

using namespace ddvae;
using test_support::TempDir;

TEST_CASE("field binary layout") {
  const Grid g(3, 2, {0.0, 2.0, -1.0, 1.0});
  Field f(g, Eigen::VectorXd::LinSpaced(6, 0.5, 3.0));
  std::ostringstream os(std::ios::binary);
  write_field(os, f);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 52 + 6 * 8);
  CHECK(bytes.substr(0, 4) == "FLD1");
  std::uint64_t nx = 0;
  std::memcpy(&nx, bytes.data() + 4, 8);
  CHECK(nx == 3);
  double s2_min = 0.0, v5 = 0.0;
  std::memcpy(&s2_min, bytes.data() + 36, 8);
  std::memcpy(&v5, bytes.data() + 52 + 5 * 8, 8);
  CHECK(s2_min == -1.0);
  CHECK(v5 == 3.0);

  std::istringstream is(bytes, std::ios::binary);
  const Field back = read_field(is);
  CHECK(back.grid == g);
  CHECK(back.values == f.values);

  std::istringstream bad(std::string("FLD2") + bytes.substr(4), std::ios::binary);
  CHECK_THROWS(read_field(bad));
  std::istringstream truncated(bytes.substr(0, 60), std::ios::binary);
  CHECK_THROWS(read_field(truncated));
}

TEST_CASE("field, matrix and sensor files round-trip") {
  TempDir dir("io");
  const Grid g(9, 5, {0.0, 2.0, 0.0, 1.0});
  Rng rng(1);
  const Field f(g, rng.normal_vector(static_cast<Eigen::Index>(g.size())));
  save_field(dir / "f.fld", f);
  const Field f2 = load_field(dir / "f.fld");
  CHECK(f2.grid == g);
  CHECK(f2.values == f.values);

  Eigen::MatrixXd m(4, 3);
  rng.fill_normal(m);
  save_matrix(dir / "m.mat", m);
  CHECK(load_matrix(dir / "m.mat") == m);

  ObservationSet obs;
  obs.sensors = sensor_lattice(g, 3, 2);
  obs.values = rng.normal_vector(6);
  obs.noise_std = 0.2;
  save_sensor_csv(dir / "s.csv", obs);
  const auto back = load_sensor_csv(dir / "s.csv", g, 0.2);
  REQUIRE(back.size() == 6);
  for (std::size_t k = 0; k < 6; ++k) CHECK(back.sensors[k].node == obs.sensors[k].node);
  CHECK((back.values - obs.values).cwiseAbs().maxCoeff() < 1e-14);

  {
    std::ofstream os(dir / "bad.csv");
    os << "x,y,z\n";
  }
  CHECK_THROWS(load_sensor_csv(dir / "bad.csv", g, 1.0));
  CHECK_THROWS(load_field(dir / "missing.fld"));

  save_field_csv(dir / "f.csv", f);
  std::ifstream is(dir / "f.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "s1,s2,value");
  std::size_t rows = 0;
  while (std::getline(is, line)) rows += !line.empty();
  CHECK(rows == g.size());
}

TEST_CASE("dataset directory round-trip keeps metadata") {
  TempDir dir("ds");
  const Grid g(9, 5, {0.0, 2.0, 0.0, 1.0});
  DatasetSpec spec;
  spec.count = 5;
  spec.seed = 4;
  spec.tau_bins = 4;
  const Dataset ds = generate_dataset(g, spec, Exec::serial);
  save_dataset(dir.path(), ds);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const Dataset back = load_dataset(dir.path());
  REQUIRE(back.size() == 5);
  CHECK(back.grid == g);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(back.samples[k].values == ds.samples[k].values);
    CHECK(back.meta[k].tau == ds.meta[k].tau);
    CHECK(back.meta[k].seed == ds.meta[k].seed);
  }
}
