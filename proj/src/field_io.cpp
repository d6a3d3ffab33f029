#include "ddvae/field_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace ddvae {

namespace detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

namespace {
template <class T> T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t k = 0; k < sizeof(T) / 2; ++k) std::swap(b[k], b[sizeof(T) - 1 - k]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}
}  // namespace

void write_u64(std::ostream &os, std::uint64_t v) {
  v = to_le(v);
  os.write(reinterpret_cast<const char *>(&v), sizeof v);
}

void write_f64(std::ostream &os, double v) {
  auto bits = to_le(std::bit_cast<std::uint64_t>(v));
  os.write(reinterpret_cast<const char *>(&bits), sizeof bits);
}

std::uint64_t read_u64(std::istream &is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char *>(&v), sizeof v))
    throw std::runtime_error("unexpected end of binary stream");
  return to_le(v);
}

double read_f64(std::istream &is) { return std::bit_cast<double>(read_u64(is)); }

}  // namespace detail

namespace {

void expect_magic(std::istream &is, const char (&magic)[5]) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error(std::string("bad magic, expected ") + magic);
}

std::ofstream open_out(const std::filesystem::path &path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return is;
}

}  // namespace

void write_field(std::ostream &os, const Field &field) {
  os.write("FLD1", 4);
  detail::write_u64(os, field.grid.nx());
  detail::write_u64(os, field.grid.ny());
  const Extent &e = field.grid.extent();
  for (double v : {e.s1_min, e.s1_max, e.s2_min, e.s2_max}) detail::write_f64(os, v);
  for (Eigen::Index k = 0; k < field.values.size(); ++k) detail::write_f64(os, field.values[k]);
}

Field read_field(std::istream &is) {
  expect_magic(is, "FLD1");
  const auto nx = detail::read_u64(is);
  const auto ny = detail::read_u64(is);
  Extent e;
  e.s1_min = detail::read_f64(is);
  e.s1_max = detail::read_f64(is);
  e.s2_min = detail::read_f64(is);
  e.s2_max = detail::read_f64(is);
  Grid g(nx, ny, e);
  Eigen::VectorXd v(static_cast<Eigen::Index>(g.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = detail::read_f64(is);
  return Field(g, std::move(v));
}

void save_field(const std::filesystem::path &path, const Field &field) {
  auto os = open_out(path);
  write_field(os, field);
}

Field load_field(const std::filesystem::path &path) {
  auto is = open_in(path);
  return read_field(is);
}

void save_matrix(const std::filesystem::path &path, const Eigen::MatrixXd &m) {
  auto os = open_out(path);
  os.write("MAT1", 4);
  detail::write_u64(os, static_cast<std::uint64_t>(m.rows()));
  detail::write_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) detail::write_f64(os, m(r, c));
}

Eigen::MatrixXd load_matrix(const std::filesystem::path &path) {
  auto is = open_in(path);
  expect_magic(is, "MAT1");
  const auto rows = static_cast<Eigen::Index>(detail::read_u64(is));
  const auto cols = static_cast<Eigen::Index>(detail::read_u64(is));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = detail::read_f64(is);
  return m;
}

void save_sensor_csv(const std::filesystem::path &path, const ObservationSet &obs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "s1,s2,value\n" << std::setprecision(17);
  for (std::size_t t = 0; t < obs.sensors.size(); ++t)
    os << obs.sensors[t].location.s1 << ',' << obs.sensors[t].location.s2 << ','
       << obs.values[static_cast<Eigen::Index>(t)] << '\n';
}

ObservationSet load_sensor_csv(const std::filesystem::path &path, const Grid &grid,
                               double noise_std) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind("s1,s2,value", 0) != 0)
    throw std::runtime_error("sensor CSV: missing 's1,s2,value' header");
  ObservationSet obs;
  obs.noise_std = noise_std;
  std::vector<double> vals;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double s1, s2, v;
    char c1, c2;
    if (!(ls >> s1 >> c1 >> s2 >> c2 >> v) || c1 != ',' || c2 != ',')
      throw std::runtime_error("sensor CSV: malformed row: " + line);
    const std::size_t node = grid.node_at({s1, s2});
    obs.sensors.push_back({node, grid.location(node)});
    vals.push_back(v);
  }
  obs.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  obs.validate();
  return obs;
}

void save_field_csv(const std::filesystem::path &path, const Field &field) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "s1,s2,value\n" << std::setprecision(17);
  for (std::size_t k = 0; k < field.grid.size(); ++k) {
    const Point p = field.grid.location(k);
    os << p.s1 << ',' << p.s2 << ',' << field.values[static_cast<Eigen::Index>(k)] << '\n';
  }
}

}  // namespace ddvae
