#pragma once

#include "ddvae/grid.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ddvae {

// Field binary, little-endian:
//   bytes 0..3    magic "FLD1"
//   bytes 4..11   nx (uint64)
//   bytes 12..19  ny (uint64)
//   bytes 20..51  s1_min, s1_max, s2_min, s2_max (float64 each)
//   bytes 52..    nx*ny float64 values, flat index j*nx + i
void write_field(std::ostream &os, const Field &field);
Field read_field(std::istream &is);
void save_field(const std::filesystem::path &path, const Field &field);
Field load_field(const std::filesystem::path &path);

// Sample matrix binary, little-endian:
//   magic "MAT1", rows (uint64), cols (uint64), rows*cols float64 row-major.
// Used for chain dumps (one latent sample per row) and sample stacks.
void save_matrix(const std::filesystem::path &path, const Eigen::MatrixXd &m);
Eigen::MatrixXd load_matrix(const std::filesystem::path &path);

/// CSV with header "s1,s2,value"; locations are snapped to grid nodes.
void save_sensor_csv(const std::filesystem::path &path, const ObservationSet &obs);
ObservationSet load_sensor_csv(const std::filesystem::path &path, const Grid &grid,
                               double noise_std);

/// Grid-shaped export: header "s1,s2,value", one row per node.
void save_field_csv(const std::filesystem::path &path, const Field &field);

namespace detail {
void write_u64(std::ostream &os, std::uint64_t v);
void write_f64(std::ostream &os, double v);
std::uint64_t read_u64(std::istream &is);
double read_f64(std::istream &is);
}  // namespace detail

}  // namespace ddvae
