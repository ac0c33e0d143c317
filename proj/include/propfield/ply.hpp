#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace propfield {

using Rgb = std::array<std::uint8_t, 3>;

struct PlyCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Rgb> colors;
  std::vector<double> values;
};

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Vertices carry x,y,z (double), red,green,blue (uchar), value (double).
void export_ply(const std::filesystem::path& path, std::span<const Eigen::Vector3d> points,
                std::span<const Rgb> colors, std::span<const double> values,
                PlyFormat format = PlyFormat::BinaryLittleEndian);

/// Reads vertex x,y,z / red,green,blue / value properties from ascii or
/// binary_little_endian PLY (float, double, uchar and int property types).
PlyCloud read_ply(const std::filesystem::path& path);

/// Piecewise-linear viridis ramp; t is clamped to [0,1].
Rgb colormap(double t);

/// Min-max normalizes values onto the colormap.
std::vector<Rgb> colorize_values(std::span<const double> values);

}  // namespace propfield
