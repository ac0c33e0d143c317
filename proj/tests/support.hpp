#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Core>

#include "propfield/scene_io.hpp"

namespace testing {

/// Removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("propfield_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline propfield::Camera simple_camera(int w = 100, int h = 100, double f = 100.0) {
  propfield::Camera c;
  c.fx = c.fy = f;
  c.cx = 0.5 * w;
  c.cy = 0.5 * h;
  c.width = w;
  c.height = h;
  return c;
}

/// Frame looking down +z from the origin at a constant-depth plane.
inline propfield::Frame plane_frame(int w, int h, float depth) {
  propfield::Frame f;
  f.camera = simple_camera(w, h, static_cast<double>(w));
  f.image = propfield::RgbImage{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 128)};
  f.depth = propfield::Raster<float>(w, h, depth);
  f.image_path = "frame.png";
  return f;
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace testing
