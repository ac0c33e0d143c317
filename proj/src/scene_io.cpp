#include "propfield/scene_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/png_io.hpp"

namespace propfield {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "depth files are little-endian; add byte swapping for this platform");

void Camera::validate() const {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidArgument, "camera width/height must be positive");
  }
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "camera focal lengths must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw Error(ErrorKind::InvalidArgument, "principal point outside the image");
  }
  if (!cam_to_world.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "camera pose has non-finite entries");
  }
  const Eigen::Matrix3d r = rotation();
  const double off = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (off > 1e-6 || r.determinant() < 0.0) {
    throw Error(ErrorKind::NonOrthonormalRotation, "camera rotation is not a proper rotation");
  }
  const Eigen::RowVector4d bottom = cam_to_world.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
    throw Error(ErrorKind::InvalidArgument, "camera pose bottom row must be [0 0 0 1]");
  }
}

std::optional<Projection> project_point(const Camera& camera, const Eigen::Vector3d& world) {
  const Eigen::Matrix3d r = camera.rotation();
  const Eigen::Vector3d local = r.transpose() * (world - camera.center());
  if (!(local.z() > 0.0)) return std::nullopt;
  return Projection{camera.fx * local.x() / local.z() + camera.cx,
                    camera.fy * local.y() / local.z() + camera.cy, local.z()};
}

Eigen::Vector3d backproject(const Camera& camera, double u, double v, double depth) {
  const Eigen::Vector3d local((u - camera.cx) / camera.fx * depth, (v - camera.cy) / camera.fy * depth, depth);
  return camera.rotation() * local + camera.center();
}

bool Frame::has_valid_depth(int x, int y) const {
  const float d = depth.at(x, y);
  return std::isfinite(d) && d > 0.0f;
}

std::size_t Frame::mask_area() const {
  if (!mask) return 0;
  std::size_t n = 0;
  for (auto v : mask->data) n += v != 0;
  return n;
}

bool SceneBundle::has_masks() const {
  for (const auto& f : frames) {
    if (f.mask) return true;
  }
  return false;
}

Raster<float> read_depth_file(const fs::path& path, int width, int height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open depth file " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  const std::size_t expected = static_cast<std::size_t>(width) * height * sizeof(float);
  if (bytes != expected) {
    std::ostringstream msg;
    msg << "depth file " << path.string() << " holds " << bytes / sizeof(float) << " values, camera expects "
        << width << "x" << height;
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
  Raster<float> out(width, height);
  in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(expected));
  if (!in) throw Error(ErrorKind::UnreadableFile, "short read on depth file " + path.string());
  return out;
}

void write_depth_file(const fs::path& path, const Raster<float>& depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write depth file " + path.string());
  out.write(reinterpret_cast<const char*>(depth.data.data()),
            static_cast<std::streamsize>(depth.data.size() * sizeof(float)));
}

namespace {

Camera camera_from_json(const json& f) {
  Camera cam;
  cam.width = f.at("width").get<int>();
  cam.height = f.at("height").get<int>();
  cam.fx = f.at("fx").get<double>();
  cam.fy = f.at("fy").get<double>();
  cam.cx = f.at("cx").get<double>();
  cam.cy = f.at("cy").get<double>();
  const auto m = f.at("cam_to_world").get<std::vector<double>>();
  if (m.size() != 16) throw Error(ErrorKind::InvalidArgument, "cam_to_world must hold 16 values");
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) cam.cam_to_world(r, c) = m[r * 4 + c];
  }
  return cam;
}

void check_size(int w, int h, const Camera& cam, const std::string& what) {
  if (w != cam.width || h != cam.height) {
    std::ostringstream msg;
    msg << what << " is " << w << "x" << h << " but camera is " << cam.width << "x" << cam.height;
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
}

}  // namespace

SceneBundle load_scene_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorKind::MissingManifest, "no manifest.json in " + dir.string());
  }
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::UnreadableFile, "malformed manifest: " + std::string(e.what()));
  }

  SceneBundle bundle;
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw Error(ErrorKind::InvalidArgument, "unsupported manifest version");
    }
    bundle.name = manifest.at("name").get<std::string>();
    const auto& frames = manifest.at("frames");
    if (!frames.is_array() || frames.empty()) {
      throw Error(ErrorKind::InvalidArgument, "manifest lists no frames");
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      Frame frame;
      frame.camera = camera_from_json(f);
      frame.camera.validate();
      const auto& cam = frame.camera;

      frame.image_path = f.at("image").get<std::string>();
      frame.image = png::read_rgb(dir / frame.image_path);
      check_size(frame.image.width, frame.image.height, cam, "image " + frame.image_path);

      frame.depth = read_depth_file(dir / f.at("depth").get<std::string>(), cam.width, cam.height);

      const auto& mask = f.at("mask");
      if (!mask.is_null()) {
        auto raw = png::read_gray(dir / mask.get<std::string>());
        check_size(raw.width, raw.height, cam, "mask " + mask.get<std::string>());
        for (auto& v : raw.data) v = v > 127 ? 1 : 0;
        frame.mask = std::move(raw);
      }
      bundle.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "malformed manifest: " + std::string(e.what()));
  }
  return bundle;
}

void save_scene_bundle(const SceneBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  json frames = json::array();
  for (std::size_t i = 0; i < bundle.frames.size(); ++i) {
    const Frame& frame = bundle.frames[i];
    char stem[32];
    std::snprintf(stem, sizeof(stem), "frame_%03zu", i);
    const std::string image = std::string(stem) + ".png";
    const std::string depth = std::string(stem) + "_depth.f32";
    png::write_rgb(dir / image, frame.image);
    write_depth_file(dir / depth, frame.depth);
    json mask = nullptr;
    if (frame.mask) {
      const std::string name = std::string(stem) + "_mask.png";
      Raster<std::uint8_t> out = *frame.mask;
      for (auto& v : out.data) v = v ? 255 : 0;
      png::write_gray(dir / name, out);
      mask = name;
    }
    std::vector<double> m(16);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) m[r * 4 + c] = frame.camera.cam_to_world(r, c);
    }
    frames.push_back({{"image", image},
                      {"depth", depth},
                      {"mask", mask},
                      {"width", frame.camera.width},
                      {"height", frame.camera.height},
                      {"fx", frame.camera.fx},
                      {"fy", frame.camera.fy},
                      {"cx", frame.camera.cx},
                      {"cy", frame.camera.cy},
                      {"cam_to_world", m}});
  }
  json manifest = {{"version", 1}, {"name", bundle.name}, {"frames", frames}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

SceneBundle normalize_poses(const SceneBundle& bundle) {
  if (bundle.frames.empty()) throw Error(ErrorKind::InvalidArgument, "bundle has no frames");

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& f : bundle.frames) centroid += f.camera.center();
  centroid /= static_cast<double>(bundle.frames.size());

  double extent = 0.0;
  for (const auto& f : bundle.frames) {
    extent = std::max(extent, (f.camera.center() - centroid).cwiseAbs().maxCoeff());
  }
  if (!(extent > 1e-12 * (1.0 + centroid.cwiseAbs().maxCoeff()))) {
    throw Error(ErrorKind::DegeneratePose, "camera centers coincide; normalization scale is undefined");
  }
  const double scale = 1.0 / extent;

  SceneBundle out = bundle;
  for (auto& f : out.frames) {
    const Eigen::Vector3d c = (f.camera.center() - centroid) * scale;
    f.camera.cam_to_world.topRightCorner<3, 1>() = c;
    f.depth_scale *= scale;
  }
  out.world_offset = bundle.world_offset + centroid / bundle.scene_scale;
  out.scene_scale = bundle.scene_scale * scale;
  return out;
}

}  // namespace propfield
