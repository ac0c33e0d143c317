#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/png_io.hpp"
#include "propfield/scene_io.hpp"
#include "propfield/synthetic.hpp"
#include "support.hpp"

using namespace propfield;
using testing::TempDir;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::InvalidArgument;
}

SceneBundle bundle_at(std::initializer_list<Eigen::Vector3d> centers) {
  SceneBundle b;
  for (const auto& c : centers) {
    Frame f = testing::plane_frame(4, 4, 2.0f);
    f.camera.cam_to_world.topRightCorner<3, 1>() = c;
    b.frames.push_back(f);
  }
  return b;
}

}  // namespace

TEST_CASE("project_point on the principal axis and off axis") {
  const Camera cam = testing::simple_camera(100, 100, 100.0);
  auto p = project_point(cam, {0, 0, 2});
  REQUIRE(p);
  CHECK(p->u == doctest::Approx(50.0));
  CHECK(p->v == doctest::Approx(50.0));
  CHECK(p->depth == 2.0);

  p = project_point(cam, {0.5, 0, 2});
  REQUIRE(p);
  CHECK(p->u == doctest::Approx(75.0));
  CHECK(p->v == doctest::Approx(50.0));
  CHECK(p->depth == 2.0);

  CHECK_FALSE(project_point(cam, {0, 0, -1}));
  CHECK_FALSE(project_point(cam, {0, 0, 0}));
}

TEST_CASE("project_point and backproject are inverse") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Camera cam = testing::simple_camera(64, 48, 30.0 + 100.0 * u01(rng));
    cam.cam_to_world.topLeftCorner<3, 3>() = testing::random_rotation(rng);
    cam.cam_to_world.topRightCorner<3, 1>() = Eigen::Vector3d(u01(rng), u01(rng), u01(rng)) * 4.0;
    const double u = 64.0 * u01(rng);
    const double v = 48.0 * u01(rng);
    const double d = 0.1 + 5.0 * u01(rng);
    const auto p = project_point(cam, backproject(cam, u, v, d));
    REQUIRE(p);
    CHECK(std::abs(p->u - u) < 1e-9);
    CHECK(std::abs(p->v - v) < 1e-9);
    CHECK(std::abs(p->depth - d) < 1e-9);
  }
}

TEST_CASE("camera validation") {
  Camera cam = testing::simple_camera();
  CHECK_NOTHROW(cam.validate());
  Camera bad = cam;
  bad.cam_to_world(0, 0) = 1.01;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::NonOrthonormalRotation);
  bad = cam;
  bad.cam_to_world.topLeftCorner<3, 3>() = Eigen::Vector3d(1, 1, -1).asDiagonal();
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::NonOrthonormalRotation);
  bad = cam;
  bad.fx = 0.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
  bad = cam;
  bad.cx = 100.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("depth validity") {
  Frame f = testing::plane_frame(3, 1, 2.0f);
  f.depth.at(1, 0) = 0.0f;
  f.depth.at(2, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK(f.has_valid_depth(0, 0));
  CHECK_FALSE(f.has_valid_depth(1, 0));
  CHECK_FALSE(f.has_valid_depth(2, 0));
  f.depth.at(2, 0) = std::numeric_limits<float>::infinity();
  CHECK_FALSE(f.has_valid_depth(2, 0));
  f.depth.at(2, 0) = -1.0f;
  CHECK_FALSE(f.has_valid_depth(2, 0));
}

TEST_CASE("normalize_poses") {
  SUBCASE("two cameras at +-5") {
    const SceneBundle n = normalize_poses(bundle_at({{5, 0, 0}, {-5, 0, 0}}));
    CHECK((n.frames[0].camera.center() - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
    CHECK((n.frames[1].camera.center() - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12);
    CHECK(n.scene_scale == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(n.frames[0].depth_at(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
  }
  SUBCASE("already normalized is a fixed point") {
    const SceneBundle b = bundle_at({{1, 0, 0}, {-1, 0.5, 0}, {0, -0.5, 0}});
    const SceneBundle n = normalize_poses(b);
    CHECK(n.scene_scale == 1.0);
    for (std::size_t i = 0; i < b.frames.size(); ++i) {
      CHECK((n.frames[i].camera.cam_to_world - b.frames[i].camera.cam_to_world).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("one camera is degenerate") {
    CHECK(kind_of([] { normalize_poses(bundle_at({{1, 2, 3}})); }) == ErrorKind::DegeneratePose);
    CHECK(kind_of([] { normalize_poses(bundle_at({{1, 2, 3}, {1, 2, 3}})); }) == ErrorKind::DegeneratePose);
  }
  SUBCASE("idempotent with unit extent and recoverable metric") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-7.0, 9.0);
    for (int trial = 0; trial < 50; ++trial) {
      SceneBundle b;
      for (int i = 0; i < 5; ++i) {
        Frame f = testing::plane_frame(4, 4, 2.0f);
        f.camera.cam_to_world.topLeftCorner<3, 3>() = testing::random_rotation(rng);
        f.camera.cam_to_world.topRightCorner<3, 1>() = Eigen::Vector3d(u(rng), u(rng), u(rng));
        b.frames.push_back(f);
      }
      const SceneBundle once = normalize_poses(b);
      const SceneBundle twice = normalize_poses(once);
      double extent = 0.0;
      for (std::size_t i = 0; i < b.frames.size(); ++i) {
        extent = std::max(extent, once.frames[i].camera.center().cwiseAbs().maxCoeff());
        CHECK((once.frames[i].camera.cam_to_world - twice.frames[i].camera.cam_to_world).cwiseAbs().maxCoeff() <
              1e-12);
        const Eigen::Vector3d metric = b.frames[i].camera.center();
        CHECK((once.to_normalized(metric) - once.frames[i].camera.center()).norm() < 1e-12);
        // A surface point keeps its identity through normalization.
        const Eigen::Vector3d p0 = backproject(b.frames[i].camera, 1.5, 2.5, b.frames[i].depth_at(1, 2));
        const Eigen::Vector3d p1 = backproject(once.frames[i].camera, 1.5, 2.5, once.frames[i].depth_at(1, 2));
        CHECK((once.to_normalized(p0) - p1).norm() < 1e-12);
      }
      CHECK(std::abs(extent - 1.0) < 1e-12);
      CHECK(std::abs(twice.scene_scale - once.scene_scale) < 1e-12 * once.scene_scale);
    }
  }
}

TEST_CASE("bundle save and load round trip") {
  TempDir dir;
  SceneBundle b;
  b.name = "tiny";
  Frame f = testing::plane_frame(4, 4, 2.0f);
  f.mask = Raster<std::uint8_t>(4, 4, 1);
  f.mask->at(0, 0) = 0;
  b.frames.push_back(f);
  save_scene_bundle(b, dir.path());
  const SceneBundle loaded = load_scene_bundle(dir.path());
  REQUIRE(loaded.frames.size() == 1);
  CHECK(loaded.name == "tiny");
  int valid = 0;
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) valid += loaded.frames[0].has_valid_depth(x, y);
  }
  CHECK(valid == 16);
  CHECK(loaded.frames[0].mask_area() == 15);
  CHECK(loaded.frames[0].depth.data == f.depth.data);
  CHECK(loaded.frames[0].image.pixels == f.image.pixels);
}

TEST_CASE("bundle loader rejects bad inputs") {
  TempDir dir;
  CHECK(kind_of([&] { load_scene_bundle(dir.path()); }) == ErrorKind::MissingManifest);

  SceneBundle b;
  b.name = "bad";
  b.frames.push_back(testing::plane_frame(4, 4, 2.0f));
  save_scene_bundle(b, dir.path());

  SUBCASE("depth raster 3x4 for a 4x4 camera") {
    write_depth_file(dir / "frame_000_depth.f32", Raster<float>(3, 4, 2.0f));
    CHECK(kind_of([&] { load_scene_bundle(dir.path()); }) == ErrorKind::DimensionMismatch);
  }
  SUBCASE("non-orthonormal rotation") {
    std::ifstream in(dir / "manifest.json");
    auto m = nlohmann::json::parse(in);
    in.close();
    m["frames"][0]["cam_to_world"][0] = 2.0;
    std::ofstream(dir / "manifest.json") << m.dump();
    CHECK(kind_of([&] { load_scene_bundle(dir.path()); }) == ErrorKind::NonOrthonormalRotation);
  }
  SUBCASE("unreadable depth") {
    std::filesystem::remove(dir / "frame_000_depth.f32");
    CHECK(kind_of([&] { load_scene_bundle(dir.path()); }) == ErrorKind::UnreadableFile);
  }
  SUBCASE("image size mismatch") {
    png::write_rgb(dir / "frame_000.png", RgbImage{5, 4, std::vector<std::uint8_t>(60, 0)});
    CHECK(kind_of([&] { load_scene_bundle(dir.path()); }) == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("mask threshold at 127") {
  TempDir dir;
  SceneBundle b;
  b.name = "m";
  Frame f = testing::plane_frame(2, 1, 1.0f);
  f.mask = Raster<std::uint8_t>(2, 1, 1);
  b.frames.push_back(f);
  save_scene_bundle(b, dir.path());
  Raster<std::uint8_t> raw(2, 1);
  raw.at(0, 0) = 127;
  raw.at(1, 0) = 128;
  png::write_gray(dir / "frame_000_mask.png", raw);
  const SceneBundle loaded = load_scene_bundle(dir.path());
  CHECK(loaded.frames[0].mask->at(0, 0) == 0);
  CHECK(loaded.frames[0].mask->at(1, 0) == 1);
}

TEST_CASE("20-frame synthetic orbit loads with masks on every frame") {
  TempDir dir;
  generate_scene(SyntheticSpec::plate(), dir.path());
  const SceneBundle b = load_scene_bundle(dir.path());
  CHECK(b.frames.size() == 20);
  CHECK(b.has_masks());
  for (const auto& f : b.frames) CHECK(f.mask.has_value());
}
