#include "propfield/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/materials.hpp"
#include "propfield/png_io.hpp"

namespace propfield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct Distractor {
  const char* name;
  std::array<double, 6> values;  // density, friction, hardness (0-200), youngs, thermal, custom
  double thickness_cm;
};

constexpr std::array kDistractors{
    Distractor{"steel", {7850, 0.45, 180, 200, 50, 1}, 0.2},
    Distractor{"glass", {2500, 0.4, 190, 70, 1.0, 1}, 0.5},
    Distractor{"oak wood", {750, 0.5, 170, 11, 0.17, 1}, 2.0},
    Distractor{"plastic", {1050, 0.35, 160, 2.5, 0.2, 1}, 0.5},
    Distractor{"aluminum", {2700, 0.4, 175, 69, 205, 1}, 0.2},
    Distractor{"rubber", {1200, 0.8, 60, 0.05, 0.15, 1}, 1.0},
    Distractor{"ceramic", {2300, 0.5, 195, 300, 1.5, 1}, 0.5},
    Distractor{"fabric", {300, 0.6, 20, 0.01, 0.04, 1}, 0.2},
};

constexpr std::array<std::array<double, 3>, 4> kPalette{{
    {200, 170, 120},
    {90, 120, 200},
    {180, 80, 70},
    {110, 170, 90},
}};

std::string casefold(std::string_view s) {
  std::string out;
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  for (std::size_t i = b; i < e; ++i) out += static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
  return out;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorKind::InvalidArgument, "expected a 3-vector");
  return {v[0], v[1], v[2]};
}

std::string matid_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03zu_matid.u8", i);
  return buf;
}

}  // namespace

std::string_view to_string(SyntheticShape shape) {
  switch (shape) {
    case SyntheticShape::Plate: return "plate";
    case SyntheticShape::Box: return "box";
    case SyntheticShape::TwoMaterialBox: return "two-material-box";
    case SyntheticShape::Sphere: return "sphere";
  }
  return "plate";
}

SyntheticShape parse_shape(std::string_view name) {
  for (auto s : {SyntheticShape::Plate, SyntheticShape::Box, SyntheticShape::TwoMaterialBox, SyntheticShape::Sphere}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown synthetic shape \"" + std::string(name) + "\"");
}

void SyntheticSpec::validate() const {
  const std::size_t want_parts = shape == SyntheticShape::TwoMaterialBox ? 2 : 1;
  if (parts.size() != want_parts) {
    throw Error(ErrorKind::InvalidArgument, std::string(to_string(shape)) + " needs " + std::to_string(want_parts) +
                                                " material part(s)");
  }
  const int used = shape == SyntheticShape::Sphere ? 1 : shape == SyntheticShape::Plate ? 2 : 3;
  for (int i = 0; i < used; ++i) {
    if (!(dimensions[i] > 0.0)) throw Error(ErrorKind::InvalidArgument, "synthetic dimensions must be > 0");
  }
  for (const auto& p : parts) {
    if (p.name.empty()) throw Error(ErrorKind::InvalidArgument, "synthetic part needs a material name");
    if (!(p.thickness_cm >= 0.0) || !(p.value >= 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "synthetic part values must be non-negative");
    }
  }
  if (shape == SyntheticShape::TwoMaterialBox && casefold(parts[0].name) == casefold(parts[1].name)) {
    throw Error(ErrorKind::InvalidArgument, "two-material box needs distinct materials");
  }
  if (cameras < 1 || width < 1 || height < 1) throw Error(ErrorKind::InvalidArgument, "need cameras and pixels");
  if (!(orbit_radius > 1.5 * (bounding_radius() + center.norm()))) {
    throw Error(ErrorKind::InvalidArgument, "orbit radius must clear the object");
  }
}

double SyntheticSpec::bounding_radius() const {
  switch (shape) {
    case SyntheticShape::Plate: return 0.5 * std::hypot(dimensions.x(), dimensions.y());
    case SyntheticShape::Box:
    case SyntheticShape::TwoMaterialBox: return 0.5 * dimensions.norm();
    case SyntheticShape::Sphere: return dimensions.x();
  }
  return dimensions.norm();
}

SyntheticSpec SyntheticSpec::plate() {
  SyntheticSpec s;
  s.shape = SyntheticShape::Plate;
  s.dimensions = {0.1, 0.1, 0.0};
  s.parts = {{"polymer sheet", 1000.0, 1.0}};
  s.name = "plate";
  return s;
}

SyntheticSpec SyntheticSpec::box() {
  SyntheticSpec s;
  s.shape = SyntheticShape::Box;
  s.dimensions = {0.1, 0.1, 0.1};
  s.parts = {{"cardboard", 700.0, 0.5}};
  s.orbit_radius = 0.5;
  s.name = "box";
  return s;
}

SyntheticSpec SyntheticSpec::hollow_box() {
  SyntheticSpec s = box();
  s.parts = {{"acrylic", 1000.0, 1.0}};
  s.name = "hollow-box";
  return s;
}

SyntheticSpec SyntheticSpec::two_material_box() {
  SyntheticSpec s = box();
  s.shape = SyntheticShape::TwoMaterialBox;
  s.parts = {{"marble", 2700.0, 2.0}, {"pine wood", 500.0, 1.5}};
  s.name = "two-material-box";
  return s;
}

SyntheticSpec SyntheticSpec::sphere() {
  SyntheticSpec s;
  s.shape = SyntheticShape::Sphere;
  s.dimensions = {0.05, 0.0, 0.0};
  s.parts = {{"hard rubber", 1100.0, 0.5}};
  s.orbit_radius = 0.3;
  s.name = "sphere";
  return s;
}

SyntheticSpec SyntheticSpec::preset(std::string_view name) {
  if (name == "plate") return plate();
  if (name == "box") return box();
  if (name == "hollow-box") return hollow_box();
  if (name == "two-material-box") return two_material_box();
  if (name == "sphere") return sphere();
  throw Error(ErrorKind::InvalidArgument, "unknown synthetic preset \"" + std::string(name) + "\"");
}

json to_json(const SyntheticSpec& spec) {
  json parts = json::array();
  for (const auto& p : spec.parts) {
    parts.push_back({{"name", p.name}, {"value", p.value}, {"thickness_cm", p.thickness_cm}});
  }
  return {{"shape", std::string(to_string(spec.shape))},
          {"dimensions", vec3(spec.dimensions)},
          {"center", vec3(spec.center)},
          {"parts", parts},
          {"cameras", spec.cameras},
          {"orbit_radius", spec.orbit_radius},
          {"elevation_deg", spec.elevation_deg},
          {"width", spec.width},
          {"height", spec.height},
          {"masks", spec.masks},
          {"seed", spec.seed},
          {"name", spec.name}};
}

SyntheticSpec synthetic_spec_from_json(const json& doc) {
  SyntheticSpec s;
  try {
    s.shape = parse_shape(doc.at("shape").get<std::string>());
    s.dimensions = vec3(doc.at("dimensions"));
    s.center = vec3(doc.at("center"));
    for (const auto& p : doc.at("parts")) {
      s.parts.push_back({p.at("name").get<std::string>(), p.at("value").get<double>(),
                         p.at("thickness_cm").get<double>()});
    }
    s.cameras = doc.at("cameras").get<int>();
    s.orbit_radius = doc.at("orbit_radius").get<double>();
    s.elevation_deg = doc.at("elevation_deg").get<double>();
    s.width = doc.at("width").get<int>();
    s.height = doc.at("height").get<int>();
    s.masks = doc.at("masks").get<bool>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.name = doc.at("name").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed synthetic spec: ") + e.what());
  }
  return s;
}

std::optional<SurfaceHit> intersect(const SyntheticSpec& spec, const Eigen::Vector3d& origin,
                                    const Eigen::Vector3d& direction) {
  const Eigen::Vector3d o = origin - spec.center;
  const Eigen::Vector3d& d = direction;
  switch (spec.shape) {
    case SyntheticShape::Plate: {
      if (d.z() == 0.0) return std::nullopt;
      const double t = -o.z() / d.z();
      if (!(t > 0.0)) return std::nullopt;
      const Eigen::Vector3d p = o + t * d;
      if (std::abs(p.x()) > 0.5 * spec.dimensions.x() || std::abs(p.y()) > 0.5 * spec.dimensions.y()) {
        return std::nullopt;
      }
      return SurfaceHit{t, 0, Eigen::Vector3d(0, 0, d.z() < 0.0 ? 1.0 : -1.0)};
    }
    case SyntheticShape::Box:
    case SyntheticShape::TwoMaterialBox: {
      const Eigen::Vector3d half = 0.5 * spec.dimensions;
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      int axis = -1;
      double sign = 0.0;
      for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
          if (std::abs(o[a]) > half[a]) return std::nullopt;
          continue;
        }
        double t0 = (-half[a] - o[a]) / d[a];
        double t1 = (half[a] - o[a]) / d[a];
        double entry_sign = -1.0;
        if (t0 > t1) {
          std::swap(t0, t1);
          entry_sign = 1.0;
        }
        if (t0 > t_near) {
          t_near = t0;
          axis = a;
          sign = entry_sign;
        }
        t_far = std::min(t_far, t1);
      }
      if (axis < 0 || t_near > t_far || !(t_near > 0.0)) return std::nullopt;
      Eigen::Vector3d n = Eigen::Vector3d::Zero();
      n[axis] = sign;
      int part = 0;
      if (spec.shape == SyntheticShape::TwoMaterialBox) part = (axis == 2 && sign > 0.0) ? 0 : 1;
      return SurfaceHit{t_near, part, n};
    }
    case SyntheticShape::Sphere: {
      const double r = spec.dimensions.x();
      const double a = d.squaredNorm();
      const double b = o.dot(d);
      const double c = o.squaredNorm() - r * r;
      const double disc = b * b - a * c;
      if (disc < 0.0) return std::nullopt;
      const double t = (-b - std::sqrt(disc)) / a;
      if (!(t > 0.0)) return std::nullopt;
      return SurfaceHit{t, 0, (o + t * d).normalized()};
    }
  }
  return std::nullopt;
}

std::vector<double> part_areas(const SyntheticSpec& spec) {
  const Eigen::Vector3d& s = spec.dimensions;
  switch (spec.shape) {
    case SyntheticShape::Plate: return {s.x() * s.y()};
    case SyntheticShape::Box: return {2.0 * (s.x() * s.y() + s.y() * s.z() + s.z() * s.x())};
    case SyntheticShape::TwoMaterialBox:
      return {s.x() * s.y(), s.x() * s.y() + 2.0 * (s.y() * s.z() + s.z() * s.x())};
    case SyntheticShape::Sphere: return {4.0 * kPi * s.x() * s.x()};
  }
  return {};
}

double analytic_mass(const SyntheticSpec& spec) {
  const auto areas = part_areas(spec);
  double mass = 0.0;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    mass += spec.parts[i].value * spec.parts[i].thickness_cm * 0.01 * areas[i];
  }
  return mass;
}

json to_json(const GroundTruth& gt) {
  json pts = json::array();
  for (const auto& p : gt.per_point) {
    pts.push_back({{"xyz", vec3(p.xyz)}, {"material", p.material}, {"value", p.value}});
  }
  return {{"mass_kg", gt.mass_kg}, {"per_point", pts}};
}

GroundTruth load_ground_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
  GroundTruth gt;
  try {
    const json doc = json::parse(in);
    gt.mass_kg = doc.at("mass_kg").get<double>();
    for (const auto& p : doc.at("per_point")) {
      gt.per_point.push_back({vec3(p.at("xyz")), p.at("material").get<std::string>(), p.at("value").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::UnreadableFile, path.string() + ": " + e.what());
  }
  return gt;
}

std::vector<Camera> orbit_cameras(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  const double step = 2.0 * kPi / spec.cameras;
  const double elevation = spec.elevation_deg * kPi / 180.0;
  const double radius = spec.bounding_radius() + spec.center.norm();
  const double half_fov = std::asin(std::min(0.95, 1.2 * radius / spec.orbit_radius));
  const double focal = 0.5 * std::min(spec.width, spec.height) / std::tan(half_fov);

  std::vector<Camera> cams;
  for (int i = 0; i < spec.cameras; ++i) {
    const double az = step * (i + jitter(rng));
    const double el = (i % 2 == 0) ? elevation : -elevation;
    const Eigen::Vector3d pos =
        spec.orbit_radius * Eigen::Vector3d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    const Eigen::Vector3d forward = (-pos).normalized();
    const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Camera cam;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * spec.width;
    cam.cy = 0.5 * spec.height;
    cam.cam_to_world.setIdentity();
    cam.cam_to_world.block<3, 1>(0, 0) = right;
    cam.cam_to_world.block<3, 1>(0, 1) = down;
    cam.cam_to_world.block<3, 1>(0, 2) = forward;
    cam.cam_to_world.block<3, 1>(0, 3) = pos;
    cams.push_back(cam);
  }
  return cams;
}

namespace {

std::vector<GroundTruthPoint> sample_surface(const SyntheticSpec& spec) {
  std::vector<GroundTruthPoint> out;
  const auto add = [&](const Eigen::Vector3d& local, int part) {
    out.push_back({spec.center + local, spec.parts[part].name, spec.parts[part].value});
  };
  const Eigen::Vector3d half = 0.5 * spec.dimensions;
  constexpr int n = 16;
  const auto grid = [&](int i) { return (i + 0.5) / n * 2.0 - 1.0; };
  switch (spec.shape) {
    case SyntheticShape::Plate:
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) add({grid(i) * half.x(), grid(j) * half.y(), 0.0}, 0);
      }
      break;
    case SyntheticShape::Box:
    case SyntheticShape::TwoMaterialBox:
      for (int axis = 0; axis < 3; ++axis) {
        for (double sign : {-1.0, 1.0}) {
          const int part = spec.shape == SyntheticShape::TwoMaterialBox && !(axis == 2 && sign > 0.0) ? 1 : 0;
          const int a1 = (axis + 1) % 3;
          const int a2 = (axis + 2) % 3;
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
              Eigen::Vector3d p;
              p[axis] = sign * half[axis];
              p[a1] = grid(i) * half[a1];
              p[a2] = grid(j) * half[a2];
              add(p, part);
            }
          }
        }
      }
      break;
    case SyntheticShape::Sphere: {
      constexpr int count = 600;
      const double golden = kPi * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < count; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / count;
        const double r = std::sqrt(1.0 - z * z);
        add(spec.dimensions.x() * Eigen::Vector3d(r * std::cos(golden * i), r * std::sin(golden * i), z), 0);
      }
      break;
    }
  }
  return out;
}

}  // namespace

RenderedScene render_scene(const SyntheticSpec& spec) { return render_scene(spec, orbit_cameras(spec)); }

RenderedScene render_scene(const SyntheticSpec& spec, const std::vector<Camera>& cams) {
  spec.validate();
  RenderedScene scene;
  scene.bundle.name = spec.name;
  for (std::size_t f = 0; f < cams.size(); ++f) {
    const Camera& cam = cams[f];
    Frame frame;
    frame.camera = cam;
    frame.depth = Raster<float>(cam.width, cam.height, std::numeric_limits<float>::infinity());
    Raster<std::uint8_t> ids(cam.width, cam.height, RenderedScene::kBackground);
    Raster<std::uint8_t> mask(cam.width, cam.height, 0);
    std::vector<double> exact(static_cast<std::size_t>(cam.width) * cam.height,
                              std::numeric_limits<double>::infinity());
    frame.image = RgbImage{cam.width, cam.height, std::vector<std::uint8_t>(exact.size() * 3, 0)};
    const Eigen::Matrix3d rot = cam.rotation();
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const Eigen::Vector3d dir = rot * Eigen::Vector3d((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
        const auto hit = intersect(spec, cam.center(), dir);
        if (!hit) continue;
        const std::size_t idx = static_cast<std::size_t>(y) * cam.width + x;
        exact[idx] = hit->t;
        frame.depth.at(x, y) = static_cast<float>(hit->t);
        ids.at(x, y) = static_cast<std::uint8_t>(hit->part);
        mask.at(x, y) = 1;
        const double shade = 0.35 + 0.65 * std::abs(hit->normal.dot(dir.normalized()));
        for (int c = 0; c < 3; ++c) {
          frame.image.pixels[idx * 3 + c] =
              static_cast<std::uint8_t>(std::lround(kPalette[hit->part % kPalette.size()][c] * shade));
        }
      }
    }
    if (spec.masks) frame.mask = std::move(mask);
    frame.image_path = "frame.png";
    scene.bundle.frames.push_back(std::move(frame));
    scene.material_ids.push_back(std::move(ids));
    scene.exact_depth.push_back(std::move(exact));
  }
  scene.ground_truth.mass_kg = analytic_mass(spec);
  scene.ground_truth.per_point = sample_surface(spec);
  return scene;
}

RenderedScene generate_scene(const SyntheticSpec& spec, const fs::path& dir) {
  RenderedScene scene = render_scene(spec);
  save_scene_bundle(scene.bundle, dir);

  json matids = json::array();
  for (std::size_t f = 0; f < scene.material_ids.size(); ++f) {
    const auto& ids = scene.material_ids[f];
    std::ofstream out(dir / matid_name(f), std::ios::binary);
    out.write(reinterpret_cast<const char*>(ids.data.data()), static_cast<std::streamsize>(ids.data.size()));
    matids.push_back(matid_name(f));
  }
  json materials = json::array();
  for (std::size_t i = 0; i < spec.parts.size(); ++i) {
    materials.push_back({{"id", i},
                         {"name", spec.parts[i].name},
                         {"value", spec.parts[i].value},
                         {"thickness_cm", spec.parts[i].thickness_cm}});
  }
  const json meta = {{"spec", to_json(spec)}, {"materials", materials}, {"material_ids", matids}};
  std::ofstream(dir / "synthetic.json") << meta.dump(2) << "\n";
  std::ofstream(dir / "ground_truth.json") << to_json(scene.ground_truth).dump(2) << "\n";
  return scene;
}

MockModelProvider::MockModelProvider(SyntheticSpec spec, std::vector<Raster<std::uint8_t>> material_ids,
                                     double noise, std::uint64_t seed, std::size_t dim)
    : spec_(std::move(spec)), material_ids_(std::move(material_ids)), noise_(noise), seed_(seed), dim_(dim) {
  if (!(noise_ >= 0.0)) throw Error(ErrorKind::InvalidArgument, "mock noise must be >= 0");
  for (const auto& p : spec_.parts) {
    std::array<double, 6> values;
    values.fill(p.value);
    materials_.push_back({p.name, values, p.thickness_cm});
  }
  for (const auto& d : kDistractors) {
    if (!basis_of(d.name)) materials_.push_back({d.name, d.values, d.thickness_cm});
  }
  if (dim_ < materials_.size() + 1) {
    throw Error(ErrorKind::InvalidArgument, "mock embedding dimension must exceed the material count");
  }
}

MockModelProvider MockModelProvider::from_scene_dir(const fs::path& dir, double noise, std::uint64_t seed,
                                                    std::size_t dim) {
  std::ifstream in(dir / "synthetic.json");
  if (!in) {
    throw Error(ErrorKind::Config, "mock provider needs a generated synthetic scene (no synthetic.json in " +
                                       dir.string() + ")");
  }
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::UnreadableFile, std::string("synthetic.json: ") + e.what());
  }
  SyntheticSpec spec = synthetic_spec_from_json(meta.at("spec"));
  std::vector<Raster<std::uint8_t>> ids;
  for (const auto& name : meta.at("material_ids")) {
    Raster<std::uint8_t> r(spec.width, spec.height);
    std::ifstream f(dir / name.get<std::string>(), std::ios::binary);
    f.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
    if (!f) throw Error(ErrorKind::UnreadableFile, "cannot read material-ID raster " + name.get<std::string>());
    ids.push_back(std::move(r));
  }
  return MockModelProvider(std::move(spec), std::move(ids), noise, seed, dim);
}

std::optional<std::size_t> MockModelProvider::basis_of(std::string_view name) const {
  const std::string key = casefold(name);
  for (std::size_t i = 0; i < materials_.size(); ++i) {
    if (casefold(materials_[i].name) == key) return i;
  }
  return std::nullopt;
}

std::vector<Embedding> MockModelProvider::embed_patches(const Frame&, std::size_t frame_index,
                                                        std::span<const PixelCenter> centers, int) {
  if (frame_index >= material_ids_.size()) {
    throw Error(ErrorKind::Provider, "mock provider has no material-ID raster for frame " + std::to_string(frame_index));
  }
  const auto& ids = material_ids_[frame_index];
  std::vector<Embedding> out;
  out.reserve(centers.size());
  for (const auto& c : centers) {
    const int x = std::clamp(c.x, 0, ids.width - 1);
    const int y = std::clamp(c.y, 0, ids.height - 1);
    const std::uint8_t id = ids.at(x, y);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    v[id == RenderedScene::kBackground ? static_cast<Eigen::Index>(dim_ - 1) : id] = 1.0;
    if (noise_ > 0.0) {
      std::uint64_t h = splitmix(seed_);
      h = splitmix(h ^ frame_index);
      h = splitmix(h ^ static_cast<std::uint64_t>(x));
      h = splitmix(h ^ static_cast<std::uint64_t>(y));
      std::mt19937_64 rng(h);
      std::normal_distribution<double> gauss;
      Eigen::VectorXd g(v.size());
      for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = gauss(rng);
      v += noise_ * g.normalized();
    }
    v.normalize();
    out.emplace_back(v.data(), v.data() + v.size());
  }
  return out;
}

std::vector<Embedding> MockModelProvider::embed_text(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  for (const auto& t : texts) {
    const auto basis = basis_of(t);
    if (!basis) throw Error(ErrorKind::Provider, "mock provider does not know material \"" + t + "\"");
    Embedding e(dim_, 0.0f);
    e[*basis] = 1.0f;
    out.push_back(std::move(e));
  }
  return out;
}

std::string MockModelProvider::caption(const Frame&, std::size_t, const std::string&) {
  std::string names;
  for (std::size_t i = 0; i < spec_.parts.size(); ++i) {
    if (i) names += " and ";
    names += spec_.parts[i].name;
  }
  std::string shape(to_string(spec_.shape));
  std::replace(shape.begin(), shape.end(), '-', ' ');
  return "a synthetic " + shape + " made of " + names;
}

std::string MockModelProvider::complete(const std::string& system, const std::string& user) {
  std::smatch m;
  std::vector<std::string> requested;
  static const std::regex materials_re("Materials: \"([^\"]*)\"");
  if (std::regex_search(user, m, materials_re)) {
    std::stringstream ss(m[1].str());
    std::string name;
    while (std::getline(ss, name, ',')) requested.push_back(casefold(name));
  }
  const auto lookup = [&](const std::string& name) -> const Material* {
    const auto b = basis_of(name);
    return b ? &materials_[*b] : nullptr;
  };

  if (system.find("thickness (in cm)") != std::string::npos) {
    std::vector<MaterialEntry> entries;
    for (const auto& name : requested) {
      const Material* mat = lookup(name);
      const double t = mat ? mat->thickness_cm : 0.5;
      entries.push_back({name, {}, ValueRange{t, t}, std::nullopt});
    }
    return render_thickness_response(entries);
  }

  PropertyKind kind = PropertyKind::Custom;
  if (system.find("mass densities") != std::string::npos) kind = PropertyKind::MassDensity;
  else if (system.find("friction coefficient") != std::string::npos) kind = PropertyKind::Friction;
  else if (system.find("Shore") != std::string::npos) kind = PropertyKind::Hardness;
  else if (system.find("Young's modulus") != std::string::npos) kind = PropertyKind::YoungsModulus;
  else if (system.find("thermal conductivity") != std::string::npos) kind = PropertyKind::ThermalConductivity;

  static const std::regex count_re("list of ([0-9]+) \\(");
  std::size_t k = spec_.parts.size();
  if (std::regex_search(system, m, count_re)) k = std::stoul(m[1].str());

  std::vector<const Material*> chosen;
  if (!requested.empty()) {
    for (const auto& name : requested) chosen.push_back(lookup(name));
  } else {
    for (std::size_t i = 0; i < std::min(k, materials_.size()); ++i) chosen.push_back(&materials_[i]);
  }
  std::vector<MaterialEntry> entries;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    MaterialEntry e;
    e.name = chosen[i] ? chosen[i]->name : requested[i];
    const double v = chosen[i] ? chosen[i]->values[static_cast<std::size_t>(kind)] : 1.0;
    e.value = {v, v};
    if (kind == PropertyKind::Hardness) {
      e.shore = v > 100.0 ? ShoreScale::D : ShoreScale::A;
      if (v > 100.0) e.value = {v - 100.0, v - 100.0};
    }
    entries.push_back(std::move(e));
  }
  return render_material_response(entries, kind);
}

}  // namespace propfield
