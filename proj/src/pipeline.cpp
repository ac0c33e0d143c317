#include "propfield/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/ply.hpp"
#include "propfield/synthetic.hpp"

namespace propfield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
void write_raw(const fs::path& path, std::span<const T> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
std::vector<T> read_raw(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  if (bytes.size() % sizeof(T) != 0) {
    throw Error(ErrorKind::DimensionMismatch, path.string() + " has a truncated record");
  }
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorKind::Config, "expected a 3-vector");
  return {v[0], v[1], v[2]};
}

/// Bytes of every regular file directly inside the scene directory.
std::string scene_fingerprint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::MissingManifest, "scene directory " + dir.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) acc += f.filename().string() + ":" + fnv1a_hex(read_bytes(f)) + ";";
  return fnv1a_hex(acc);
}

std::string provider_fingerprint(const PipelineConfig& cfg) {
  const ProviderConfig& p = cfg.provider;
  json doc = {{"mode", std::string(to_string(p.mode))}};
  switch (p.mode) {
    case ProviderMode::Mock:
      doc["noise"] = p.noise;
      doc["dim"] = p.dim;
      doc["seed"] = cfg.seed;
      break;
    case ProviderMode::File:
      for (const auto& [key, path] : {std::pair{"patches", p.patch_embeddings}, std::pair{"text", p.text_embeddings},
                                      std::pair{"language", p.language}}) {
        doc[key] = path.empty() || !fs::exists(path) ? std::string() : fnv1a_hex(read_bytes(path));
      }
      break;
    case ProviderMode::Http: doc["endpoint"] = p.endpoint; break;
  }
  return doc.dump();
}

json sampling_json(const SamplingConfig& s) {
  return {{"n_rays", s.n_rays},
          {"voxel_grid", s.voxel_grid},
          {"bbox", {{"min", vec3(s.bbox.min)}, {"max", vec3(s.bbox.max)}}},
          {"outlier_k", s.outlier_k},
          {"outlier_sigma", s.outlier_sigma}};
}

json fusion_json(const FusionConfig& f) {
  return {{"patch_size", f.patch_size}, {"occlusion_threshold", f.occlusion_threshold}, {"feature_dim", f.feature_dim}};
}

json mass_json(const MassConfig& m) {
  return {{"surface_grid", m.surface_grid},
          {"carve_grid", m.carve_grid},
          {"calibration", m.calibration},
          {"clamp", m.clamp}};
}

template <typename T>
void maybe(const json& doc, const char* key, T& out) {
  if (doc.contains(key) && !doc.at(key).is_null()) out = doc.at(key).get<T>();
}

}  // namespace

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

std::string_view to_string(ProviderMode mode) {
  switch (mode) {
    case ProviderMode::Mock: return "mock";
    case ProviderMode::File: return "file";
    case ProviderMode::Http: return "http";
  }
  return "mock";
}

ProviderMode parse_provider_mode(std::string_view name) {
  if (name == "mock") return ProviderMode::Mock;
  if (name == "file") return ProviderMode::File;
  if (name == "http") return ProviderMode::Http;
  throw Error(ErrorKind::Config, "unknown provider mode \"" + std::string(name) + "\" (expected mock, file or http)");
}

void PipelineConfig::validate() const {
  sampling.validate();
  fusion.validate();
  resolved_kernel().validate();
  mass.validate();
  if (retries < 1) throw Error(ErrorKind::Config, "retries must be >= 1");
  if (material_count > 16) throw Error(ErrorKind::Config, "material_count must be <= 16");
  if (provider.mode == ProviderMode::Http && provider.endpoint.empty()) {
    throw Error(ErrorKind::Config, "http provider needs an endpoint");
  }
  if (provider.mode == ProviderMode::Mock && !(provider.noise >= 0.0)) {
    throw Error(ErrorKind::Config, "mock noise must be >= 0");
  }
  if (property == PropertyKind::Custom && custom_property.empty()) {
    throw Error(ErrorKind::Config, "custom property needs a name");
  }
  if (!cache_dir.empty()) {
    std::error_code ec;
    fs::create_directories(cache_dir, ec);
    if (ec) throw Error(ErrorKind::Config, "cannot create cache directory " + cache_dir.string());
  }
}

KernelConfig PipelineConfig::resolved_kernel() const {
  KernelConfig k = kernel;
  k.temperature = temperature.value_or(default_temperature(property));
  return k;
}

std::size_t PipelineConfig::resolved_material_count() const {
  return material_count == 0 ? default_material_count(property) : material_count;
}

json to_json(const PipelineConfig& cfg) {
  json temperature = cfg.temperature ? json(*cfg.temperature) : json(nullptr);
  return {{"sampling", sampling_json(cfg.sampling)},
          {"fusion", fusion_json(cfg.fusion)},
          {"kernel",
           {{"temperature", temperature},
            {"text_prompt_template", cfg.kernel.text_prompt_template},
            {"retrieval", cfg.kernel.retrieval}}},
          {"mass", mass_json(cfg.mass)},
          {"materials",
           {{"k", cfg.material_count},
            {"retries", cfg.retries},
            {"custom_property", cfg.custom_property},
            {"custom_units", cfg.custom_units}}},
          {"provider",
           {{"mode", std::string(to_string(cfg.provider.mode))},
            {"endpoint", cfg.provider.endpoint},
            {"noise", cfg.provider.noise},
            {"dim", cfg.provider.dim},
            {"patch_embeddings", cfg.provider.patch_embeddings.string()},
            {"text_embeddings", cfg.provider.text_embeddings.string()},
            {"language", cfg.provider.language.string()}}},
          {"property", std::string(to_string(cfg.property))},
          {"no_thickness", cfg.no_thickness},
          {"uniform_feature", cfg.uniform_feature},
          {"cache_dir", cfg.cache_dir.string()},
          {"seed", cfg.seed}};
}

PipelineConfig pipeline_config_from_json(const json& doc, PipelineConfig cfg) {
  try {
    if (doc.contains("sampling")) {
      const json& s = doc.at("sampling");
      maybe(s, "n_rays", cfg.sampling.n_rays);
      maybe(s, "voxel_grid", cfg.sampling.voxel_grid);
      maybe(s, "outlier_k", cfg.sampling.outlier_k);
      maybe(s, "outlier_sigma", cfg.sampling.outlier_sigma);
      if (s.contains("bbox")) {
        const json& b = s.at("bbox");
        if (b.is_string()) {
          const auto name = b.get<std::string>();
          if (name == "unit") cfg.sampling.bbox = Aabb::unit_box();
          else if (name == "tabletop") cfg.sampling.bbox = Aabb::tabletop_box();
          else throw Error(ErrorKind::Config, "unknown bbox preset \"" + name + "\"");
        } else {
          cfg.sampling.bbox = Aabb{vec3(b.at("min")), vec3(b.at("max"))};
        }
      }
    }
    if (doc.contains("fusion")) {
      const json& f = doc.at("fusion");
      maybe(f, "patch_size", cfg.fusion.patch_size);
      maybe(f, "occlusion_threshold", cfg.fusion.occlusion_threshold);
      maybe(f, "feature_dim", cfg.fusion.feature_dim);
    }
    if (doc.contains("kernel")) {
      const json& k = doc.at("kernel");
      if (k.contains("temperature")) {
        cfg.temperature = k.at("temperature").is_null() ? std::nullopt
                                                        : std::optional<double>(k.at("temperature").get<double>());
      }
      maybe(k, "text_prompt_template", cfg.kernel.text_prompt_template);
      maybe(k, "retrieval", cfg.kernel.retrieval);
    }
    if (doc.contains("mass")) {
      const json& m = doc.at("mass");
      maybe(m, "surface_grid", cfg.mass.surface_grid);
      maybe(m, "carve_grid", cfg.mass.carve_grid);
      maybe(m, "calibration", cfg.mass.calibration);
      maybe(m, "clamp", cfg.mass.clamp);
    }
    if (doc.contains("materials")) {
      const json& m = doc.at("materials");
      maybe(m, "k", cfg.material_count);
      maybe(m, "retries", cfg.retries);
      maybe(m, "custom_property", cfg.custom_property);
      maybe(m, "custom_units", cfg.custom_units);
    }
    if (doc.contains("provider")) {
      const json& p = doc.at("provider");
      if (p.contains("mode")) cfg.provider.mode = parse_provider_mode(p.at("mode").get<std::string>());
      maybe(p, "endpoint", cfg.provider.endpoint);
      maybe(p, "noise", cfg.provider.noise);
      maybe(p, "dim", cfg.provider.dim);
      if (p.contains("patch_embeddings")) cfg.provider.patch_embeddings = p.at("patch_embeddings").get<std::string>();
      if (p.contains("text_embeddings")) cfg.provider.text_embeddings = p.at("text_embeddings").get<std::string>();
      if (p.contains("language")) cfg.provider.language = p.at("language").get<std::string>();
    }
    if (doc.contains("property")) cfg.property = parse_property_kind(doc.at("property").get<std::string>());
    maybe(doc, "no_thickness", cfg.no_thickness);
    maybe(doc, "uniform_feature", cfg.uniform_feature);
    if (doc.contains("cache_dir")) cfg.cache_dir = doc.at("cache_dir").get<std::string>();
    maybe(doc, "seed", cfg.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("malformed pipeline config: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return pipeline_config_from_json(read_json_file(path));
}

json read_json_file(const fs::path& path) {
  const std::string text = read_bytes(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::UnreadableFile, path.string() + ": " + e.what());
  }
}

struct ProviderSet::State {
  ProviderConfig cfg;
  fs::path scene;
  std::uint64_t seed;
  std::unique_ptr<MockModelProvider> mock;
  std::unique_ptr<HttpModelClient> http;
  std::unique_ptr<FilePatchEmbeddingProvider> file_patches;
  std::unique_ptr<FileTextEmbeddingProvider> file_text;
  std::unique_ptr<FileLanguageProvider> file_language;

  MockModelProvider& get_mock() {
    if (!mock) {
      mock = std::make_unique<MockModelProvider>(MockModelProvider::from_scene_dir(scene, cfg.noise, seed, cfg.dim));
    }
    return *mock;
  }
  HttpModelClient& get_http() {
    if (!http) http = std::make_unique<HttpModelClient>(cfg.endpoint);
    return *http;
  }
  static void need(const fs::path& p, const char* what) {
    if (p.empty()) throw Error(ErrorKind::Config, std::string("file provider needs provider.") + what);
  }
};

ProviderSet::ProviderSet(ProviderConfig cfg, fs::path scene_dir, std::uint64_t seed)
    : state_(std::make_unique<State>(State{std::move(cfg), std::move(scene_dir), seed, {}, {}, {}, {}, {}})) {}

ProviderSet::~ProviderSet() = default;

PatchEmbeddingProvider& ProviderSet::patches() {
  switch (state_->cfg.mode) {
    case ProviderMode::Mock: return state_->get_mock();
    case ProviderMode::Http: return state_->get_http();
    case ProviderMode::File:
      State::need(state_->cfg.patch_embeddings, "patch_embeddings");
      if (!state_->file_patches) {
        state_->file_patches = std::make_unique<FilePatchEmbeddingProvider>(state_->cfg.patch_embeddings);
      }
      return *state_->file_patches;
  }
  throw Error(ErrorKind::Config, "no provider");
}

TextEmbeddingProvider& ProviderSet::text() {
  switch (state_->cfg.mode) {
    case ProviderMode::Mock: return state_->get_mock();
    case ProviderMode::Http: return state_->get_http();
    case ProviderMode::File:
      State::need(state_->cfg.text_embeddings, "text_embeddings");
      if (!state_->file_text) state_->file_text = std::make_unique<FileTextEmbeddingProvider>(state_->cfg.text_embeddings);
      return *state_->file_text;
  }
  throw Error(ErrorKind::Config, "no provider");
}

CaptionProvider& ProviderSet::captioner() {
  switch (state_->cfg.mode) {
    case ProviderMode::Mock: return state_->get_mock();
    case ProviderMode::Http: return state_->get_http();
    case ProviderMode::File:
      State::need(state_->cfg.language, "language");
      if (!state_->file_language) state_->file_language = std::make_unique<FileLanguageProvider>(state_->cfg.language);
      return *state_->file_language;
  }
  throw Error(ErrorKind::Config, "no provider");
}

CompletionProvider& ProviderSet::completion() {
  switch (state_->cfg.mode) {
    case ProviderMode::Mock: return state_->get_mock();
    case ProviderMode::Http: return state_->get_http();
    case ProviderMode::File:
      captioner();
      return *state_->file_language;
  }
  throw Error(ErrorKind::Config, "no provider");
}

Pipeline::Pipeline(fs::path scene_dir, fs::path out_dir, PipelineConfig cfg, bool force)
    : scene_(std::move(scene_dir)), out_(std::move(out_dir)), cfg_(std::move(cfg)), force_(force) {
  cfg_.sampling.seed = cfg_.seed;
  cfg_.validate();
  if (out_.empty()) {
    if (cfg_.cache_dir.empty()) throw Error(ErrorKind::Config, "no output directory given");
    out_ = cfg_.cache_dir / scene_.filename();
  }
  fs::create_directories(out_);
}

Pipeline::~Pipeline() = default;

std::string Pipeline::property_tag() const {
  if (cfg_.property == PropertyKind::Custom) {
    std::string tag;
    for (char c : cfg_.custom_property) tag += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
    return "custom_" + tag;
  }
  return std::string(to_string(cfg_.property));
}

ProviderSet& Pipeline::providers() {
  if (!providers_) providers_ = std::make_unique<ProviderSet>(cfg_.provider, scene_, cfg_.seed);
  return *providers_;
}

SceneBundle Pipeline::load_bundle() const { return normalize_poses(load_scene_bundle(scene_)); }

fs::path Pipeline::require(const std::string& name) const {
  const fs::path p = out_ / name;
  if (!fs::exists(p)) throw Error(ErrorKind::MissingArtifact, "missing upstream artifact " + name + " in " + out_.string());
  return p;
}

std::string Pipeline::require_stamp(const std::string& stage) const {
  return read_json_file(require(stage + ".json")).at("hash").get<std::string>();
}

std::optional<StageResult> Pipeline::cached(const std::string& stage, const std::string& hash,
                                            const std::vector<std::string>& artifacts) const {
  if (force_) return std::nullopt;
  const fs::path stamp = out_ / (stage + ".json");
  if (!fs::exists(stamp)) return std::nullopt;
  try {
    if (read_json_file(stamp).at("hash").get<std::string>() != hash) return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  for (const auto& a : artifacts) {
    if (!fs::exists(out_ / a)) return std::nullopt;
  }
  StageResult r = done(hash, artifacts);
  r.cached = true;
  return r;
}

void Pipeline::write_stamp(const std::string& stage, const std::string& hash, json info) const {
  info["hash"] = hash;
  write_json(out_ / (stage + ".json"), info);
}

StageResult Pipeline::done(const std::string& hash, const std::vector<std::string>& artifacts) const {
  StageResult r;
  r.hash = hash;
  for (const auto& a : artifacts) r.artifacts.push_back(out_ / a);
  return r;
}

StageResult Pipeline::extract() {
  const json key = {{"stage", "extract"}, {"sampling", sampling_json(cfg_.sampling)}, {"seed", cfg_.seed},
                    {"scene", scene_fingerprint(scene_)}};
  const std::string hash = fnv1a_hex(key.dump());
  const std::vector<std::string> files{"points.f32", "points_frame.u32", "surface.f32", "surface_frame.u32"};
  if (auto hit = cached("extract", hash, files)) return *hit;

  const SceneBundle bundle = load_bundle();
  const ExtractedPoints pts = extract_source_points(bundle, cfg_.sampling);
  write_points_f32(out_ / files[0], pts.source.points);
  write_raw<std::uint32_t>(out_ / files[1], pts.source.origin_frame);
  write_points_f32(out_ / files[2], pts.surface.points);
  write_raw<std::uint32_t>(out_ / files[3], pts.surface.origin_frame);
  write_stamp("extract", hash,
              {{"scene", bundle.name},
               {"scene_dir", fs::absolute(scene_).lexically_normal().string()},
               {"scene_scale", bundle.scene_scale},
               {"world_offset", vec3(bundle.world_offset)},
               {"frames", bundle.frames.size()},
               {"source_points", pts.source.size()},
               {"surface_points", pts.surface.size()}});
  return done(hash, files);
}

namespace {

SourcePointCloud read_cloud(const fs::path& points, const fs::path& frames) {
  SourcePointCloud c;
  c.points = read_points_f32(points);
  c.origin_frame = read_raw<std::uint32_t>(frames);
  if (c.origin_frame.size() != c.points.size()) {
    throw Error(ErrorKind::DimensionMismatch, frames.string() + " does not match " + points.string());
  }
  return c;
}

}  // namespace

StageResult Pipeline::fuse() {
  const std::string upstream = require_stamp("extract");
  const json key = {{"stage", "fuse"},
                    {"extract", upstream},
                    {"fusion", fusion_json(cfg_.fusion)},
                    {"uniform_feature", cfg_.uniform_feature},
                    {"seed", cfg_.seed},
                    {"provider", provider_fingerprint(cfg_)}};
  const std::string hash = fnv1a_hex(key.dump());
  const std::vector<std::string> files{"fused_points.f32", "fused_points_frame.u32", "features.f64", "visibility.u32"};
  if (auto hit = cached("fuse", hash, files)) return *hit;

  const SourcePointCloud source = read_cloud(require("points.f32"), require("points_frame.u32"));
  const SceneBundle bundle = load_bundle();
  const FeaturePointCloud cloud =
      cfg_.uniform_feature
          ? fuse_uniform_feature(source, bundle, select_canonical_view(bundle, cfg_.seed), providers().patches())
          : fuse_features(source, bundle, providers().patches(), cfg_.fusion);

  write_points_f32(out_ / files[0], cloud.points.points);
  write_raw<std::uint32_t>(out_ / files[1], cloud.points.origin_frame);
  write_raw<double>(out_ / files[2], std::span<const double>(cloud.features.data(), cloud.features.size()));
  write_raw<std::uint32_t>(out_ / files[3], cloud.visibility);
  write_stamp("fuse", hash,
              {{"points", cloud.size()},
               {"dim", cloud.dim()},
               {"dropped", cloud.dropped},
               {"uniform_feature", cfg_.uniform_feature}});
  return done(hash, files);
}

FeaturePointCloud load_feature_cloud(const fs::path& out_dir) {
  const fs::path stamp = out_dir / "fuse.json";
  if (!fs::exists(stamp)) throw Error(ErrorKind::MissingArtifact, "missing upstream artifact fuse.json in " + out_dir.string());
  const json info = read_json_file(stamp);
  FeaturePointCloud cloud;
  cloud.points = read_cloud(out_dir / "fused_points.f32", out_dir / "fused_points_frame.u32");
  const auto dim = info.at("dim").get<std::size_t>();
  const auto features = read_raw<double>(out_dir / "features.f64");
  if (features.size() != dim * cloud.points.size()) {
    throw Error(ErrorKind::DimensionMismatch, "features.f64 does not match fused_points.f32");
  }
  cloud.features = Eigen::Map<const FeatureMatrix>(features.data(), static_cast<Eigen::Index>(cloud.points.size()),
                                                   static_cast<Eigen::Index>(dim));
  cloud.visibility = read_raw<std::uint32_t>(out_dir / "visibility.u32");
  cloud.dropped = info.at("dropped").get<std::vector<std::size_t>>();
  return cloud;
}

StageResult Pipeline::propose() {
  const std::string tag = property_tag();
  const std::string upstream = require_stamp("extract");
  const json key = {{"stage", "propose"},
                    {"extract", upstream},
                    {"property", tag},
                    {"k", cfg_.resolved_material_count()},
                    {"retries", cfg_.retries},
                    {"custom_units", cfg_.custom_units},
                    {"seed", cfg_.seed},
                    {"provider", provider_fingerprint(cfg_)}};
  const std::string hash = fnv1a_hex(key.dump());
  const std::vector<std::string> files{"dictionary_" + tag + ".json"};
  if (auto hit = cached("propose_" + tag, hash, files)) return *hit;

  const SceneBundle bundle = load_bundle();
  const std::size_t view = select_canonical_view(bundle, cfg_.seed);
  const std::string caption = providers().captioner().caption(bundle.frames[view], view, caption_prompt());
  const std::size_t k = cfg_.resolved_material_count();
  CompletionProvider& llm = providers().completion();

  ProposalOptions opts;
  opts.retries = cfg_.retries;
  opts.custom_property = cfg_.custom_property;
  opts.custom_units = cfg_.custom_units;
  MaterialDictionary dict;
  switch (cfg_.property) {
    case PropertyKind::MassDensity:
      dict = estimate_thickness(caption, propose_materials(caption, cfg_.property, k, llm, opts), llm, cfg_.retries);
      break;
    case PropertyKind::YoungsModulus:
    case PropertyKind::ThermalConductivity: {
      const MaterialDictionary names = propose_materials(caption, PropertyKind::MassDensity, k, llm, opts);
      for (const auto& e : names.entries) opts.material_names.push_back(e.name);
      dict = propose_materials(caption, cfg_.property, k, llm, opts);
      break;
    }
    case PropertyKind::Hardness:
      dict = propose_materials(caption, cfg_.property, k, llm, opts);
      dict.entries = combine_shore_scales(dict.entries);
      break;
    default: dict = propose_materials(caption, cfg_.property, k, llm, opts); break;
  }
  save_dictionary(dict, out_ / files[0]);
  write_stamp("propose_" + tag, hash, {{"canonical_view", view}, {"caption", caption}, {"materials", dict.size()}});
  return done(hash, files);
}

StageResult Pipeline::predict() {
  const std::string tag = property_tag();
  const std::string fuse_hash = require_stamp("fuse");
  const std::string propose_hash = require_stamp("propose_" + tag);
  const KernelConfig kernel = cfg_.resolved_kernel();
  const json key = {{"stage", "predict"},
                    {"fuse", fuse_hash},
                    {"propose", propose_hash},
                    {"temperature", kernel.temperature},
                    {"template", kernel.text_prompt_template},
                    {"retrieval", kernel.retrieval},
                    {"provider", provider_fingerprint(cfg_)}};
  const std::string hash = fnv1a_hex(key.dump());
  const std::vector<std::string> files{"field_" + tag + ".f64", "field_" + tag + "_material.u32",
                                       "weights_" + tag + ".f64"};
  if (auto hit = cached("predict_" + tag, hash, files)) return *hit;

  const FeaturePointCloud cloud = load_feature_cloud(out_);
  const MaterialDictionary dict = load_dictionary(require("dictionary_" + tag + ".json"));
  const PropertyField field = build_field(cloud, dict, providers().text(), kernel);

  write_raw<double>(out_ / files[0], field.values);
  write_raw<std::uint32_t>(out_ / files[1], field.material);
  // Column-major MatrixXd: store row-major for readers.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = field.weights;
  write_raw<double>(out_ / files[2], std::span<const double>(w.data(), w.size()));
  std::vector<std::string> names;
  for (const auto& e : dict.entries) names.push_back(e.name);
  write_stamp("predict_" + tag, hash,
              {{"points", field.size()},
               {"materials", names},
               {"material_values", field.material_values},
               {"temperature", field.temperature},
               {"retrieval", field.retrieval},
               {"property", std::string(to_string(field.kind))},
               {"units", field.units}});
  return done(hash, files);
}

PropertyField load_property_field(const fs::path& out_dir, PropertyKind kind) {
  return load_property_field(out_dir, std::string(to_string(kind)));
}

PropertyField load_property_field(const fs::path& out_dir, const std::string& tag) {
  const fs::path stamp = out_dir / ("predict_" + tag + ".json");
  if (!fs::exists(stamp)) {
    throw Error(ErrorKind::MissingArtifact, "missing upstream artifact predict_" + tag + ".json in " + out_dir.string());
  }
  const json info = read_json_file(stamp);
  PropertyField field;
  field.source_points.points = read_points_f32(out_dir / "fused_points.f32");
  field.source_points.origin_frame = read_raw<std::uint32_t>(out_dir / "fused_points_frame.u32");
  field.values = read_raw<double>(out_dir / ("field_" + tag + ".f64"));
  field.material = read_raw<std::uint32_t>(out_dir / ("field_" + tag + "_material.u32"));
  field.material_values = info.at("material_values").get<std::vector<double>>();
  field.temperature = info.at("temperature").get<double>();
  field.retrieval = info.at("retrieval").get<bool>();
  field.kind = parse_property_kind(info.at("property").get<std::string>());
  field.units = info.at("units").get<std::string>();
  const auto n = field.source_points.size();
  const auto k = field.material_values.size();
  const auto w = read_raw<double>(out_dir / ("weights_" + tag + ".f64"));
  if (field.values.size() != n || field.material.size() != n || w.size() != n * k) {
    throw Error(ErrorKind::DimensionMismatch, "field artifacts in " + out_dir.string() + " disagree in size");
  }
  field.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      w.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  field.index = KdTree(field.source_points.points);
  return field;
}

StageResult Pipeline::mass() {
  const std::string extract_hash = require_stamp("extract");
  const std::string predict_hash = require_stamp("predict_" + std::string(to_string(PropertyKind::MassDensity)));
  const json key = {{"stage", "mass"},
                    {"extract", extract_hash},
                    {"predict", predict_hash},
                    {"mass", mass_json(cfg_.mass)},
                    {"no_thickness", cfg_.no_thickness}};
  const std::string hash = fnv1a_hex(key.dump());
  if (auto hit = cached("mass", hash, {"mass.json"})) {
    hit->artifacts = {out_ / "mass.json"};
    return *hit;
  }

  const json extract_info = read_json_file(require("extract.json"));
  const double scale = extract_info.at("scene_scale").get<double>();
  const PropertyField field = load_property_field(out_, PropertyKind::MassDensity);
  const SourcePointCloud surface = read_cloud(require("surface.f32"), require("surface_frame.u32"));
  if (surface.empty()) throw Error(ErrorKind::EmptyInput, "surface.f32 holds no points");
  const SceneBundle bundle = load_bundle();
  const CarveResult carve =
      carve_volume(bundle, Aabb::bounding(surface.points).padded(2.0 * cfg_.mass.carve_grid), cfg_.mass.carve_grid);

  json report = {{"scene", extract_info.at("scene")}, {"scene_dir", extract_info.at("scene_dir")}};
  if (cfg_.no_thickness) {
    const MassEstimate m = integrate_mass_no_thickness(field, cfg_.mass, carve, scale);
    report["mass_kg"] = m.mass_kg;
    report["mass_low_kg"] = m.mass_kg;
    report["mass_high_kg"] = m.mass_kg;
    report["volume_m3"] = m.volume_m3;
    report["volume_bound_m3"] = m.volume_bound_m3;
    report["clamped"] = m.clamped;
  } else {
    const MaterialDictionary dict = load_dictionary(require("dictionary_" + std::string(to_string(PropertyKind::MassDensity)) + ".json"));
    const MassEstimate mid = integrate_mass(field, dict, cfg_.mass, carve, scale, surface, RangePoint::Mid);
    const MassEstimate low = integrate_mass(field, dict, cfg_.mass, carve, scale, surface, RangePoint::Low);
    const MassEstimate high = integrate_mass(field, dict, cfg_.mass, carve, scale, surface, RangePoint::High);
    report["mass_kg"] = mid.mass_kg;
    report["mass_low_kg"] = low.mass_kg;
    report["mass_high_kg"] = high.mass_kg;
    report["volume_m3"] = mid.volume_m3;
    report["volume_bound_m3"] = mid.volume_bound_m3;
    report["clamped"] = mid.clamped;
  }
  report["no_thickness"] = cfg_.no_thickness;
  write_stamp("mass", hash, report);
  return done(hash, {"mass.json"});
}

StageResult Pipeline::export_ply(bool pca, bool ascii) {
  const std::string tag = property_tag();
  const std::string predict_hash = require_stamp("predict_" + tag);
  json key = {{"stage", "export"}, {"predict", predict_hash}, {"pca", pca}, {"ascii", ascii}};
  if (pca) key["fuse"] = require_stamp("fuse");
  const std::string hash = fnv1a_hex(key.dump());
  const std::string name = "field_" + tag + (pca ? "_pca" : "") + ".ply";
  const std::string stage = "export_" + tag + (pca ? "_pca" : "");
  if (auto hit = cached(stage, hash, {name})) return *hit;

  const PropertyField field = load_property_field(out_, tag);
  std::vector<Rgb> colors;
  if (pca) {
    colors = pca_colorize(load_feature_cloud(out_).features);
  } else {
    colors = colorize_values(field.values);
  }
  const json extract_info = read_json_file(require("extract.json"));
  const double scale = extract_info.at("scene_scale").get<double>();
  const Eigen::Vector3d offset = vec3(extract_info.at("world_offset"));
  std::vector<Eigen::Vector3d> metric;
  metric.reserve(field.source_points.size());
  for (const auto& p : field.source_points.points) metric.push_back(p / scale + offset);
  propfield::export_ply(out_ / name, metric, colors, field.values,
                        ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian);
  write_stamp(stage, hash, {{"file", name}, {"points", metric.size()}, {"coordinates", "metric"}});
  return done(hash, {name});
}

std::vector<PredictionRow> collect_predictions(const std::vector<fs::path>& run_dirs) {
  std::vector<PredictionRow> rows;
  for (const auto& dir : run_dirs) {
    const fs::path report = dir / "mass.json";
    if (!fs::exists(report)) throw Error(ErrorKind::MissingArtifact, "missing upstream artifact mass.json in " + dir.string());
    const json m = read_json_file(report);
    const fs::path scene = m.at("scene_dir").get<std::string>();
    const fs::path gt_path = scene / "ground_truth.json";
    if (!fs::exists(gt_path)) {
      throw Error(ErrorKind::MissingArtifact, "missing ground truth " + gt_path.string());
    }
    rows.push_back({m.at("scene").get<std::string>(), clip_mass(m.at("mass_kg").get<double>()),
                    load_ground_truth(gt_path).mass_kg});
  }
  return rows;
}

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  std::vector<PredictionRow> rows;
  const std::string text = read_bytes(path);
  if (path.extension() == ".json") {
    try {
      for (const auto& r : json::parse(text)) {
        rows.push_back({r.at("scene").get<std::string>(), r.at("pred").get<double>(), r.at("gt").get<double>()});
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::UnreadableFile, path.string() + ": " + e.what());
    }
    return rows;
  }
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string scene;
    std::string pred;
    std::string gt;
    if (!std::getline(fields, scene, '\t') || !std::getline(fields, pred, '\t') || !std::getline(fields, gt, '\t')) {
      throw Error(ErrorKind::UnreadableFile, path.string() + ": expected scene<TAB>pred<TAB>gt rows");
    }
    if (header) {
      header = false;
      if (scene == "scene") continue;
    }
    try {
      rows.push_back({scene, std::stod(pred), std::stod(gt)});
    } catch (const std::exception&) {
      throw Error(ErrorKind::UnreadableFile, path.string() + ": bad number in row \"" + line + "\"");
    }
  }
  return rows;
}

MetricsReport write_metrics(const std::vector<PredictionRow>& rows, const fs::path& out_dir) {
  const MetricsReport report = aggregate_report(rows);
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "metrics.tsv", std::ios::trunc);
    out << report.to_table();
  }
  write_json(out_dir / "metrics.json", report.to_json());
  return report;
}

}  // namespace propfield
