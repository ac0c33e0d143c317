#include "propfield/providers.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/png_io.hpp"

namespace propfield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kPatchMagic[4] = {'P', 'F', 'P', 'E'};

template <typename T>
void read_pod(std::istream& in, T& value, const fs::path& path) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorKind::UnreadableFile, "truncated embedding file " + path.string());
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::UnreadableFile, path.string() + ": " + e.what());
  }
}

}  // namespace

FilePatchEmbeddingProvider::FilePatchEmbeddingProvider(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open patch embedding file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPatchMagic, 4) != 0) {
    throw Error(ErrorKind::UnreadableFile, path.string() + " is not a patch embedding file");
  }
  std::uint32_t version = 0;
  std::uint32_t reserved = 0;
  std::uint64_t count = 0;
  read_pod(in, version, path);
  read_pod(in, dim_, path);
  read_pod(in, reserved, path);
  read_pod(in, count, path);
  if (version != 1 || dim_ == 0) {
    throw Error(ErrorKind::UnreadableFile, "unsupported patch embedding file " + path.string());
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t frame, x, y;
    read_pod(in, frame, path);
    read_pod(in, x, path);
    read_pod(in, y, path);
    Embedding v(dim_);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim_ * sizeof(float)));
    if (!in) throw Error(ErrorKind::UnreadableFile, "truncated embedding file " + path.string());
    vectors_[{frame, x, y}] = std::move(v);
  }
}

std::vector<Embedding> FilePatchEmbeddingProvider::embed_patches(const Frame&, std::size_t frame_index,
                                                                 std::span<const PixelCenter> centers, int) {
  std::vector<Embedding> out;
  out.reserve(centers.size());
  for (const auto& c : centers) {
    const auto it = vectors_.find({static_cast<std::uint32_t>(frame_index), static_cast<std::uint32_t>(c.x),
                                   static_cast<std::uint32_t>(c.y)});
    if (it == vectors_.end()) {
      std::ostringstream msg;
      msg << "no precomputed patch embedding for frame " << frame_index << " pixel (" << c.x << ", " << c.y << ")";
      throw Error(ErrorKind::Provider, msg.str());
    }
    out.push_back(it->second);
  }
  return out;
}

void write_patch_embedding_file(const fs::path& path, std::uint32_t dim,
                                std::span<const PatchEmbeddingRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out.write(kPatchMagic, 4);
  write_pod(out, std::uint32_t{1});
  write_pod(out, dim);
  write_pod(out, std::uint32_t{0});
  write_pod(out, static_cast<std::uint64_t>(records.size()));
  for (const auto& r : records) {
    if (r.vector.size() != dim) throw Error(ErrorKind::DimensionMismatch, "embedding record has wrong dimension");
    write_pod(out, r.frame);
    write_pod(out, r.x);
    write_pod(out, r.y);
    out.write(reinterpret_cast<const char*>(r.vector.data()), static_cast<std::streamsize>(dim * sizeof(float)));
  }
}

FileTextEmbeddingProvider::FileTextEmbeddingProvider(const fs::path& path) {
  const json doc = read_json_file(path);
  for (const auto& [name, vec] : doc.items()) vectors_[name] = vec.get<Embedding>();
}

std::vector<Embedding> FileTextEmbeddingProvider::embed_text(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  for (const auto& t : texts) {
    const auto it = vectors_.find(t);
    if (it == vectors_.end()) throw Error(ErrorKind::Provider, "no precomputed text embedding for \"" + t + "\"");
    out.push_back(it->second);
  }
  return out;
}

FileLanguageProvider::FileLanguageProvider(const fs::path& path) {
  const json doc = read_json_file(path);
  caption_ = doc.value("caption", std::string{});
  for (const auto& entry : doc.value("completions", json::array())) {
    replies_.emplace_back(entry.at("match").get<std::string>(), entry.at("reply").get<std::string>());
  }
}

std::string FileLanguageProvider::caption(const Frame&, std::size_t, const std::string&) {
  if (caption_.empty()) throw Error(ErrorKind::Provider, "scripted provider has no caption");
  return caption_;
}

std::string FileLanguageProvider::complete(const std::string& system, const std::string&) {
  for (const auto& [match, reply] : replies_) {
    if (system.find(match) != std::string::npos) return reply;
  }
  throw Error(ErrorKind::Provider, "scripted provider has no reply for this prompt");
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

HttpModelClient::HttpModelClient(std::string base_url, std::size_t max_centers_per_request)
    : base_url_(std::move(base_url)), max_centers_(std::max<std::size_t>(1, max_centers_per_request)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string HttpModelClient::post(const std::string& route, const std::string& body) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(10);
  client.set_read_timeout(600);
  auto res = client.Post(route, body, "application/json");
  if (!res) {
    throw Error(ErrorKind::Provider,
                "sidecar unreachable at " + base_url_ + route + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::Provider,
                "sidecar " + route + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  return res->body;
}

namespace {

json parse_reply(const std::string& body, const std::string& route) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Provider, "sidecar " + route + " sent malformed JSON: " + e.what());
  }
}

std::vector<Embedding> parse_vectors(const json& reply, std::size_t expected, const std::string& route) {
  if (!reply.contains("vectors") || !reply["vectors"].is_array()) {
    throw Error(ErrorKind::Provider, "sidecar " + route + " reply lacks \"vectors\"");
  }
  auto vectors = reply["vectors"].get<std::vector<Embedding>>();
  if (vectors.size() != expected) {
    throw Error(ErrorKind::Provider, "sidecar " + route + " returned " + std::to_string(vectors.size()) +
                                         " vectors for " + std::to_string(expected) + " inputs");
  }
  return vectors;
}

}  // namespace

std::vector<Embedding> HttpModelClient::embed_patches(const Frame& frame, std::size_t frame_index,
                                                      std::span<const PixelCenter> centers, int patch_size) {
  const auto png_bytes = png::encode_rgb(frame.image);
  const std::string image = base64_encode(png_bytes);
  std::vector<Embedding> out;
  out.reserve(centers.size());
  for (std::size_t start = 0; start < centers.size(); start += max_centers_) {
    const std::size_t stop = std::min(centers.size(), start + max_centers_);
    json req_centers = json::array();
    for (std::size_t i = start; i < stop; ++i) req_centers.push_back({centers[i].x, centers[i].y});
    const json req = {{"image", image}, {"centers", req_centers}, {"patch", patch_size}};
    try {
      auto chunk = parse_vectors(parse_reply(post("/embed_patches", req.dump()), "/embed_patches"), stop - start,
                                 "/embed_patches");
      for (auto& v : chunk) out.push_back(std::move(v));
    } catch (const Error& e) {
      throw Error(e.kind(), "frame " + std::to_string(frame_index) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Embedding> HttpModelClient::embed_text(std::span<const std::string> texts) {
  const json req = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  return parse_vectors(parse_reply(post("/embed_text", req.dump()), "/embed_text"), texts.size(), "/embed_text");
}

std::string HttpModelClient::caption(const Frame& frame, std::size_t, const std::string&) {
  const json req = {{"image", base64_encode(png::encode_rgb(frame.image))}};
  const json reply = parse_reply(post("/caption", req.dump()), "/caption");
  if (!reply.contains("caption") || !reply["caption"].is_string()) {
    throw Error(ErrorKind::Provider, "sidecar /caption reply lacks \"caption\"");
  }
  return reply["caption"].get<std::string>();
}

std::string HttpModelClient::complete(const std::string& system, const std::string& user) {
  const json req = {{"system", system}, {"user", user}};
  const json reply = parse_reply(post("/complete", req.dump()), "/complete");
  if (!reply.contains("text") || !reply["text"].is_string()) {
    throw Error(ErrorKind::Provider, "sidecar /complete reply lacks \"text\"");
  }
  return reply["text"].get<std::string>();
}

std::pair<std::string, int> HttpModelClient::health() {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5);
  auto res = client.Get("/health");
  if (!res || res->status != 200) throw Error(ErrorKind::Provider, "sidecar health check failed at " + base_url_);
  const json reply = parse_reply(res->body, "/health");
  return {reply.at("mode").get<std::string>(), reply.at("dim").get<int>()};
}

}  // namespace propfield
