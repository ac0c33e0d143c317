#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "propfield/scene_io.hpp"

namespace propfield {

/// Integer pixel at which a patch is centered.
struct PixelCenter {
  int x;
  int y;
};

using Embedding = std::vector<float>;

/// Image-patch encoder. One vector per center; vectors need not be
/// normalized (fusion normalizes them).
class PatchEmbeddingProvider {
 public:
  virtual ~PatchEmbeddingProvider() = default;
  virtual std::vector<Embedding> embed_patches(const Frame& frame, std::size_t frame_index,
                                               std::span<const PixelCenter> centers, int patch_size) = 0;
};

class TextEmbeddingProvider {
 public:
  virtual ~TextEmbeddingProvider() = default;
  virtual std::vector<Embedding> embed_text(std::span<const std::string> texts) = 0;
};

class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual std::string caption(const Frame& frame, std::size_t frame_index, const std::string& prompt) = 0;
};

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual std::string complete(const std::string& system, const std::string& user) = 0;
};

/// Precomputed patch vectors keyed by (frame, x, y).
///
/// Binary layout, little-endian:
///   char[4] "PFPE" | u32 version (1) | u32 dim | u32 reserved (0) | u64 count
///   count x { u32 frame | u32 x | u32 y | f32[dim] }
class FilePatchEmbeddingProvider : public PatchEmbeddingProvider {
 public:
  explicit FilePatchEmbeddingProvider(const std::filesystem::path& path);

  std::vector<Embedding> embed_patches(const Frame& frame, std::size_t frame_index,
                                       std::span<const PixelCenter> centers, int patch_size) override;
  std::uint32_t dim() const { return dim_; }

 private:
  std::uint32_t dim_ = 0;
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, Embedding> vectors_;
};

struct PatchEmbeddingRecord {
  std::uint32_t frame;
  std::uint32_t x;
  std::uint32_t y;
  Embedding vector;
};

void write_patch_embedding_file(const std::filesystem::path& path, std::uint32_t dim,
                                std::span<const PatchEmbeddingRecord> records);

/// Text vectors from a JSON object { "name": [floats...], ... }.
class FileTextEmbeddingProvider : public TextEmbeddingProvider {
 public:
  explicit FileTextEmbeddingProvider(const std::filesystem::path& path);
  std::vector<Embedding> embed_text(std::span<const std::string> texts) override;

 private:
  std::map<std::string, Embedding> vectors_;
};

/// Scripted caption and completion replies from a JSON file:
///   { "caption": str, "completions": [ { "match": str, "reply": str } ] }
/// The first entry whose "match" occurs in the system prompt answers.
class FileLanguageProvider : public CaptionProvider, public CompletionProvider {
 public:
  explicit FileLanguageProvider(const std::filesystem::path& path);
  std::string caption(const Frame& frame, std::size_t frame_index, const std::string& prompt) override;
  std::string complete(const std::string& system, const std::string& user) override;

 private:
  std::string caption_;
  std::vector<std::pair<std::string, std::string>> replies_;
};

/// Client for the model sidecar's JSON-over-HTTP endpoints
/// (/embed_patches, /embed_text, /caption, /complete, /health).
class HttpModelClient : public PatchEmbeddingProvider,
                        public TextEmbeddingProvider,
                        public CaptionProvider,
                        public CompletionProvider {
 public:
  explicit HttpModelClient(std::string base_url, std::size_t max_centers_per_request = 4096);

  std::vector<Embedding> embed_patches(const Frame& frame, std::size_t frame_index,
                                       std::span<const PixelCenter> centers, int patch_size) override;
  std::vector<Embedding> embed_text(std::span<const std::string> texts) override;
  std::string caption(const Frame& frame, std::size_t frame_index, const std::string& prompt) override;
  std::string complete(const std::string& system, const std::string& user) override;

  /// GET /health -> ("mock"|"real", dim).
  std::pair<std::string, int> health();

 private:
  std::string post(const std::string& route, const std::string& body);

  std::string base_url_;
  std::size_t max_centers_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace propfield
