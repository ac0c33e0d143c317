#include "propfield/png_io.hpp"

#include <cstdio>
#include <memory>

#include <png.h>

#include "propfield/error.hpp"

namespace propfield::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Decodes any PNG into 8-bit gray or RGB, dropping alpha.
Decoded decode(const std::filesystem::path& path, bool want_rgb) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorKind::UnreadableFile, "cannot open image " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::UnreadableFile, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::UnreadableFile, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  const auto color = png_get_color_type(png, info);
  const bool is_gray = (color & PNG_COLOR_MASK_COLOR) == 0;
  if (want_rgb && is_gray) png_set_gray_to_rgb(png);
  if (!want_rgb && !is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  Decoded out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.pixels.resize(stride * out.height);
  std::vector<png_bytep> rows(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_raw(png_structp png, png_infop info, const std::uint8_t* data, int width, int height,
               int channels) {
  png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels));
  }
  png_write_end(png, nullptr);
}

void encode_to_file(const std::filesystem::path& path, const std::uint8_t* data, int width, int height,
                    int channels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorKind::UnreadableFile, "cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::UnreadableFile, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::UnreadableFile, "PNG encode failed for " + path.string());
  }
  png_init_io(png, file.get());
  write_raw(png, info, data, width, height, channels);
  png_destroy_write_struct(&png, &info);
}

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

}  // namespace

RgbImage read_rgb(const std::filesystem::path& path) {
  Decoded d = decode(path, true);
  return RgbImage{d.width, d.height, std::move(d.pixels)};
}

Raster<std::uint8_t> read_gray(const std::filesystem::path& path) {
  Decoded d = decode(path, false);
  Raster<std::uint8_t> out;
  out.width = d.width;
  out.height = d.height;
  out.data = std::move(d.pixels);
  return out;
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) {
  encode_to_file(path, image.pixels.data(), image.width, image.height, 3);
}

void write_gray(const std::filesystem::path& path, const Raster<std::uint8_t>& image) {
  encode_to_file(path, image.data.data(), image.width, image.height, 1);
}

std::vector<std::uint8_t> encode_rgb(const RgbImage& image) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::InvalidArgument, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::InvalidArgument, "PNG encode failed");
  }
  png_set_write_fn(png, &out, append_bytes, nullptr);
  write_raw(png, info, image.pixels.data(), image.width, image.height, 3);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace propfield::png
