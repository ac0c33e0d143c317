#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "propfield/scene_io.hpp"

namespace propfield::png {

RgbImage read_rgb(const std::filesystem::path& path);
Raster<std::uint8_t> read_gray(const std::filesystem::path& path);

void write_rgb(const std::filesystem::path& path, const RgbImage& image);
void write_gray(const std::filesystem::path& path, const Raster<std::uint8_t>& image);

std::vector<std::uint8_t> encode_rgb(const RgbImage& image);

}  // namespace propfield::png
