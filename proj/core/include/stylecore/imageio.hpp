#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stylecore/image.hpp"

namespace stylecore {

// 8-bit PNG/JPEG decode. Values map to [0,1]; grayscale files load as one
// channel, everything else as sRGB.
ImageBuffer read_image(const std::filesystem::path& path);
ImageBuffer decode_image(const std::vector<std::uint8_t>& bytes);

// Values are clamped to [0,1] and rounded to 8 bits. The format follows the
// extension (.png, .jpg/.jpeg).
void write_image(const ImageBuffer& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);

}  // namespace stylecore
