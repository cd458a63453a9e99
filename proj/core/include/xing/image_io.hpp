#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "xing/tensor.hpp"

namespace xing {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ImageFormat { ppm, png };

/// 8-bit RGB raster, row-major, interleaved.
struct Rgb8 {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};

/// [3,h,w] in [-1,1] (or [1,h,w], replicated to grey) -> 8-bit, clamped.
Rgb8 to_rgb8(const Tensor& image);
/// [1,h,w] or [h,w] in [0,1] -> grey RGB.
Rgb8 gray_to_rgb8(const Tensor& map);
Tensor from_rgb8(const Rgb8& img);

void write_ppm(const std::filesystem::path& path, const Rgb8& img);
Rgb8 read_ppm(const std::filesystem::path& path);
/// Single-IDAT 8-bit RGB PNG, zlib deflate.
void write_png(const std::filesystem::path& path, const Rgb8& img);

/// Writes `stem` + ".ppm" or ".png"; returns the file written.
std::filesystem::path write_image(const std::filesystem::path& stem, const Rgb8& img,
                                  ImageFormat format);

}  // namespace xing
