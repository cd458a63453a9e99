#include "xing/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace xing {

namespace {

std::uint8_t quantize(double v01) {
  const double c = std::clamp(v01, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void put_be32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
}

void png_chunk(std::string& png, const char* type, const std::string& data) {
  put_be32(png, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  png += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                         static_cast<uInt>(body.size()));
  put_be32(png, static_cast<std::uint32_t>(crc));
}

}  // namespace

Rgb8 to_rgb8(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
    throw ShapeError("to_rgb8 expects [3,h,w] or [1,h,w], got " + to_string(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Rgb8 out{h, w, std::vector<std::uint8_t>(h * w * 3)};
  const auto d = image.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < 3; ++k) {
        const double v = d[((c == 3 ? k : 0) * h + y) * w + x];
        out.pixels[(y * w + x) * 3 + k] = quantize(0.5 * (v + 1.0));
      }
    }
  }
  return out;
}

Rgb8 gray_to_rgb8(const Tensor& map) {
  if (map.rank() != 2 && !(map.rank() == 3 && map.dim(0) == 1)) {
    throw ShapeError("gray_to_rgb8 expects [h,w] or [1,h,w], got " + to_string(map.shape()));
  }
  const std::size_t h = map.dim(map.rank() - 2), w = map.dim(map.rank() - 1);
  Rgb8 out{h, w, std::vector<std::uint8_t>(h * w * 3)};
  const auto d = map.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    const auto g = quantize(d[i]);
    std::fill_n(out.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i), 3, g);
  }
  return out;
}

Tensor from_rgb8(const Rgb8& img) {
  const std::size_t h = img.height, w = img.width;
  std::vector<double> v(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < 3; ++k) {
        v[(k * h + y) * w + x] = img.pixels[(y * w + x) * 3 + k] / 127.5 - 1.0;
      }
    }
  }
  return Tensor({3, h, w}, std::move(v));
}

void write_ppm(const std::filesystem::path& path, const Rgb8& img) {
  auto out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  finish(out, path);
}

Rgb8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P6" || maxval != 255 || w == 0 || h == 0) {
    throw IoError("not an 8-bit P6 file: " + path.string());
  }
  in.get();
  Rgb8 img{h, w, std::vector<std::uint8_t>(h * w * 3)};
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError("truncated PPM: " + path.string());
  return img;
}

void write_png(const std::filesystem::path& path, const Rgb8& img) {
  std::string raw;
  raw.reserve(img.height * (img.width * 3 + 1));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(img.pixels.data() + y * img.width * 3), img.width * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                Z_BEST_COMPRESSION) != Z_OK) {
    throw IoError("deflate failed for " + path.string());
  }
  z.resize(zlen);

  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit, truecolour

  std::string png("\x89PNG\r\n\x1a\n", 8);
  png_chunk(png, "IHDR", ihdr);
  png_chunk(png, "IDAT", z);
  png_chunk(png, "IEND", "");
  auto out = open_out(path);
  out.write(png.data(), static_cast<std::streamsize>(png.size()));
  finish(out, path);
}

std::filesystem::path write_image(const std::filesystem::path& stem, const Rgb8& img,
                                  ImageFormat format) {
  auto path = stem;
  if (format == ImageFormat::png) {
    path += ".png";
    write_png(path, img);
  } else {
    path += ".ppm";
    write_ppm(path, img);
  }
  return path;
}

}  // namespace xing
