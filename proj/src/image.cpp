#include "gcsich/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace gcsich {

GrayImage::GrayImage(std::size_t w, std::size_t h, double fill)
    : width(w), height(h), pixels(w * h, fill) {}

RgbImage::RgbImage(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0.0) {}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_buffer(const std::filesystem::path& path, std::size_t w, std::size_t h,
                  png_uint_32 format, const std::vector<std::uint8_t>& buffer) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr) == 0) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace

double quantize8(double v) { return static_cast<double>(to_byte(v)) / 255.0; }

GrayImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    throw ImageError("cannot read " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr) == 0) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("cannot decode " + path.string() + ": " + msg);
  }
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = buffer[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  std::vector<std::uint8_t> buffer(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), buffer.begin(), to_byte);
  write_buffer(path, image.width, image.height, PNG_FORMAT_GRAY, buffer);
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  std::vector<std::uint8_t> buffer(image.rgb.size());
  std::transform(image.rgb.begin(), image.rgb.end(), buffer.begin(), to_byte);
  write_buffer(path, image.width, image.height, PNG_FORMAT_RGB, buffer);
}

std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t src_w,
                                    std::size_t src_h, std::size_t dst_w, std::size_t dst_h) {
  if (src.size() != src_w * src_h || src_w == 0 || src_h == 0 || dst_w == 0 || dst_h == 0) {
    throw ImageError("resize_bilinear: bad extents");
  }
  std::vector<double> out(dst_w * dst_h);
  const double sx = static_cast<double>(src_w) / static_cast<double>(dst_w);
  const double sy = static_cast<double>(src_h) / static_cast<double>(dst_h);
  auto sample_axis = [](double pos, std::size_t extent, std::size_t& i0, std::size_t& i1,
                        double& frac) {
    pos = std::clamp(pos, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, extent - 1);
    frac = pos - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < dst_h; ++y) {
    std::size_t y0, y1;
    double fy;
    sample_axis((static_cast<double>(y) + 0.5) * sy - 0.5, src_h, y0, y1, fy);
    for (std::size_t x = 0; x < dst_w; ++x) {
      std::size_t x0, x1;
      double fx;
      sample_axis((static_cast<double>(x) + 0.5) * sx - 0.5, src_w, x0, x1, fx);
      const double top = src[y0 * src_w + x0] * (1.0 - fx) + src[y0 * src_w + x1] * fx;
      const double bottom = src[y1 * src_w + x0] * (1.0 - fx) + src[y1 * src_w + x1] * fx;
      out[y * dst_w + x] = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

}  // namespace gcsich
