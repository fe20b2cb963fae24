#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

#include "maeday/data.hpp"

namespace maeday {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (ppm_token(in) != "P6") throw std::runtime_error(path.string() + ": only binary PPM (P6) is supported");
  const std::size_t w = std::stoul(ppm_token(in));
  const std::size_t h = std::stoul(ppm_token(in));
  const unsigned long maxval = std::stoul(ppm_token(in));
  if (maxval != 255) throw std::runtime_error(path.string() + ": unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  std::vector<unsigned char> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error(path.string() + ": truncated pixel data");
  Image image({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = static_cast<float>(bytes[i]) / 255.0f;
  return image;
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  const std::size_t h = image.dim(0), w = image.dim(1);
  const bool gray = image.rank() == 2;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(h * w * 3);
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) bytes[i * 3 + c] = to_byte(gray ? image[i] : image[i * 3 + c]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
};

Image read_png(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str()))
    throw std::runtime_error(path.string() + ": " + png.image.message);
  if (png.image.format & PNG_FORMAT_FLAG_LINEAR)
    throw std::runtime_error(path.string() + ": unsupported bit depth (16-bit PNG)");
  png.image.format = PNG_FORMAT_RGBA;
  const std::size_t w = png.image.width, h = png.image.height;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr))
    throw std::runtime_error(path.string() + ": " + png.image.message);
  Image image({h, w, 3});
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) image[i * 3 + c] = static_cast<float>(buffer[i * 4 + c]) / 255.0f;
  return image;
}

void write_png(const std::filesystem::path& path, const Tensor<float>& image) {
  PngImage png;
  const bool gray = image.rank() == 2;
  png.image.width = static_cast<png_uint_32>(image.dim(1));
  png.image.height = static_cast<png_uint_32>(image.dim(0));
  png.image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = to_byte(image[i]);
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw std::runtime_error(path.string() + ": " + png.image.message);
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  throw std::runtime_error(path.string() + ": unsupported image format '" + ext + "'");
}

Map read_mask(const std::filesystem::path& path) {
  const Image rgb = read_image(path);
  const std::size_t h = rgb.dim(0), w = rgb.dim(1);
  Map mask({h, w});
  for (std::size_t i = 0; i < h * w; ++i)
    mask[i] = (rgb[i * 3] > 0.0f || rgb[i * 3 + 1] > 0.0f || rgb[i * 3 + 2] > 0.0f) ? 1.0f : 0.0f;
  return mask;
}

void write_image(const std::filesystem::path& path, const Tensor<float>& image) {
  if (!(image.rank() == 2 || (image.rank() == 3 && image.dim(2) == 3)))
    throw std::invalid_argument("write_image: expected H x W or H x W x 3, got " + shape_to_string(image.shape()));
  const auto ext = lower_extension(path);
  if (ext == ".ppm") return write_ppm(path, image);
  if (ext == ".png") return write_png(path, image);
  throw std::invalid_argument(path.string() + ": unsupported image format '" + ext + "'");
}

Tensor<float> resize(const Tensor<float>& image, std::size_t height, std::size_t width) {
  if (image.rank() != 2 && image.rank() != 3) throw std::invalid_argument("resize: expected H x W or H x W x C");
  if (height == 0 || width == 0) throw std::invalid_argument("resize: target size must be positive");
  const std::size_t h = image.dim(0), w = image.dim(1), channels = image.rank() == 3 ? image.dim(2) : 1;
  if (h == height && w == width) return image;
  Shape shape = image.rank() == 3 ? Shape{height, width, channels} : Shape{height, width};
  Tensor<float> out(shape);
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        auto px = [&](std::size_t yy, std::size_t xx) { return static_cast<double>(image[(yy * w + xx) * channels + c]); };
        const double top = px(y0, x0) * (1.0 - tx) + px(y0, x1) * tx;
        const double bottom = px(y1, x0) * (1.0 - tx) + px(y1, x1) * tx;
        out[(y * width + x) * channels + c] = static_cast<float>(top * (1.0 - ty) + bottom * ty);
      }
    }
  }
  return out;
}

float sample_mirrored(const Image& image, double y, double x, std::size_t channel) {
  const auto h = static_cast<std::ptrdiff_t>(image.dim(0)), w = static_cast<std::ptrdiff_t>(image.dim(1));
  auto mirror = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return static_cast<std::size_t>(i);
  };
  const double fy = std::floor(y), fx = std::floor(x);
  const double ty = y - fy, tx = x - fx;
  const auto iy = static_cast<std::ptrdiff_t>(fy), ix = static_cast<std::ptrdiff_t>(fx);
  const std::size_t y0 = mirror(iy, h), y1 = mirror(iy + 1, h), x0 = mirror(ix, w), x1 = mirror(ix + 1, w);
  const double top = image.at(y0, x0, channel) * (1.0 - tx) + image.at(y0, x1, channel) * tx;
  const double bottom = image.at(y1, x0, channel) * (1.0 - tx) + image.at(y1, x1, channel) * tx;
  return static_cast<float>(top * (1.0 - ty) + bottom * ty);
}

}  // namespace maeday
