#include "maeday/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace maeday {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// MVTec layout

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

Image load_resized(const fs::path& path, std::optional<std::size_t> resize_to) {
  Image image = read_image(path);
  if (resize_to) image = resize(image, *resize_to, *resize_to);
  return image;
}

}  // namespace

std::vector<Sample> load_mvtec(const fs::path& root, const std::string& class_name, Split split,
                               std::optional<std::size_t> resize_to) {
  const fs::path base = root / class_name;
  if (!fs::is_directory(base)) throw std::runtime_error("dataset class directory not found: " + base.string());
  std::vector<Sample> samples;
  if (split == Split::train) {
    for (const auto& path : sorted_images(base / "train" / "good"))
      samples.push_back({load_resized(path, resize_to), Label::normal, std::nullopt, path.string(), "good"});
    return samples;
  }
  for (const auto& dir : sorted_subdirs(base / "test")) {
    const std::string defect = dir.filename().string();
    for (const auto& path : sorted_images(dir)) {
      Sample s{load_resized(path, resize_to), Label::normal, std::nullopt, path.string(), defect};
      if (defect != "good") {
        s.label = Label::anomalous;
        const fs::path gt_dir = base / "ground_truth" / defect;
        const std::string stem = path.stem().string();
        fs::path mask_path = gt_dir / (stem + "_mask.png");
        if (!fs::exists(mask_path)) mask_path = gt_dir / (stem + "_mask.ppm");
        if (!fs::exists(mask_path))
          throw std::runtime_error("missing ground-truth mask for anomalous image " + path.string() + " (expected " +
                                   (gt_dir / (stem + "_mask.png")).string() + ")");
        s.gt_mask = read_mask(mask_path);
      }
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

Dataset load_mvtec_dataset(const fs::path& root, const std::string& class_name, std::optional<std::size_t> resize_to) {
  return Dataset{class_name, load_mvtec(root, class_name, Split::train, resize_to),
                 load_mvtec(root, class_name, Split::test, resize_to)};
}

void write_mvtec(const fs::path& root, const Dataset& dataset) {
  if (dataset.name.empty()) throw std::invalid_argument("write_mvtec: dataset needs a class name");
  const fs::path base = root / dataset.name;
  auto name = [](std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return std::string(buf);
  };
  fs::create_directories(base / "train" / "good");
  for (std::size_t i = 0; i < dataset.train.size(); ++i) {
    if (dataset.train[i].label != Label::normal) throw std::invalid_argument("write_mvtec: train split must be normal");
    write_image(base / "train" / "good" / (name(i) + ".png"), dataset.train[i].image);
  }
  std::vector<std::pair<std::string, std::size_t>> counters;
  auto next_index = [&counters](const std::string& key) {
    for (auto& [k, n] : counters)
      if (k == key) return n++;
    counters.emplace_back(key, 1);
    return std::size_t{0};
  };
  for (const auto& s : dataset.test) {
    const std::string defect = s.label == Label::normal ? "good" : (s.defect_type.empty() ? "defect" : s.defect_type);
    const std::string stem = name(next_index(defect));
    fs::create_directories(base / "test" / defect);
    write_image(base / "test" / defect / (stem + ".png"), s.image);
    if (s.label == Label::anomalous) {
      if (!s.gt_mask) throw std::invalid_argument("write_mvtec: anomalous sample without mask");
      fs::create_directories(base / "ground_truth" / defect);
      write_image(base / "ground_truth" / defect / (stem + "_mask.png"), *s.gt_mask);
    }
  }
}

// ---------------------------------------------------------------------------
// Procedural textures

const char* to_string(TextureFamily family) {
  switch (family) {
    case TextureFamily::stripes: return "stripes";
    case TextureFamily::checker: return "checker";
    case TextureFamily::blob_noise: return "blob-noise";
    case TextureFamily::wood_grain: return "wood-grain";
  }
  return "?";
}

const char* to_string(DefectType type) {
  switch (type) {
    case DefectType::foreign_patch: return "foreign-patch";
    case DefectType::scratch: return "scratch";
    case DefectType::color_spot: return "color-spot";
  }
  return "?";
}

TextureFamily parse_family(const std::string& name) {
  for (auto f : {TextureFamily::stripes, TextureFamily::checker, TextureFamily::blob_noise, TextureFamily::wood_grain})
    if (name == to_string(f)) return f;
  throw std::invalid_argument("unknown texture family '" + name + "'");
}

DefectType parse_defect(const std::string& name) {
  for (auto d : {DefectType::foreign_patch, DefectType::scratch, DefectType::color_spot})
    if (name == to_string(d)) return d;
  throw std::invalid_argument("unknown defect type '" + name + "'");
}

namespace {

using Rgb = std::array<float, 3>;

constexpr std::uint64_t kTextureStream = 0x7465787475726531ULL;
constexpr std::uint64_t kDefectStream = 0x6465666563747331ULL;
constexpr std::uint64_t kTrainOffset = 1ULL << 32;

Rgb random_color(Rng& rng) {
  return {static_cast<float>(rng.uniform(0.1, 0.9)), static_cast<float>(rng.uniform(0.1, 0.9)),
          static_cast<float>(rng.uniform(0.1, 0.9))};
}

// Two colors at least 0.35 apart (Euclidean).
std::pair<Rgb, Rgb> color_pair(Rng& rng) {
  for (;;) {
    Rgb a = random_color(rng), b = random_color(rng);
    double d = 0;
    for (int c = 0; c < 3; ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
    if (std::sqrt(d) >= 0.35) return {a, b};
  }
}

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {static_cast<float>(a[0] + (b[0] - a[0]) * t), static_cast<float>(a[1] + (b[1] - a[1]) * t),
          static_cast<float>(a[2] + (b[2] - a[2]) * t)};
}

// Smooth value noise with a random lattice of the given cell size.
class ValueNoise {
 public:
  ValueNoise(std::size_t resolution, double cell, Rng& rng)
      : cell_(cell), n_(static_cast<std::size_t>(std::ceil(static_cast<double>(resolution) / cell)) + 2) {
    lattice_.resize(n_ * n_);
    for (auto& v : lattice_) v = rng.uniform();
  }

  double operator()(double y, double x) const {
    const double gy = y / cell_, gx = x / cell_;
    const auto iy = static_cast<std::size_t>(std::floor(gy)), ix = static_cast<std::size_t>(std::floor(gx));
    const double ty = smooth(gy - std::floor(gy)), tx = smooth(gx - std::floor(gx));
    auto v = [&](std::size_t a, std::size_t b) { return lattice_[std::min(a, n_ - 1) * n_ + std::min(b, n_ - 1)]; };
    const double top = v(iy, ix) * (1 - tx) + v(iy, ix + 1) * tx;
    const double bottom = v(iy + 1, ix) * (1 - tx) + v(iy + 1, ix + 1) * tx;
    return top * (1 - ty) + bottom * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double cell_;
  std::size_t n_;
  std::vector<double> lattice_;
};

void put(Image& image, std::size_t y, std::size_t x, const Rgb& c) {
  for (std::size_t k = 0; k < 3; ++k) image.at(y, x, k) = c[k];
}

void add_grain(Image& image, double sigma, Rng& rng) {
  for (auto& v : image.values()) v = std::clamp(v + static_cast<float>(rng.normal() * sigma), 0.0f, 1.0f);
}

Image render_stripes(std::size_t res, Rng& rng) {
  const auto [a, b] = color_pair(rng);
  const double angle = rng.uniform(0.0, M_PI);
  const double period = rng.uniform(6.0, 16.0);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double sharpness = rng.uniform(1.0, 4.0);
  const double ca = std::cos(angle), sa = std::sin(angle);
  Image out({res, res, 3});
  for (std::size_t y = 0; y < res; ++y)
    for (std::size_t x = 0; x < res; ++x) {
      const double u = (static_cast<double>(x) * ca + static_cast<double>(y) * sa) * 2.0 * M_PI / period + phase;
      put(out, y, x, mix(a, b, 0.5 + 0.5 * std::tanh(sharpness * std::sin(u))));
    }
  add_grain(out, 0.01, rng);
  return out;
}

Image render_checker(std::size_t res, Rng& rng) {
  const auto [a, b] = color_pair(rng);
  const double angle = rng.uniform(0.0, M_PI / 2.0);
  const double cell = rng.uniform(5.0, 12.0);
  const double oy = rng.uniform(0.0, cell), ox = rng.uniform(0.0, cell);
  const double ca = std::cos(angle), sa = std::sin(angle);
  Image out({res, res, 3});
  for (std::size_t y = 0; y < res; ++y)
    for (std::size_t x = 0; x < res; ++x) {
      const double px = static_cast<double>(x) + ox, py = static_cast<double>(y) + oy;
      const double u = (px * ca + py * sa) * M_PI / cell, v = (-px * sa + py * ca) * M_PI / cell;
      put(out, y, x, mix(a, b, 0.5 + 0.5 * std::tanh(4.0 * std::sin(u) * std::sin(v))));
    }
  add_grain(out, 0.01, rng);
  return out;
}

Image render_blob_noise(std::size_t res, Rng& rng) {
  const auto [a, b] = color_pair(rng);
  const Rgb c = random_color(rng);
  const ValueNoise coarse(res, rng.uniform(10.0, 18.0), rng);
  const ValueNoise fine(res, rng.uniform(4.0, 7.0), rng);
  Image out({res, res, 3});
  for (std::size_t y = 0; y < res; ++y)
    for (std::size_t x = 0; x < res; ++x) {
      const double n = 0.7 * coarse(static_cast<double>(y), static_cast<double>(x)) +
                       0.3 * fine(static_cast<double>(y), static_cast<double>(x));
      put(out, y, x, n < 0.5 ? mix(a, c, n * 2.0) : mix(c, b, (n - 0.5) * 2.0));
    }
  add_grain(out, 0.01, rng);
  return out;
}

Image render_wood_grain(std::size_t res, Rng& rng) {
  const double u = rng.uniform();
  const Rgb light{static_cast<float>(0.55 + 0.3 * u), static_cast<float>(0.35 + 0.2 * u + rng.uniform(-0.05, 0.05)),
                  static_cast<float>(0.15 + 0.15 * u + rng.uniform(-0.05, 0.05))};
  const double darkness = rng.uniform(0.5, 0.75);
  const Rgb dark{static_cast<float>(light[0] * darkness), static_cast<float>(light[1] * darkness),
                 static_cast<float>(light[2] * darkness)};
  // Ring center well outside the image gives gently curved grain.
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  const double dist = rng.uniform(1.2, 3.0) * static_cast<double>(res);
  const double cy = static_cast<double>(res) / 2.0 + dist * std::sin(angle);
  const double cx = static_cast<double>(res) / 2.0 + dist * std::cos(angle);
  const double period = rng.uniform(5.0, 10.0);
  const double warp = rng.uniform(1.5, 4.0);
  const ValueNoise turbulence(res, rng.uniform(12.0, 20.0), rng);
  const ValueNoise streaks(res, 3.0, rng);
  Image out({res, res, 3});
  for (std::size_t y = 0; y < res; ++y)
    for (std::size_t x = 0; x < res; ++x) {
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      const double r = std::hypot(fy - cy, fx - cx) + warp * turbulence(fy, fx) * 2.0;
      const double ring = std::pow(0.5 + 0.5 * std::sin(2.0 * M_PI * r / period), 1.5);
      const double t = std::clamp(ring + 0.15 * (streaks(fy, fx) - 0.5), 0.0, 1.0);
      put(out, y, x, mix(light, dark, t));
    }
  add_grain(out, 0.01, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Defects

struct Defect {
  Map mask;
  Image rendered;
};

Rgb saturated_color(Rng& rng) {
  Rgb c;
  for (auto& v : c) v = static_cast<float>(rng.uniform() < 0.5 ? rng.uniform(0.0, 0.2) : rng.uniform(0.8, 1.0));
  return c;
}

std::size_t mask_area(const Map& mask) {
  std::size_t n = 0;
  for (float v : mask.values()) n += v > 0.5f ? 1 : 0;
  return n;
}

// Ellipse of roughly the requested area, rotated, fully inside the image.
Map ellipse_mask(std::size_t res, double area, Rng& rng) {
  const double aspect = rng.uniform(0.5, 2.0);
  const double ry = std::sqrt(area / (M_PI * aspect)), rx = ry * aspect;
  const double theta = rng.uniform(0.0, M_PI);
  const double reach = std::max(rx, ry) + 1.0;
  const double lo = reach, hi = static_cast<double>(res) - reach;
  Map mask({res, res});
  if (hi <= lo) return mask;
  const double cy = rng.uniform(lo, hi), cx = rng.uniform(lo, hi);
  const double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t y = 0; y < res; ++y)
    for (std::size_t x = 0; x < res; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
      const double u = dx * c + dy * s, v = -dx * s + dy * c;
      if ((u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0) mask.at(y, x) = 1.0f;
    }
  return mask;
}

Map rectangle_mask(std::size_t res, double area, Rng& rng) {
  const double aspect = rng.uniform(0.6, 1.6);
  const double hh = std::sqrt(area / aspect) / 2.0, hw = hh * aspect;
  const double theta = rng.uniform(0.0, M_PI);
  const double reach = std::hypot(hh, hw) + 1.0;
  const double lo = reach, hi = static_cast<double>(res) - reach;
  Map mask({res, res});
  if (hi <= lo) return mask;
  const double cy = rng.uniform(lo, hi), cx = rng.uniform(lo, hi);
  const double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t y = 0; y < res; ++y)
    for (std::size_t x = 0; x < res; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
      const double u = dx * c + dy * s, v = -dx * s + dy * c;
      if (std::abs(u) <= hw && std::abs(v) <= hh) mask.at(y, x) = 1.0f;
    }
  return mask;
}

double segment_distance(double py, double px, double ay, double ax, double by, double bx) {
  const double vy = by - ay, vx = bx - ax;
  const double len2 = vy * vy + vx * vx;
  const double t = len2 > 0 ? std::clamp(((py - ay) * vy + (px - ax) * vx) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(py - (ay + t * vy), px - (ax + t * vx));
}

Map scratch_mask(std::size_t res, double area, Rng& rng) {
  const double half_width = rng.uniform(0.8, 1.6);
  const double length = area / (2.0 * half_width);
  const std::size_t segments = 2 + rng.below(3);
  const double margin = 3.0;
  const double r = static_cast<double>(res);
  std::vector<std::pair<double, double>> pts{{rng.uniform(margin, r - margin), rng.uniform(margin, r - margin)}};
  double heading = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t k = 0; k < segments; ++k) {
    heading += rng.uniform(-0.6, 0.6);
    const double step = length / static_cast<double>(segments);
    auto [y, x] = pts.back();
    double ny = y + step * std::sin(heading), nx = x + step * std::cos(heading);
    // Bounce off the borders.
    if (ny < margin || ny > r - margin) {
      heading = -heading;
      ny = y + step * std::sin(heading);
    }
    if (nx < margin || nx > r - margin) {
      heading = M_PI - heading;
      nx = x + step * std::cos(heading);
    }
    pts.emplace_back(std::clamp(ny, margin, r - margin), std::clamp(nx, margin, r - margin));
  }
  Map mask({res, res});
  for (std::size_t y = 0; y < res; ++y)
    for (std::size_t x = 0; x < res; ++x) {
      const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
      for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        if (segment_distance(py, px, pts[k].first, pts[k].second, pts[k + 1].first, pts[k + 1].second) <= half_width) {
          mask.at(y, x) = 1.0f;
          break;
        }
      }
    }
  return mask;
}

// Guarantees the minimum contrast on every defect pixel.
void enforce_contrast(Image& rendered, const Image& clean, const Map& mask) {
  const std::size_t res = clean.dim(0);
  for (std::size_t y = 0; y < res; ++y)
    for (std::size_t x = 0; x < res; ++x) {
      if (mask.at(y, x) < 0.5f) continue;
      float diff = 0.0f;
      for (std::size_t c = 0; c < 3; ++c) diff = std::max(diff, std::abs(rendered.at(y, x, c) - clean.at(y, x, c)));
      if (diff >= kMinDefectContrast) continue;
      std::size_t channel = 0;
      float headroom = 0.0f;
      for (std::size_t c = 0; c < 3; ++c) {
        const float room = std::max(clean.at(y, x, c), 1.0f - clean.at(y, x, c));
        if (room > headroom) {
          headroom = room;
          channel = c;
        }
      }
      const float v = clean.at(y, x, channel);
      rendered.at(y, x, channel) = v < 0.5f ? std::min(1.0f, v + 0.3f) : std::max(0.0f, v - 0.3f);
    }
}

Defect inject(const Image& clean, DefectType type, const SyntheticSpec& spec, Rng& rng) {
  const std::size_t res = clean.dim(0);
  Map mask;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 500) throw std::runtime_error("could not place a defect within the requested area range");
    const double area = rng.uniform(static_cast<double>(spec.min_defect_area), static_cast<double>(spec.max_defect_area));
    switch (type) {
      case DefectType::color_spot: mask = ellipse_mask(res, area, rng); break;
      case DefectType::foreign_patch: mask = rng.uniform() < 0.5 ? rectangle_mask(res, area, rng) : ellipse_mask(res, area, rng); break;
      case DefectType::scratch: mask = scratch_mask(res, area, rng); break;
    }
    const std::size_t a = mask_area(mask);
    if (a >= spec.min_defect_area && a <= spec.max_defect_area) break;
  }

  Image out = clean;
  switch (type) {
    case DefectType::color_spot: {
      const Rgb color = saturated_color(rng);
      const double alpha = rng.uniform(0.7, 0.95);
      for (std::size_t y = 0; y < res; ++y)
        for (std::size_t x = 0; x < res; ++x)
          if (mask.at(y, x) > 0.5f)
            for (std::size_t c = 0; c < 3; ++c)
              out.at(y, x, c) = static_cast<float>(clean.at(y, x, c) * (1.0 - alpha) + color[c] * alpha);
      break;
    }
    case DefectType::foreign_patch: {
      // A small high-frequency object pasted on the surface.
      const Rgb a = saturated_color(rng), b = saturated_color(rng);
      const double cell = rng.uniform(1.5, 3.0);
      for (std::size_t y = 0; y < res; ++y)
        for (std::size_t x = 0; x < res; ++x)
          if (mask.at(y, x) > 0.5f) {
            const bool odd = (static_cast<long>(std::floor(static_cast<double>(y) / cell)) +
                              static_cast<long>(std::floor(static_cast<double>(x) / cell))) % 2 != 0;
            put(out, y, x, odd ? a : b);
          }
      break;
    }
    case DefectType::scratch: {
      const bool bright = rng.uniform() < 0.5;
      const float level = static_cast<float>(bright ? rng.uniform(0.85, 1.0) : rng.uniform(0.0, 0.15));
      for (std::size_t y = 0; y < res; ++y)
        for (std::size_t x = 0; x < res; ++x)
          if (mask.at(y, x) > 0.5f) put(out, y, x, {level, level, level});
      break;
    }
  }
  enforce_contrast(out, clean, mask);
  return Defect{std::move(mask), std::move(out)};
}

void validate_spec(const SyntheticSpec& spec) {
  if (spec.resolution < 8) throw std::invalid_argument("synthetic resolution must be at least 8");
  if (spec.min_defect_area == 0 || spec.min_defect_area > spec.max_defect_area)
    throw std::invalid_argument("defect area range must satisfy 0 < min <= max");
  // Shapes are placed with a margin, so a defect needs room well inside the frame.
  if (spec.max_defect_area * 4 > spec.resolution * spec.resolution)
    throw std::invalid_argument("defect area range exceeds a quarter of the image (defect larger than image)");
  if (spec.defect_types.empty()) throw std::invalid_argument("at least one defect type is required");
}

std::vector<Sample> generate_range(const SyntheticSpec& spec, std::size_t n_normal, std::size_t n_anomalous,
                                   std::uint64_t first_index) {
  validate_spec(spec);
  std::vector<Sample> out;
  out.reserve(n_normal + n_anomalous);
  for (std::size_t k = 0; k < n_normal + n_anomalous; ++k) {
    const std::uint64_t index = first_index + k;
    Image clean = render_texture(spec.family, spec.resolution, spec.seed, index);
    const std::string descriptor = std::string("synthetic:") + to_string(spec.family) + ":seed=" +
                                   std::to_string(spec.seed) + ":index=" + std::to_string(index);
    if (k < n_normal) {
      out.push_back({std::move(clean), Label::normal, std::nullopt, descriptor, "good"});
      continue;
    }
    Rng rng = Rng::derive(spec.seed ^ kDefectStream ^ (static_cast<std::uint64_t>(spec.family) << 56), index);
    const DefectType type = spec.defect_types[rng.below(spec.defect_types.size())];
    Defect d = inject(clean, type, spec, rng);
    out.push_back({std::move(d.rendered), Label::anomalous, std::move(d.mask), descriptor, to_string(type)});
  }
  return out;
}

}  // namespace

Image render_texture(TextureFamily family, std::size_t resolution, std::uint64_t seed, std::uint64_t index) {
  Rng rng = Rng::derive(seed ^ kTextureStream ^ (static_cast<std::uint64_t>(family) << 56), index);
  switch (family) {
    case TextureFamily::stripes: return render_stripes(resolution, rng);
    case TextureFamily::checker: return render_checker(resolution, rng);
    case TextureFamily::blob_noise: return render_blob_noise(resolution, rng);
    case TextureFamily::wood_grain: return render_wood_grain(resolution, rng);
  }
  throw std::invalid_argument("unknown texture family");
}

std::vector<Sample> generate(const SyntheticSpec& spec, std::size_t n_normal, std::size_t n_anomalous) {
  return generate_range(spec, n_normal, n_anomalous, 0);
}

Dataset generate_dataset(const SyntheticSpec& spec, std::size_t n_train, std::size_t n_test_normal,
                         std::size_t n_test_anomalous) {
  Dataset ds;
  ds.name = to_string(spec.family);
  ds.train = generate_range(spec, n_train, 0, kTrainOffset);
  ds.test = generate_range(spec, n_test_normal, n_test_anomalous, 0);
  return ds;
}

}  // namespace maeday
