#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "maeday/rng.hpp"
#include "maeday/tensor.hpp"

namespace maeday {

// ---------------------------------------------------------------------------
// Image I/O and resampling. Images are H x W x 3 floats in [0, 1]; masks are
// H x W floats in {0, 1}.

// Reads 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette) or binary PPM (P6,
// maxval 255). Gray input is expanded to three channels; alpha is dropped.
Image read_image(const std::filesystem::path& path);
// Reads a single-channel mask; any nonzero pixel becomes 1.
Map read_mask(const std::filesystem::path& path);

// Writes by extension: .ppm (P6) or .png. Accepts H x W x 3 or H x W.
// Values are clamped to [0, 1] and rounded to 8 bits.
void write_image(const std::filesystem::path& path, const Tensor<float>& image);

// Bilinear resize with half-pixel centers: source coordinate of output
// pixel x is (x + 0.5) * in / out - 0.5, clamped to the image.
// Works on H x W x C and H x W tensors.
Tensor<float> resize(const Tensor<float>& image, std::size_t height, std::size_t width);

// Bilinear sample at continuous pixel coordinates with mirrored borders.
float sample_mirrored(const Image& image, double y, double x, std::size_t channel);

// ---------------------------------------------------------------------------
// Samples and datasets.

enum class Label { normal, anomalous };

struct Sample {
  Image image;
  Label label = Label::normal;
  std::optional<Map> gt_mask;
  std::string source;       // file path or generator descriptor
  std::string defect_type;  // "good" for normal samples
};

struct Dataset {
  std::string name;
  std::vector<Sample> train;  // normal only
  std::vector<Sample> test;
};

enum class Split { train, test };

// MVTec-AD layout:
//   <root>/<class>/train/good/*
//   <root>/<class>/test/<defect_type>/*
//   <root>/<class>/ground_truth/<defect_type>/<stem>_mask.png
// Files are visited in sorted path order. Only images under a `good`
// directory are labelled normal. With resize_to set, images (not masks) are
// resized to that square resolution.
std::vector<Sample> load_mvtec(const std::filesystem::path& root, const std::string& class_name, Split split,
                               std::optional<std::size_t> resize_to = std::nullopt);
Dataset load_mvtec_dataset(const std::filesystem::path& root, const std::string& class_name,
                           std::optional<std::size_t> resize_to = std::nullopt);

// Writes a dataset in the MVTec layout (PNG files).
void write_mvtec(const std::filesystem::path& root, const Dataset& dataset);

// ---------------------------------------------------------------------------
// Procedural benchmark.

enum class TextureFamily { stripes, checker, blob_noise, wood_grain };
enum class DefectType { foreign_patch, scratch, color_spot };

const char* to_string(TextureFamily family);
const char* to_string(DefectType type);
TextureFamily parse_family(const std::string& name);
DefectType parse_defect(const std::string& name);

struct SyntheticSpec {
  TextureFamily family = TextureFamily::stripes;
  std::size_t resolution = 64;
  std::vector<DefectType> defect_types{DefectType::foreign_patch, DefectType::scratch, DefectType::color_spot};
  // Inclusive bounds on the defect mask area in pixels.
  std::size_t min_defect_area = 20;
  std::size_t max_defect_area = 160;
  std::uint64_t seed = 0;
};

// Minimum per-pixel change (max over channels) inside every defect mask.
inline constexpr float kMinDefectContrast = 0.1f;

// Texture draw number `index` of the family; a pure function of its arguments.
Image render_texture(TextureFamily family, std::size_t resolution, std::uint64_t seed, std::uint64_t index);

// Normal samples are texture draws; anomalous samples are further draws
// with one injected defect and an exact ground-truth mask. Every sample is a
// pure function of (spec, its index).
std::vector<Sample> generate(const SyntheticSpec& spec, std::size_t n_normal, std::size_t n_anomalous);

// Train split of n_train normal draws plus a generated test split; the two
// use disjoint draw indices.
Dataset generate_dataset(const SyntheticSpec& spec, std::size_t n_train, std::size_t n_test_normal,
                         std::size_t n_test_anomalous);

}  // namespace maeday
