#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maeday/tensor.hpp"

namespace maeday {

// On-disk layout:
//
//   MAEDAY1\n
//   key=value\n            (metadata, any number, in insertion order)
//   tensor=<name>:<d0>x<d1>...\n   (one per tensor, in payload order)
//   end\n
//   <payload>               raw little-endian float32, tensors back to back
//
// Names and values may not contain '\n'; keys may not contain '='.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  void add_tensor(std::string name, Tensor<float> tensor);
  const Tensor<float>& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

inline constexpr const char* kCheckpointMagic = "MAEDAY1";

}  // namespace maeday
