#include "maeday/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace maeday {

namespace {

void check_text(const std::string& s, const char* what) {
  if (s.find('\n') != std::string::npos) throw std::invalid_argument(std::string("checkpoint ") + what + " contains a newline");
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

Shape parse_shape(const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty()) throw std::runtime_error("checkpoint: malformed shape '" + text + "'");
    shape.push_back(static_cast<std::size_t>(std::stoull(part)));
  }
  if (shape.empty()) throw std::runtime_error("checkpoint: empty shape");
  return shape;
}

}  // namespace

void Checkpoint::set(const std::string& key, const std::string& value) {
  check_text(key, "key");
  check_text(value, "value");
  if (key.find('=') != std::string::npos || key.empty() || key == "tensor" || key == "end")
    throw std::invalid_argument("checkpoint: invalid key '" + key + "'");
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::get(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  return std::nullopt;
}

std::string Checkpoint::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw std::runtime_error("checkpoint: missing key '" + key + "'");
  return *v;
}

void Checkpoint::add_tensor(std::string name, Tensor<float> tensor) {
  check_text(name, "tensor name");
  if (name.find(':') != std::string::npos) throw std::invalid_argument("checkpoint: tensor name may not contain ':'");
  if (has_tensor(name)) throw std::invalid_argument("checkpoint: duplicate tensor '" + name + "'");
  tensors.emplace_back(std::move(name), std::move(tensor));
}

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kCheckpointMagic << '\n';
  for (const auto& [k, v] : meta) out << k << '=' << v << '\n';
  for (const auto& [n, t] : tensors) out << "tensor=" << n << ':' << shape_to_string(t.shape()) << '\n';
  out << "end\n";
  for (const auto& [n, t] : tensors) {
    std::vector<std::uint32_t> words(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) words[i] = to_little_endian(std::bit_cast<std::uint32_t>(t[i]));
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw std::runtime_error(path.string() + " is not a checkpoint (bad magic)");
  Checkpoint ck;
  std::vector<std::pair<std::string, Shape>> layout;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      terminated = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path.string() + ": malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "tensor") {
      const auto colon = value.rfind(':');
      if (colon == std::string::npos) throw std::runtime_error(path.string() + ": malformed tensor line '" + line + "'");
      layout.emplace_back(value.substr(0, colon), parse_shape(value.substr(colon + 1)));
    } else {
      ck.meta.emplace_back(key, value);
    }
  }
  if (!terminated) throw std::runtime_error(path.string() + ": header is not terminated");
  for (auto& [name, shape] : layout) {
    std::vector<std::uint32_t> words(shape_size(shape));
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!in) throw std::runtime_error(path.string() + ": truncated payload for tensor '" + name + "'");
    std::vector<float> data(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) data[i] = std::bit_cast<float>(to_little_endian(words[i]));
    ck.tensors.emplace_back(name, Tensor<float>(shape, std::move(data)));
  }
  return ck;
}

}  // namespace maeday
