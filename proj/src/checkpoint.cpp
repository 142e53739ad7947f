#include "deepmot/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "deepmot/common.hpp"

namespace deepmot {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) detail::fail_runtime("ntf1: truncated file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) detail::fail_runtime("ntf1: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  detail::check(name.size() <= 0xffff, "ntf1: tensor name too long");
  put_u16(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  const auto& shape = t.shape();
  detail::check(shape.size() <= 0xff, "ntf1: rank too large");
  unsigned char rank = static_cast<unsigned char>(shape.size());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (auto dim : shape) put_u32(os, static_cast<std::uint32_t>(dim));
  for (double v : t.data()) put_f32(os, static_cast<float>(v));
}

std::pair<std::string, Tensor> read_tensor(std::istream& is) {
  const std::uint16_t name_len = get_u16(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  if (!is) detail::fail_runtime("ntf1: truncated tensor name");
  unsigned char rank = 0;
  is.read(reinterpret_cast<char*>(&rank), 1);
  if (!is) detail::fail_runtime("ntf1: truncated tensor header");
  std::vector<std::size_t> shape(rank);
  std::size_t count = 1;
  for (auto& dim : shape) {
    dim = get_u32(is);
    count *= dim;
  }
  std::vector<double> values(count);
  for (auto& v : values) v = static_cast<double>(get_f32(is));
  return {std::move(name), Tensor(std::move(shape), std::move(values))};
}

}  // namespace

const Tensor* NamedTensors::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_ntf1(const std::string& path, const NamedTensors& bundle) {
  std::ofstream os(path, std::ios::binary);
  if (!os) detail::fail_runtime(detail::cat("ntf1: cannot open ", path, " for writing"));
  os.write("NTF1", 4);
  put_u32(os, static_cast<std::uint32_t>(bundle.tensors.size() + 1));
  Tensor meta({bundle.config.size()});
  for (std::size_t i = 0; i < bundle.config.size(); ++i)
    meta[i] = static_cast<double>(static_cast<unsigned char>(bundle.config[i]));
  write_tensor(os, "__config__", meta);
  for (const auto& [name, t] : bundle.tensors) write_tensor(os, name, t);
  if (!os) detail::fail_runtime(detail::cat("ntf1: write failed for ", path));
}

NamedTensors load_ntf1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) detail::fail_runtime(detail::cat("ntf1: cannot open ", path));
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NTF1", 4) != 0)
    detail::fail_runtime(detail::cat("ntf1: bad magic in ", path));
  const std::uint32_t count = get_u32(is);
  detail::check(count >= 1, "ntf1: missing metadata tensor");
  NamedTensors bundle;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = read_tensor(is);
    if (i == 0) {
      if (name != "__config__")
        detail::fail_runtime("ntf1: first tensor must be __config__");
      bundle.config.resize(t.size());
      for (std::size_t j = 0; j < t.size(); ++j)
        bundle.config[j] = static_cast<char>(static_cast<unsigned char>(t[j]));
    } else {
      bundle.tensors.emplace_back(std::move(name), std::move(t));
    }
  }
  return bundle;
}

std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& s) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t end = s.find(';', pos);
    if (end == std::string::npos) end = s.size();
    std::string item = s.substr(pos, end - pos);
    if (!item.empty()) {
      std::size_t eq = item.find('=');
      if (eq == std::string::npos)
        detail::fail_runtime(detail::cat("bad key=value entry: ", item));
      out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    pos = end + 1;
  }
  return out;
}

std::string kv_get(const std::vector<std::pair<std::string, std::string>>& kv,
                   const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  detail::fail_runtime(detail::cat("missing config key: ", key));
}

}  // namespace deepmot
