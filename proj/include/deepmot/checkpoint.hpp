#pragma once

#include <string>
#include <utility>
#include <vector>

#include "deepmot/tensor.hpp"

namespace deepmot {

// NTF1 named-tensor container:
//   magic "NTF1"
//   uint32 LE   tensor count
//   per tensor:
//     uint16 LE name length, UTF-8 name bytes
//     uint8     rank
//     uint32 LE dimension sizes
//     float32 LE values, row-major
// The first tensor is a metadata record named "__config__" (rank 1, one
// float per byte of a key=value;... string). Values are stored as float32,
// so a save/load/save cycle is byte-identical and load(save(x)) equals x
// rounded through float32.
struct NamedTensors {
  std::string config;
  std::vector<std::pair<std::string, Tensor>> tensors;  // order preserved

  const Tensor* find(const std::string& name) const;
};

void save_ntf1(const std::string& path, const NamedTensors& bundle);
NamedTensors load_ntf1(const std::string& path);

// Parses "key=value;key=value" metadata strings.
std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& s);
std::string kv_get(const std::vector<std::pair<std::string, std::string>>& kv,
                   const std::string& key);

}  // namespace deepmot
