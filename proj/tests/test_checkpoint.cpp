#include <stdexcept>
#include <limits>
#include <cstdio>
#include <fstream>

#include "deepmot/checkpoint.hpp"
#include "deepmot/rng.hpp"
#include "doctest.h"

using namespace deepmot;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

Tensor f32_rounded(Tensor t) {
  t.quantize_f32();
  return t;
}

}  // namespace

TEST_CASE("ntf1 save/load/save is byte identical") {
  Rng rng(301);
  NamedTensors bundle;
  bundle.config = "kind=test;note=abc";
  Tensor a(3, 4);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-2.0, 2.0);
  Tensor b({2, 3, 2});
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-2.0, 2.0);
  bundle.tensors = {{"alpha", a}, {"beta", b}};

  const std::string p1 = "ntf1_roundtrip_1.bin", p2 = "ntf1_roundtrip_2.bin";
  save_ntf1(p1, bundle);
  NamedTensors loaded = load_ntf1(p1);
  CHECK(loaded.config == bundle.config);
  CHECK(loaded.tensors.size() == 2);
  CHECK(loaded.tensors[0].first == "alpha");
  CHECK(loaded.tensors[1].second.shape() == std::vector<std::size_t>{2, 3, 2});
  // Values come back as their float32 roundings.
  CHECK(loaded.tensors[0].second == f32_rounded(a));

  save_ntf1(p2, loaded);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("ntf1 rejects corrupt files") {
  const std::string path = "ntf1_bad.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_AS(load_ntf1(path), std::runtime_error);
  {
    std::ofstream os(path, std::ios::binary);
    os << "NTF1";
    os.put(2);  // truncated count
  }
  CHECK_THROWS_AS(load_ntf1(path), std::runtime_error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_ntf1("does_not_exist.ntf1"), std::runtime_error);
}

TEST_CASE("kv metadata parsing") {
  auto kv = parse_kv("kind=dhn;hidden=64;head=64,32,1");
  CHECK(kv_get(kv, "kind") == "dhn");
  CHECK(kv_get(kv, "head") == "64,32,1");
  CHECK_THROWS_AS(kv_get(kv, "missing"), std::runtime_error);
  CHECK_THROWS_AS(parse_kv("no_equals_sign"), std::runtime_error);
}
