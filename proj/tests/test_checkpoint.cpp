#include <cstdio>
#include <fstream>

#include <doctest.h>

#include "selfqa/checkpoint.hpp"
#include "selfqa/rng.hpp"

using namespace selfqa;

namespace {

Parameter make_param(const std::string& name, std::vector<std::size_t> shape,
                     std::uint64_t seed) {
  RngStream rng(seed);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return Parameter(name, std::move(t));
}

struct TempFiles {
  std::string manifest = "test_ckpt_manifest.json";
  std::string blob = "test_ckpt_blob.bin";
  ~TempFiles() {
    std::remove(manifest.c_str());
    std::remove(blob.c_str());
  }
};

}  // namespace

TEST_CASE("checkpoint round-trips bit for bit") {
  TempFiles tmp;
  Parameter a = make_param("layer.w", {3, 4}, 1);
  Parameter b = make_param("layer.b", {4}, 2);
  Parameter c = make_param("scalarish", {1}, 3);
  save_checkpoint({&a, &b, &c}, tmp.manifest, tmp.blob);

  Parameter a2("layer.w", Tensor::zeros({3, 4}));
  Parameter b2("layer.b", Tensor::zeros({4}));
  Parameter c2("scalarish", Tensor::zeros({1}));
  load_checkpoint({&a2, &b2, &c2}, tmp.manifest, tmp.blob);

  for (std::size_t i = 0; i < a.value.size(); ++i) CHECK(a2.value[i] == a.value[i]);
  for (std::size_t i = 0; i < b.value.size(); ++i) CHECK(b2.value[i] == b.value[i]);
  CHECK(c2.value[0] == c.value[0]);
}

TEST_CASE("manifest is valid JSON with name/shape/dtype/offset") {
  TempFiles tmp;
  Parameter a = make_param("w", {2, 2}, 5);
  save_checkpoint({&a}, tmp.manifest, tmp.blob);
  std::ifstream in(tmp.manifest);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("\"name\"") != std::string::npos);
  CHECK(text.find("\"shape\"") != std::string::npos);
  CHECK(text.find("\"f64\"") != std::string::npos);
  CHECK(text.find("\"offset\"") != std::string::npos);
}

TEST_CASE("loading rejects missing names and shape mismatches") {
  TempFiles tmp;
  Parameter a = make_param("w", {2, 2}, 5);
  save_checkpoint({&a}, tmp.manifest, tmp.blob);

  Parameter missing("nope", Tensor::zeros({2, 2}));
  CHECK_THROWS(load_checkpoint({&missing}, tmp.manifest, tmp.blob));
  Parameter wrong("w", Tensor::zeros({4}));
  CHECK_THROWS(load_checkpoint({&wrong}, tmp.manifest, tmp.blob));
}

TEST_CASE("repeated saves are byte-identical") {
  TempFiles tmp;
  Parameter a = make_param("w", {5, 3}, 8);
  save_checkpoint({&a}, tmp.manifest, tmp.blob);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  std::string m1 = slurp(tmp.manifest), b1 = slurp(tmp.blob);
  save_checkpoint({&a}, tmp.manifest, tmp.blob);
  CHECK(slurp(tmp.manifest) == m1);
  CHECK(slurp(tmp.blob) == b1);
}
