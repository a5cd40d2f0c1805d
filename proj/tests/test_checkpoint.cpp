#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "degflow/checkpoint.hpp"

using namespace degflow;
namespace fs = std::filesystem;

namespace {
fs::path temp_file(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "degflow_ckpt_tests";
  fs::create_directories(dir);
  return dir / name;
}
}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
  std::vector<CheckpointEntry> entries;
  Tensor<float> a(Shape{2, 3}, {1.f, -2.5f, 0.f, 1e-7f, 3.14159f, -0.0f});
  Tensor<float> b(Shape{4}, {0.1f, 0.2f, 0.3f, 0.4f});
  entries.push_back({"fgdm.head.w", a});
  entries.push_back({"fgdm.head.b", b});
  const fs::path path = temp_file("roundtrip.dgfw");
  save_checkpoint(path, entries);

  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "fgdm.head.w");
  CHECK(loaded[0].tensor.shape == a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) {
    // compare bit patterns, not values (-0.0 must survive)
    uint32_t x, y;
    std::memcpy(&x, &a.data[i], 4);
    std::memcpy(&y, &loaded[0].tensor.data[i], 4);
    CHECK(x == y);
  }

  // a second save of the loaded entries is byte-identical
  const fs::path path2 = temp_file("roundtrip2.dgfw");
  save_checkpoint(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("file header carries the DGFW magic") {
  const fs::path path = temp_file("magic.dgfw");
  save_checkpoint(path, {{"t", Tensor<float>(Shape{1}, {1.f})}});
  std::ifstream is(path, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  CHECK(std::string(magic, 4) == "DGFW");
}

TEST_CASE("bad magic and truncation are rejected") {
  const fs::path path = temp_file("bad.dgfw");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPExxxxyyyy";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  const fs::path trunc = temp_file("trunc.dgfw");
  save_checkpoint(trunc, {{"t", Tensor<float>(Shape{8}, std::vector<float>(8, 1.f))}});
  const auto size = fs::file_size(trunc);
  fs::resize_file(trunc, size - 6);
  CHECK_THROWS_AS(load_checkpoint(trunc), DataError);
}

TEST_CASE("missing tensors are reported by name") {
  std::vector<CheckpointEntry> entries{{"a", Tensor<float>(Shape{1}, {1.f})}};
  CHECK(checkpoint_has(entries, "a"));
  CHECK(!checkpoint_has(entries, "b"));
  CHECK_THROWS_AS(checkpoint_get(entries, "b"), DataError);
}
