#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fineray/checkpoint.hpp"
#include "fineray/rng.hpp"
#include "test_helpers.hpp"

using namespace fineray;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const char* tag) {
    path = fs::temp_directory_path() / (std::string("fineray_test_") + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Checkpoint sample_checkpoint() {
  Checkpoint c;
  Rng rng(11);
  Tensor<float> w = Tensor<float>::zeros({3, 4});
  for (float& v : w.data) v = static_cast<float>(rng.normal());
  Tensor<float> b = Tensor<float>::zeros({4});
  for (float& v : b.data) v = static_cast<float>(rng.uniform(-1, 1));
  // exercise awkward values too
  w.data[0] = 0.0f;
  w.data[1] = -0.0f;
  w.data[2] = 1.1754944e-38f;  // smallest normal
  c.tensors.emplace_back("layer0.weight", std::move(w));
  c.tensors.emplace_back("layer0.bias", std::move(b));
  c.meta.emplace_back("step", "1200");
  c.meta.emplace_back("stage", "1");
  c.meta.emplace_back("note", "value with: colon and spaces");
  return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  Checkpoint c = sample_checkpoint();
  save_checkpoint(dir.path.string(), c);
  Checkpoint r = load_checkpoint(dir.path.string());

  REQUIRE(r.tensors.size() == c.tensors.size());
  for (size_t i = 0; i < c.tensors.size(); ++i) {
    CHECK(r.tensors[i].first == c.tensors[i].first);
    CHECK(r.tensors[i].second.shape == c.tensors[i].second.shape);
    REQUIRE(r.tensors[i].second.data.size() == c.tensors[i].second.data.size());
    for (size_t j = 0; j < c.tensors[i].second.data.size(); ++j) {
      uint32_t a, b;
      std::memcpy(&a, &c.tensors[i].second.data[j], 4);
      std::memcpy(&b, &r.tensors[i].second.data[j], 4);
      CHECK(a == b);  // bit-level, so signed zeros and subnormals survive
    }
  }
  CHECK(r.meta == c.meta);
  CHECK(*r.find_meta("step") == "1200");
  CHECK(r.find_meta("absent") == nullptr);
  CHECK_THROWS_WITH_AS(r.require_meta("absent"), doctest::Contains("absent"), Error);
  CHECK(r.find_tensor("layer0.bias") != nullptr);
  CHECK(r.find_tensor("layer9.bias") == nullptr);
}

TEST_CASE("saving leaves no temp files and overwrites atomically") {
  TempDir dir("ckpt_atomic");
  Checkpoint c = sample_checkpoint();
  save_checkpoint(dir.path.string(), c);
  c.meta[0].second = "2400";
  save_checkpoint(dir.path.string(), c);  // overwrite in place

  int files = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) {
    ++files;
    CHECK(e.path().extension() != ".tmp");
  }
  CHECK(files == 2);
  CHECK(*load_checkpoint(dir.path.string()).find_meta("step") == "2400");
}

TEST_CASE("load failures are descriptive") {
  TempDir dir("ckpt_bad");

  SUBCASE("missing directory") {
    CHECK_THROWS_WITH_AS(load_checkpoint((dir.path / "nope").string()),
                         doctest::Contains("params.bin"), Error);
  }
  SUBCASE("bad magic") {
    save_checkpoint(dir.path.string(), sample_checkpoint());
    std::ofstream((dir.path / "params.bin").string(), std::ios::binary) << "XXXXXXXX";
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.path.string()), doctest::Contains("magic"), Error);
  }
  SUBCASE("truncated tensor data") {
    save_checkpoint(dir.path.string(), sample_checkpoint());
    auto bin = dir.path / "params.bin";
    auto size = fs::file_size(bin);
    fs::resize_file(bin, size - 8);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.path.string()), doctest::Contains("truncated"),
                         Error);
  }
  SUBCASE("missing manifest") {
    save_checkpoint(dir.path.string(), sample_checkpoint());
    fs::remove(dir.path / "manifest.txt");
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.path.string()), doctest::Contains("manifest.txt"),
                         Error);
  }
  SUBCASE("bad manifest header") {
    save_checkpoint(dir.path.string(), sample_checkpoint());
    std::ofstream((dir.path / "manifest.txt").string()) << "something else\n";
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.path.string()), doctest::Contains("header"), Error);
  }
  SUBCASE("malformed manifest line") {
    save_checkpoint(dir.path.string(), sample_checkpoint());
    std::ofstream((dir.path / "manifest.txt").string())
        << "fineray-checkpoint 1\nno-separator-here\n";
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.path.string()), doctest::Contains("manifest line"),
                         Error);
  }
}
