#include "dsfnet/checkpoint.hpp"
#include "dsfnet/netpbm.hpp"
#include "dsfnet/rng.hpp"
#include "dsfnet/synth.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace dsf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dsfnet_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Checkpoint random_checkpoint(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Checkpoint ckpt;
  const int entries = 1 + static_cast<int>(gen() % 6);
  for (int e = 0; e < entries; ++e) {
    Shape shape;
    const int rank = static_cast<int>(gen() % 5);
    for (int r = 0; r < rank; ++r) shape.push_back(1 + static_cast<Index>(gen() % 4));
    Index n = 1;
    for (Index d : shape) n *= d;
    CheckpointEntry entry{"p" + std::to_string(e) + ".w", shape, std::vector<float>(static_cast<std::size_t>(n))};
    for (auto& v : entry.data) {
      std::uint32_t bits = static_cast<std::uint32_t>(gen());
      std::memcpy(&v, &bits, 4);
      if (!std::isfinite(v)) v = static_cast<float>(bits % 1000) * 1e-3f;
    }
    ckpt.push_back(entry);
  }
  return ckpt;
}

bool same_bits(const Checkpoint& a, const Checkpoint& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].shape != b[i].shape || a[i].data.size() != b[i].data.size()) return false;
    if (std::memcmp(a[i].data.data(), b[i].data.data(), a[i].data.size() * 4) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("netpbm examples") {
  std::string p6 = "P6 4 4 255\n";
  for (int i = 0; i < 48; ++i) p6.push_back(static_cast<char>(i * 5));
  const auto img = decode_netpbm(p6);
  CHECK(img.shape() == Shape{3, 4, 4});
  CHECK(img[0] == 0.0);
  CHECK(img[16] == doctest::Approx(5.0 / 255));
  CHECK(img[1] == doctest::Approx(15.0 / 255));
  CHECK(encode_netpbm(img) == "P6\n4 4\n255\n" + p6.substr(11));

  std::string p5 = "P5\n# comment\n3 2\n255\n";
  for (int i = 0; i < 6; ++i) p5.push_back(static_cast<char>(i % 2 ? 255 : 0));
  const auto mask = decode_netpbm(p5);
  CHECK(mask.shape() == Shape{1, 2, 3});
  for (Index i = 0; i < mask.size(); ++i) CHECK(mask[i] == static_cast<double>(i % 2));
}

TEST_CASE("netpbm errors") {
  CHECK_THROWS_AS(decode_netpbm("P3 1 1 255\n\x01"), std::runtime_error);
  CHECK_THROWS_AS(decode_netpbm("P6 2 2 65535\n"), std::runtime_error);
  CHECK_THROWS_AS(decode_netpbm("P6 2 2 15\n123456789012"), std::runtime_error);
  CHECK_THROWS_AS(decode_netpbm("P6 4 4 255\n" + std::string(47, 'x')), std::runtime_error);
  CHECK_THROWS_AS(decode_netpbm("P5 x 4 255\n"), std::runtime_error);
  CHECK_THROWS_AS(decode_netpbm(""), std::runtime_error);
  CHECK_THROWS_AS(load_image(fs::temp_directory_path() / "dsfnet_no_such_file.ppm"), std::runtime_error);
}

TEST_CASE("netpbm roundtrip within the quantization bound") {
  const auto dir = scratch("netpbm");
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto img = uniform_tensor<double>({3, 5, 7}, 0, 1, seed);
    save_image(img, dir / "a.ppm");
    const auto back = load_image(dir / "a.ppm");
    REQUIRE(back.shape() == img.shape());
    CHECK((back.data() - img.data()).abs().maxCoeff() <= 1.0 / 510 + 1e-12);
    const auto plane = uniform_tensor<double>({1, 6, 4}, 0, 1, seed);
    save_mask(plane, dir / "m.pgm");
    const auto m = load_image(dir / "m.pgm");
    for (Index i = 0; i < m.size(); ++i) CHECK(m[i] == (plane[i] >= 0.5 ? 1.0 : 0.0));
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint format") {
  CHECK(encode_checkpoint({}).size() == kCheckpointHeaderBytes);
  CHECK(encode_checkpoint({}) == std::string("DSF1\x01\x00\x00\x00\x00\x00", 10));
  CHECK(decode_checkpoint(encode_checkpoint({})).empty());
  const Checkpoint one{{"w", {2}, {1.0f, -2.0f}}};
  const auto bytes = encode_checkpoint(one);
  CHECK(bytes.size() == 10 + 2 + 1 + 1 + 4 + 8);
  CHECK(bytes.substr(bytes.size() - 4) == std::string("\x00\x00\x00\xc0", 4));

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), std::runtime_error);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad), std::runtime_error);
  for (std::size_t cut = 0; cut < bytes.size(); ++cut)
    CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, cut)), std::runtime_error);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), std::runtime_error);
  Checkpoint twice = one;
  twice.push_back(one.front());
  CHECK_THROWS_AS(encode_checkpoint(twice), std::invalid_argument);
  std::string dup = encode_checkpoint({{"w", {1}, {1.0f}}, {"v", {1}, {2.0f}}});
  dup[dup.size() - 4 - 4 - 1 - 1] = 'w';
  CHECK_THROWS_AS(decode_checkpoint(dup), std::runtime_error);
}

TEST_CASE("checkpoint roundtrip is bit-exact") {
  const auto dir = scratch("ckpt");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ckpt = random_checkpoint(seed);
    CHECK(same_bits(decode_checkpoint(encode_checkpoint(ckpt)), ckpt));
    save_checkpoint(ckpt, dir / "c.ckpt");
    CHECK(same_bits(load_checkpoint(dir / "c.ckpt"), ckpt));
  }
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << "DSFX";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("store restore is all or nothing") {
  ParameterStore<double> store;
  store.add("a", Tensor<double>::constant({2}, 1.0));
  store.add("b", Tensor<double>::constant({3}, 1.0));
  Checkpoint ckpt{{"a", {2}, {5.0f, 6.0f}}, {"b", {2}, {7.0f, 8.0f}}};
  CHECK_THROWS_AS(restore_store(store, ckpt), std::runtime_error);
  CHECK(store.at("a")[0] == 1.0);
  ckpt[1] = {"b", {3}, {7.0f, 8.0f, 9.0f}};
  restore_store(store, ckpt);
  CHECK(store.at("a")[1] == 6.0);
  CHECK(store.at("b")[2] == 9.0);
}

TEST_CASE("synthetic generator") {
  for (auto d : {Difficulty::easy, Difficulty::low_contrast, Difficulty::multi_lesion, Difficulty::hairy}) {
    CHECK(parse_difficulty(difficulty_name(d)) == d);
    const auto a = synth_generate(4, 32, 11, d), b = synth_generate(4, 32, 11, d);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK((a[i].image.data() == b[i].image.data()).all());
      CHECK((a[i].mask.data() == b[i].mask.data()).all());
      CHECK(a[i].image.shape() == Shape{3, 32, 32});
      CHECK(a[i].mask.shape() == Shape{1, 32, 32});
      CHECK((a[i].image.data() >= 0.0).all());
      CHECK((a[i].image.data() <= 1.0).all());
      CHECK(((a[i].mask.data() == 0.0) || (a[i].mask.data() == 1.0)).all());
    }
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (auto d : {Difficulty::easy, Difficulty::low_contrast, Difficulty::multi_lesion, Difficulty::hairy})
      for (const auto& s : synth_generate(6, 48, seed, d)) {
        const double frac = s.mask.data().mean();
        CHECK(frac >= kMinMaskFraction);
        CHECK(frac <= kMaxMaskFraction);
      }
  for (const auto& s : synth_generate(10, 64, 3, Difficulty::easy)) {
    double inside = 0, outside = 0, n_in = 0;
    const Index plane = 64 * 64;
    for (Index i = 0; i < plane; ++i) {
      const double v = (s.image[i] + s.image[plane + i] + s.image[2 * plane + i]) / 3;
      if (s.mask[i] > 0.5) {
        inside += v;
        ++n_in;
      } else {
        outside += v;
      }
    }
    CHECK(outside / (plane - n_in) - inside / n_in >= 0.3);
  }
  CHECK_THROWS_AS(synth_generate(1, 24, 0, Difficulty::easy), std::invalid_argument);
  CHECK_THROWS_AS(synth_generate(1, 36, 0, Difficulty::easy), std::invalid_argument);
  CHECK_THROWS_AS(synth_generate(-1, 32, 0, Difficulty::easy), std::invalid_argument);
  CHECK_THROWS_AS(parse_difficulty("medium"), std::invalid_argument);
}

TEST_CASE("dataset files are deterministic") {
  const auto d1 = scratch("set1"), d2 = scratch("set2");
  const auto samples = synth_generate(3, 32, 5, Difficulty::hairy);
  save_dataset(samples, d1);
  save_dataset(synth_generate(3, 32, 5, Difficulty::hairy), d2);
  for (const auto& e : fs::directory_iterator(d1))
    CHECK(read_bytes(e.path()) == read_bytes(d2 / e.path().filename()));
  const auto loaded = load_dataset(d1);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((loaded[i].mask.data() == samples[i].mask.data()).all());
    CHECK((loaded[i].image.data() - samples[i].image.data()).abs().maxCoeff() <= 1.0 / 510 + 1e-12);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}
