#include "dsfnet/synth.hpp"

#include "dsfnet/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dsf {
namespace {

struct Blob {
  double cx, cy, a, b, rotation;
  std::array<double, 4> amp, phase;  // radial harmonics 2..5
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(engine_); }

 private:
  std::mt19937_64 engine_;
};

Blob random_blob(Rng& rng, Index extent, bool small) {
  const double e = static_cast<double>(extent);
  Blob blob{};
  const double lo = small ? 0.2 : 0.3, hi = small ? 0.8 : 0.7;
  blob.cx = rng.uniform(lo, hi) * e;
  blob.cy = rng.uniform(lo, hi) * e;
  const double rmin = small ? 0.07 : 0.12, rmax = small ? 0.16 : 0.3;
  blob.a = rng.uniform(rmin, rmax) * e;
  blob.b = rng.uniform(rmin, rmax) * e;
  blob.rotation = rng.uniform(0.0, std::numbers::pi);
  for (std::size_t k = 0; k < 4; ++k) {
    blob.amp[k] = rng.uniform(0.0, 0.06);
    blob.phase[k] = rng.uniform(0.0, 2 * std::numbers::pi);
  }
  return blob;
}

bool inside(const Blob& blob, double x, double y) {
  const double dx = x - blob.cx, dy = y - blob.cy;
  const double c = std::cos(blob.rotation), s = std::sin(blob.rotation);
  const double u = (c * dx + s * dy) / blob.a, v = (-s * dx + c * dy) / blob.b;
  const double theta = std::atan2(v, u);
  double radius = 1.0;
  for (std::size_t k = 0; k < 4; ++k) radius += blob.amp[k] * std::cos(static_cast<double>(k + 2) * theta + blob.phase[k]);
  return std::hypot(u, v) <= radius;
}

std::pair<double, double> contrast_range(Difficulty d) {
  switch (d) {
    case Difficulty::easy:
      return {0.35, 0.45};
    case Difficulty::low_contrast:
      return {0.05, 0.1};
    case Difficulty::multi_lesion:
    case Difficulty::hairy:
      return {0.2, 0.35};
  }
  throw std::logic_error("unknown difficulty");
}

void paint(Image& img, Index extent, double x, double y, int width, double value) {
  const Index x0 = static_cast<Index>(std::floor(x)), y0 = static_cast<Index>(std::floor(y));
  for (Index dy = 0; dy < width; ++dy)
    for (Index dx = 0; dx < width; ++dx) {
      const Index r = y0 + dy, c = x0 + dx;
      if (r < 0 || c < 0 || r >= extent || c >= extent) continue;
      for (Index ch = 0; ch < 3; ++ch) img[(ch * extent + r) * extent + c] = value;
    }
}

// Polyline of a few jittered segments through a lesion pixel, extended both ways.
void draw_hair(Image& img, const Image& mask, Index extent, Rng& rng) {
  std::vector<Index> lesion;
  for (Index i = 0; i < mask.size(); ++i)
    if (mask[i] > 0.5) lesion.push_back(i);
  const Index pick = lesion[static_cast<std::size_t>(rng.integer(0, static_cast<int>(lesion.size()) - 1))];
  const double px = static_cast<double>(pick % extent) + 0.5, py = static_cast<double>(pick / extent) + 0.5;
  const double heading = rng.uniform(0.0, 2 * std::numbers::pi);
  const double half_length = rng.uniform(0.3, 0.6) * static_cast<double>(extent);
  const int width = rng.integer(1, 2);
  const double value = rng.uniform(0.08, 0.2);
  for (double side : {0.0, std::numbers::pi}) {
    double x = px, y = py, dir = heading + side;
    const int segments = 3;
    for (int s = 0; s < segments; ++s) {
      const double len = half_length / segments;
      for (double t = 0; t < len; t += 0.25) paint(img, extent, x + t * std::cos(dir), y + t * std::sin(dir), width, value);
      x += len * std::cos(dir);
      y += len * std::sin(dir);
      dir += rng.uniform(-0.3, 0.3);
    }
  }
}

}  // namespace

Difficulty parse_difficulty(const std::string& name) {
  if (name == "easy") return Difficulty::easy;
  if (name == "low-contrast" || name == "low_contrast") return Difficulty::low_contrast;
  if (name == "multi-lesion" || name == "multi_lesion") return Difficulty::multi_lesion;
  if (name == "hairy") return Difficulty::hairy;
  throw std::invalid_argument("unknown difficulty '" + name + "' (easy, low-contrast, multi-lesion, hairy)");
}

std::string difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::easy:
      return "easy";
    case Difficulty::low_contrast:
      return "low-contrast";
    case Difficulty::multi_lesion:
      return "multi-lesion";
    case Difficulty::hairy:
      return "hairy";
  }
  throw std::logic_error("unknown difficulty");
}

SegSample synth_sample(Index extent, std::uint64_t sample_seed, Difficulty difficulty) {
  if (extent < 32 || extent % 8 != 0)
    throw std::invalid_argument("synth: extent " + std::to_string(extent) + " must be >= 32 and divisible by 8");
  Rng rng(sample_seed);
  const Index plane = extent * extent;
  const double e = static_cast<double>(extent);

  Image mask({1, extent, extent});
  const bool multi = difficulty == Difficulty::multi_lesion;
  bool accepted = false;
  for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
    std::vector<Blob> blobs;
    const int n = multi ? rng.integer(2, 3) : 1;
    for (int k = 0; k < n; ++k) blobs.push_back(random_blob(rng, extent, multi));
    for (Index r = 0; r < extent; ++r)
      for (Index c = 0; c < extent; ++c) {
        const double x = static_cast<double>(c) + 0.5, y = static_cast<double>(r) + 0.5;
        mask[r * extent + c] =
            std::any_of(blobs.begin(), blobs.end(), [&](const Blob& b) { return inside(b, x, y); }) ? 1.0 : 0.0;
      }
    const double fraction = mask.data().mean();
    accepted = fraction >= kMinMaskFraction && fraction <= kMaxMaskFraction;
  }
  if (!accepted) throw std::logic_error("synth: could not place a lesion of admissible size");

  const double red = rng.uniform(0.72, 0.88);
  const double green = red - rng.uniform(0.08, 0.16);
  const double blue = green - rng.uniform(0.04, 0.1);
  const std::array<double, 3> base{red, green, blue};
  const std::array<double, 3> tint{1.0, 1.15, 1.1};
  const double gradient = rng.uniform(0.0, 0.04), angle = rng.uniform(0.0, 2 * std::numbers::pi);
  const auto [dlo, dhi] = contrast_range(difficulty);
  const double delta = rng.uniform(dlo, dhi);

  Image image({3, extent, extent});
  for (Index r = 0; r < extent; ++r)
    for (Index c = 0; c < extent; ++c) {
      const double u = ((static_cast<double>(c) / e - 0.5) * std::cos(angle) + (static_cast<double>(r) / e - 0.5) * std::sin(angle)) /
                       std::numbers::sqrt2;
      const double lesion = mask[r * extent + c];
      for (Index ch = 0; ch < 3; ++ch)
        image[ch * plane + r * extent + c] = base[static_cast<std::size_t>(ch)] + gradient * u -
                                            lesion * delta * tint[static_cast<std::size_t>(ch)];
    }

  if (difficulty == Difficulty::hairy) {
    const int strokes = rng.integer(5, 15);
    for (int s = 0; s < strokes; ++s) draw_hair(image, mask, extent, rng);
  }
  for (Index i = 0; i < image.size(); ++i) image[i] = std::clamp(image[i] + rng.normal(kSynthNoiseSigma), 0.0, 1.0);

  SegSample sample;
  sample.image = std::move(image);
  sample.mask = std::move(mask);
  sample.seed = sample_seed;
  sample.difficulty = difficulty;
  return sample;
}

std::vector<SegSample> synth_generate(int count, Index extent, std::uint64_t seed, Difficulty difficulty) {
  if (count < 0) throw std::invalid_argument("synth: negative count");
  std::vector<SegSample> out;
  for (int i = 0; i < count; ++i) {
    auto s = synth_sample(extent, derive_seed(seed, "synth", static_cast<std::uint64_t>(i)), difficulty);
    char id[32];
    std::snprintf(id, sizeof id, "sample_%04d", i);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::vector<SegSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : samples) {
    save_image(s.image, dir / (s.id + ".ppm"));
    save_mask(s.mask, dir / (s.id + "_mask.pgm"));
  }
}

std::vector<SegSample> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> images;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (p.extension() == ".ppm" && p.stem().string().rfind("sample_", 0) == 0) images.push_back(p);
  }
  std::sort(images.begin(), images.end());
  std::vector<SegSample> out;
  for (const auto& p : images) {
    const auto mask_path = dir / (p.stem().string() + "_mask.pgm");
    if (!std::filesystem::exists(mask_path)) throw std::runtime_error("missing mask for " + p.string());
    SegSample s;
    s.id = p.stem().string();
    s.image = load_image(p);
    s.mask = load_image(mask_path);
    if (s.image.dim(0) != 3 || s.mask.dim(0) != 1)
      throw std::runtime_error(s.id + ": expected a color image and a grayscale mask");
    if (s.image.dim(1) != s.mask.dim(1) || s.image.dim(2) != s.mask.dim(2))
      throw std::runtime_error(s.id + ": image and mask extents differ");
    for (Index i = 0; i < s.mask.size(); ++i) s.mask[i] = s.mask[i] >= 0.5 ? 1.0 : 0.0;
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::runtime_error("no samples in " + dir.string());
  return out;
}

}  // namespace dsf
