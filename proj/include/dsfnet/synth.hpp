#pragma once

#include "dsfnet/netpbm.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dsf {

enum class Difficulty { easy, low_contrast, multi_lesion, hairy };

Difficulty parse_difficulty(const std::string& name);
std::string difficulty_name(Difficulty d);

struct SegSample {
  std::string id;
  Image image;  // 3 x H x W
  Image mask;   // 1 x H x W, {0,1}
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::easy;
};

inline constexpr double kSynthNoiseSigma = 0.02;
inline constexpr double kMinMaskFraction = 0.02;
inline constexpr double kMaxMaskFraction = 0.5;

/// Skin-toned background with a low-frequency gradient and Gaussian noise, darker lesions
/// made of perturbed ellipses. Sample i uses derive_seed(seed, "synth", i).
/// extent must be >= 32 and divisible by 8.
std::vector<SegSample> synth_generate(int count, Index extent, std::uint64_t seed, Difficulty difficulty);

SegSample synth_sample(Index extent, std::uint64_t sample_seed, Difficulty difficulty);

/// sample_XXXX.ppm and sample_XXXX_mask.pgm per sample.
void save_dataset(const std::vector<SegSample>& samples, const std::filesystem::path& dir);

/// Every sample_*.ppm with a matching _mask.pgm, sorted by name.
std::vector<SegSample> load_dataset(const std::filesystem::path& dir);

}  // namespace dsf
