#pragma once

#include "dsfnet/tensor.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace dsf {

/// Images are C x H x W in [0,1]: C = 3 for PPM (P6), C = 1 for PGM (P5). Only maxval 255.
using Image = Tensor<double>;

Image decode_netpbm(std::string_view bytes);

/// P6 for 3 channels, P5 for 1. Values are clamped to [0,1] and stored as round(v * 255).
std::string encode_netpbm(const Image& image);

Image load_image(const std::filesystem::path& path);
void save_image(const Image& image, const std::filesystem::path& path);

/// Writes a {0,255} PGM from a single-channel map thresholded at 0.5.
void save_mask(const Image& mask, const std::filesystem::path& path);

}  // namespace dsf
