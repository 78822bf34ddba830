#pragma once

#include "dsfnet/tensor.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace dsf {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based stream splitting: one root seed fans out into independent
// per-purpose seeds ("init", "data", "shuffle", ...) indexed by a counter.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : purpose) h = (h ^ c) * 0x100000001b3ULL;
  return splitmix64(splitmix64(root ^ h) + index);
}

template <typename Scalar>
Tensor<Scalar> gaussian_tensor(Shape shape, double stddev, std::uint64_t seed) {
  Tensor<Scalar> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(normal(rng));
  return t;
}

template <typename Scalar>
Tensor<Scalar> uniform_tensor(Shape shape, double lo, double hi, std::uint64_t seed) {
  Tensor<Scalar> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(uniform(rng));
  return t;
}

}  // namespace dsf
