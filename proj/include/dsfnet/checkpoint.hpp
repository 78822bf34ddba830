#pragma once

#include "dsfnet/parameters.hpp"
#include "dsfnet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dsf {

// Layout, little-endian throughout:
//   "DSF1" | u16 version | u32 count | count x (u16 len | name | u8 rank | rank x u32 extent | float32 payload)
inline constexpr char kCheckpointMagic[4] = {'D', 'S', 'F', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 10;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

using Checkpoint = std::vector<CheckpointEntry>;

std::string encode_checkpoint(const Checkpoint& ckpt);

/// Throws std::runtime_error on bad magic, version mismatch, duplicate names, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

const CheckpointEntry* find_entry(const Checkpoint& ckpt, std::string_view name);
const CheckpointEntry& require_entry(const Checkpoint& ckpt, std::string_view name);

template <typename Scalar>
CheckpointEntry make_entry(std::string name, const Tensor<Scalar>& t) {
  CheckpointEntry e{std::move(name), t.shape(), std::vector<float>(static_cast<std::size_t>(t.size()))};
  for (Index i = 0; i < t.size(); ++i) e.data[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
  return e;
}

template <typename Scalar>
Tensor<Scalar> entry_tensor(const CheckpointEntry& e) {
  Tensor<Scalar> t(e.shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(e.data[static_cast<std::size_t>(i)]);
  return t;
}

/// Every store entry, prefixed with `prefix`.
template <typename Scalar>
void append_store(Checkpoint& ckpt, const ParameterStore<Scalar>& store, const std::string& prefix = "") {
  for (const auto& p : store.entries()) ckpt.push_back(make_entry(prefix + p.name, p.value));
}

/// Overwrites every store entry from `prefix + name`. Missing entries or shape mismatches throw
/// before anything is written.
template <typename Scalar>
void restore_store(ParameterStore<Scalar>& store, const Checkpoint& ckpt, const std::string& prefix = "") {
  std::vector<const CheckpointEntry*> found;
  for (const auto& p : store.entries()) {
    const auto& e = require_entry(ckpt, prefix + p.name);
    if (e.shape != p.value.shape())
      throw std::runtime_error("checkpoint entry " + e.name + " has shape " + shape_string(e.shape) + ", expected " +
                               shape_string(p.value.shape()));
    found.push_back(&e);
  }
  for (std::size_t i = 0; i < found.size(); ++i) store.entries()[i].value = entry_tensor<Scalar>(*found[i]);
}

}  // namespace dsf
