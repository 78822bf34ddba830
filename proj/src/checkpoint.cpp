#include "dsfnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace dsf {
namespace {

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw std::runtime_error(std::string("checkpoint truncated while reading ") + what + " at byte " +
                               std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.size() > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("checkpoint: too many entries");
  std::unordered_set<std::string> seen;
  std::string out(kCheckpointMagic, 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.size()));
  for (const auto& e : ckpt) {
    if (e.name.empty()) throw std::invalid_argument("checkpoint: unnamed entry");
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw std::invalid_argument("checkpoint: name too long: " + e.name.substr(0, 32));
    if (!seen.insert(e.name).second) throw std::invalid_argument("checkpoint: duplicate name " + e.name);
    if (e.shape.size() > 255) throw std::invalid_argument("checkpoint: rank too large for " + e.name);
    if (static_cast<std::size_t>(shape_size(e.shape)) != e.data.size())
      throw std::invalid_argument("checkpoint: payload of " + e.name + " does not match " + shape_string(e.shape));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.shape.size()));
    for (Index d : e.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float f : e.data) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != std::string_view(kCheckpointMagic, 4)) throw std::runtime_error("checkpoint: bad magic");
  const auto version = in.get<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) + " unsupported, expected " +
                             std::to_string(kCheckpointVersion));
  const auto count = in.get<std::uint32_t>("entry count");

  Checkpoint ckpt;
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto len = in.get<std::uint16_t>("name length");
    e.name = std::string(in.take(len, "name"));
    if (!seen.insert(e.name).second) throw std::runtime_error("checkpoint: duplicate name " + e.name);
    const auto rank = in.get<std::uint8_t>("rank");
    std::size_t total = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto extent = in.get<std::uint32_t>("extent");
      if (extent == 0) throw std::runtime_error("checkpoint: zero extent in " + e.name);
      e.shape.push_back(static_cast<Index>(extent));
      total *= extent;
      if (total > bytes.size()) throw std::runtime_error("checkpoint truncated: payload of " + e.name);
    }
    const auto payload = in.take(total * 4, "payload");
    e.data.resize(total);
    for (std::size_t k = 0; k < total; ++k) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[4 * k + b])) << (8 * b);
      e.data[k] = std::bit_cast<float>(bits);
    }
    ckpt.push_back(std::move(e));
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes after last entry");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  try {
    return decode_checkpoint(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

const CheckpointEntry* find_entry(const Checkpoint& ckpt, std::string_view name) {
  for (const auto& e : ckpt)
    if (e.name == name) return &e;
  return nullptr;
}

const CheckpointEntry& require_entry(const Checkpoint& ckpt, std::string_view name) {
  const auto* e = find_entry(ckpt, name);
  if (!e) throw std::runtime_error("checkpoint has no entry " + std::string(name));
  return *e;
}

}  // namespace dsf
