#include "dsfnet/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace dsf {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  long number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw std::runtime_error(std::string("netpbm: ") + field + " too large");
      ++pos_;
    }
    if (pos_ == start) throw std::runtime_error(std::string("netpbm: malformed header, expected ") + field);
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw std::runtime_error("netpbm: malformed header, missing separator before raster");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

Image decode_netpbm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw std::runtime_error("netpbm: malformed header, expected P5 or P6");
  const Index channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader reader(bytes.substr(2));
  const long width = reader.number("width");
  const long height = reader.number("height");
  const long maxval = reader.number("maxval");
  if (width < 1 || height < 1) throw std::runtime_error("netpbm: malformed header, zero extent");
  if (maxval != 255) throw std::runtime_error("netpbm: maxval " + std::to_string(maxval) + " unsupported, need 255");
  reader.end_of_header();

  const std::size_t offset = 2 + reader.pos();
  const std::size_t pixels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const std::size_t expected = pixels * static_cast<std::size_t>(channels);
  if (bytes.size() - offset < expected)
    throw std::runtime_error("netpbm: truncated payload, have " + std::to_string(bytes.size() - offset) + " of " +
                             std::to_string(expected) + " bytes");

  Image img({channels, height, width});
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (std::size_t p = 0; p < pixels; ++p)
    for (Index c = 0; c < channels; ++c)
      img[c * static_cast<Index>(pixels) + static_cast<Index>(p)] =
          raster[p * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)] / 255.0;
  return img;
}

std::string encode_netpbm(const Image& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw std::invalid_argument("encode_netpbm: expected 1 x H x W or 3 x H x W, got " + shape_string(image.shape()));
  const Index channels = image.dim(0), h = image.dim(1), w = image.dim(2), plane = h * w;
  std::ostringstream header;
  header << (channels == 3 ? "P6" : "P5") << '\n' << w << ' ' << h << "\n255\n";
  std::string out = header.str();
  const std::size_t offset = out.size();
  out.resize(offset + static_cast<std::size_t>(plane * channels));
  for (Index p = 0; p < plane; ++p)
    for (Index c = 0; c < channels; ++c) {
      const double v = std::clamp(image[c * plane + p], 0.0, 1.0);
      out[offset + static_cast<std::size_t>(p * channels + c)] = static_cast<char>(std::lround(v * 255.0));
    }
  return out;
}

Image load_image(const std::filesystem::path& path) {
  try {
    return decode_netpbm(read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void save_image(const Image& image, const std::filesystem::path& path) { write_file(path, encode_netpbm(image)); }

void save_mask(const Image& mask, const std::filesystem::path& path) {
  if (mask.rank() != 3 || mask.dim(0) != 1) throw std::invalid_argument("save_mask: expected 1 x H x W");
  Image binary = mask;
  for (Index i = 0; i < binary.size(); ++i) binary[i] = binary[i] >= 0.5 ? 1.0 : 0.0;
  save_image(binary, path);
}

}  // namespace dsf
