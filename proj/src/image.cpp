#include "capfuse/image.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <string>

#include "capfuse/errors.hpp"
#include "capfuse/util.hpp"

namespace capfuse {

namespace {

class PpmReader {
public:
  PpmReader(std::string_view bytes, const std::filesystem::path& origin)
      : bytes_(bytes), origin_(origin) {}

  int next_int() {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    int value = 0;
    auto [ptr, ec] = std::from_chars(bytes_.data() + start, bytes_.data() + pos_, value);
    if (ec != std::errc{} || start == pos_) fail("bad integer in header");
    return value;
  }

  std::string_view magic() {
    if (bytes_.size() < 2) fail("file too short");
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  // Exactly one whitespace byte separates the header from binary data.
  std::string_view binary_payload(std::size_t n) {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      fail("missing separator before pixel data");
    ++pos_;
    if (bytes_.size() - pos_ < n) fail("truncated pixel data");
    return bytes_.substr(pos_, n);
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw UnreadableImage(origin_.string(), why);
  }

private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::filesystem::path origin_;
  std::size_t pos_ = 0;
};

}  // namespace

RgbImage parse_ppm(std::string_view bytes, const std::filesystem::path& origin) {
  PpmReader r(bytes, origin);
  auto magic = r.magic();
  if (magic != "P6" && magic != "P3") r.fail("not a PPM (P3/P6) file");
  int w = r.next_int();
  int h = r.next_int();
  int maxval = r.next_int();
  if (w <= 0 || h <= 0 || w > 16384 || h > 16384) r.fail("bad dimensions");
  if (maxval != 255) r.fail("only maxval 255 is supported");
  RgbImage img(w, h);
  if (magic == "P6") {
    auto data = r.binary_payload(img.pixels.size());
    std::copy(data.begin(), data.end(), img.pixels.begin());
  } else {
    for (auto& px : img.pixels) {
      int v = r.next_int();
      if (v > 255) r.fail("sample exceeds maxval");
      px = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableImage(path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_ppm(bytes, path);
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  write_file_atomic(path, out);
}

Eigen::VectorXd color_histogram(const RgbImage& image, int bins_per_channel) {
  const int b = bins_per_channel;
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(b * b * b);
  const std::size_t n = image.pixels.size() / 3;
  if (n == 0) return hist;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* px = &image.pixels[i * 3];
    int r = px[0] * b / 256, g = px[1] * b / 256, bl = px[2] * b / 256;
    hist((r * b + g) * b + bl) += 1.0;
  }
  return hist / static_cast<double>(n);
}

std::vector<bool> saturated_mask(const RgbImage& image, int min_spread) {
  const std::size_t n = image.pixels.size() / 3;
  std::vector<bool> mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* px = &image.pixels[i * 3];
    int hi = std::max({px[0], px[1], px[2]});
    int lo = std::min({px[0], px[1], px[2]});
    mask[i] = hi - lo >= min_spread;
  }
  return mask;
}

}  // namespace capfuse
