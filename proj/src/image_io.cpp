#include "rqen/image_io.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "rqen/errors.hpp"

namespace rqen {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::vector<char>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::size_t next_int() {
    skip_space_and_comments();
    std::size_t value = 0;
    bool any = false;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 24)) fail("header value too large");
      ++pos_;
      any = true;
    }
    if (!any) fail("malformed header");
    return value;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing separator before raster");
    }
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError(path_.string() + ": " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 2;
};

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw DataError(path.string() + ": not a binary PPM (P6) or PGM (P5) file");
  }
  HeaderReader header(bytes, path);
  Image img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  img.width = header.next_int();
  img.height = header.next_int();
  const std::size_t maxval = header.next_int();
  if (img.width == 0 || img.height == 0) header.fail("zero image dimension");
  if (maxval != 255) header.fail("only maxval 255 is supported");
  const std::size_t offset = header.raster_offset();
  const std::size_t expected = img.width * img.height * img.channels;
  if (bytes.size() - offset < expected) header.fail("truncated raster");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(offset + expected));
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_pnm: channels must be 1 or 3");
  }
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw std::invalid_argument("write_pnm: pixel buffer does not match dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path.string());
  out << (image.channels == 3 ? "P6" : "P5") << '\n'
      << image.width << ' ' << image.height << '\n'
      << 255 << '\n';
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw DataError("failed writing image " + path.string());
}

Tensor image_to_tensor(const Image& image) {
  Tensor t({image.channels, image.height, image.width});
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x)
        t[(c * image.height + y) * image.width + x] = image.at(y, x, c) / 255.0;
  return t;
}

}  // namespace rqen
