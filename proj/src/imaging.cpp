#include "pp/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "pp/error.hpp"

namespace pp {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw DomainError("Image: extent must be at least 1x1x1, got " + std::to_string(height) + "x" +
                      std::to_string(width) + "x" + std::to_string(channels));
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

DepthMap::DepthMap(int height, int width, double fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw DomainError("DepthMap: extent must be at least 1x1");
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

bool is_valid_image(const Image& img) {
  if (img.empty() || (img.channels() != 1 && img.channels() != 3)) return false;
  for (double v : img.values()) {
    if (!(v >= 0.0 && v <= 1.0)) return false;  // also rejects NaN
  }
  return true;
}

void require_valid_image(const Image& img, std::string_view what) {
  if (!is_valid_image(img)) {
    throw DomainError(std::string(what) + ": expected a 1- or 3-channel image with values in [0, 1]");
  }
}

namespace {

struct IhdrInfo {
  int bit_depth = 0;
  int color_type = 0;
};

// The IHDR chunk always follows the 8-byte signature, so bit depth and color
// type sit at fixed offsets 24 and 25.
IhdrInfo read_ihdr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<unsigned char, 26> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  if (in.gcount() != static_cast<std::streamsize>(head.size()) ||
      png_sig_cmp(head.data(), 0, 8) != 0 || std::string(head.begin() + 12, head.begin() + 16) != "IHDR") {
    throw FormatError(path.string() + ": not a PNG file");
  }
  return {head[24], head[25]};
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  const IhdrInfo info = read_ihdr(path);
  if (info.bit_depth != 8) {
    throw FormatError(path.string() + ": unsupported bit depth " + std::to_string(info.bit_depth) +
                      " (only 8-bit is accepted)");
  }
  int channels = 0;
  if (info.color_type == PNG_COLOR_TYPE_GRAY) {
    channels = 1;
  } else if (info.color_type == PNG_COLOR_TYPE_RGB) {
    channels = 3;
  } else {
    throw FormatError(path.string() + ": unsupported color type " + std::to_string(info.color_type) +
                      " (grayscale or RGB without alpha only)");
  }

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw FormatError(path.string() + ": " + png.message);
  }
  png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError(path.string() + ": " + png.message);
  }

  const int height = static_cast<int>(png.height);
  const int width = static_cast<int>(png.width);
  Image img(height, width, channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        img.at(c, y, x) = bytes[(static_cast<std::size_t>(y) * width + x) * channels + c] / 255.0;
      }
    }
  }
  return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  require_valid_image(img, "save_image");
  const int channels = img.channels();
  std::vector<std::uint8_t> bytes(img.size());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        bytes[(static_cast<std::size_t>(y) * img.width() + x) * channels + c] =
            static_cast<std::uint8_t>(std::lround(img.at(c, y, x) * 255.0));
      }
    }
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

Image to_luma(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw DomainError("to_luma: expected 1 or 3 channels");
  Image out(img.height(), img.width(), 1);
  auto r = img.plane(0);
  auto g = img.plane(1);
  auto b = img.plane(2);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::min(1.0, 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]);
  return out;
}

Image clamp_unit(Image img) {
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Image quantize_8bit(const Image& img) {
  Image out = img;
  for (double& v : out.values()) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
  return out;
}

}  // namespace pp
