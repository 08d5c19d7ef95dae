#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace pp {

/// Planar H x W x C array of doubles. Pixel images hold values in [0, 1] with
/// C in {1, 3}; the same container also carries unbounded maps (K maps,
/// attention logits), so validity is checked at operation boundaries with
/// require_valid_image rather than on every write.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }
  double at(int c, int y, int x) const {
    return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_extent(const Image& other) const { return height_ == other.height_ && width_ == other.width_; }

  bool operator==(const Image&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Per-pixel scene depth (relative units), non-negative.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  double& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const DepthMap&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// True when C is 1 or 3, the extent is non-empty and every value is finite and in [0, 1].
bool is_valid_image(const Image& img);

/// Throws DomainError naming `what` if img is not a valid pixel image.
void require_valid_image(const Image& img, std::string_view what);

/// Reads an 8-bit grayscale or RGB PNG; values are byte / 255.
Image load_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG with each value stored as round(v * 255).
void save_image(const Image& img, const std::filesystem::path& path);

/// ITU-R BT.601 luma (0.299 R + 0.587 G + 0.114 B). Single-channel input is returned as is.
Image to_luma(const Image& img);

/// Clamps every value into [0, 1].
Image clamp_unit(Image img);

/// Rounds every value to the nearest multiple of 1/255, as a PNG round trip would.
Image quantize_8bit(const Image& img);

}  // namespace pp
