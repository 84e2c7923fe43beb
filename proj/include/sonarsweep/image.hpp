#ifndef SONARSWEEP_IMAGE_HPP
#define SONARSWEEP_IMAGE_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace sonarsweep {

/// Dense row-major image with interleaved channels. Pixel (u, v) is column u,
/// row v; row 0 is the top of the image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
      throw std::invalid_argument("Image: negative size or zero channels");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * height_;
  }

  bool contains(int u, int v) const {
    return u >= 0 && v >= 0 && u < width_ && v < height_;
  }

  T& at(int u, int v, int c = 0) { return data_[index(u, v, c)]; }
  const T& at(int u, int v, int c = 0) const { return data_[index(u, v, c)]; }

  std::span<T> pixel(int u, int v) {
    return {data_.data() + index(u, v, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int u, int v) const {
    return {data_.data() + index(u, v, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  template <typename U>
  bool same_size(const Image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t index(int u, int v, int c) const {
    return (static_cast<std::size_t>(v) * width_ + u) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

/// Per-pixel validity: nonzero means valid.
using Mask = Image<std::uint8_t>;

}  // namespace sonarsweep

#endif  // SONARSWEEP_IMAGE_HPP
