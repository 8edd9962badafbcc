#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dynagmap {

/// Row-major interleaved image. Channel c of pixel (u, v) lives at
/// ((v * width + u) * channels + c).
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, T fill = T{})
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    T& at(int u, int v, int c = 0) { return data_[index(u, v, c)]; }
    const T& at(int u, int v, int c = 0) const { return data_[index(u, v, c)]; }

    bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width_ && v < height_; }
    bool same_shape(int w, int h) const { return w == width_ && h == height_; }
    template <typename U>
    bool same_shape(const Image<U>& other) const {
        return other.width() == width_ && other.height() == height_;
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    friend bool operator==(const Image& a, const Image& b) = default;

private:
    std::size_t index(int u, int v, int c) const {
        return (static_cast<std::size_t>(v) * width_ + u) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<T> data_;
};

using RgbImage = Image<double>;     // 3 channels in [0,1]
using DepthImage = Image<double>;   // 1 channel, meters, 0 = invalid
using FlowImage = Image<double>;    // 2 channels, pixels
using MaskImage = Image<std::uint8_t>;  // 1 channel, nonzero = set

inline std::size_t count_set(const MaskImage& mask) {
    std::size_t n = 0;
    for (auto v : mask.data()) n += v != 0;
    return n;
}

}  // namespace dynagmap
