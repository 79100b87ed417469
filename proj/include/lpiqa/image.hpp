#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpiqa {

/// Errors caused by bad input data (files, manifests, shapes). The CLI maps
/// these to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Planar RGB image with unit-interval components.
///
/// Storage is three row-major planes (R, G, B). Public operations in this
/// toolkit keep every component inside [0, 1]; raw writes through `at()` or
/// `data()` are the caller's responsibility, `clamp01()` restores the range.
class ImageF32 {
public:
    static constexpr int kChannels = 3;

    ImageF32() = default;
    ImageF32(int width, int height, float fill = 0.0f);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return kChannels; }
    bool empty() const { return data_.empty(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

    float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const float> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    void clamp01();

    bool operator==(const ImageF32&) const = default;

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

/// Square, odd-sided correlation kernel.
class Kernel2D {
public:
    /// Throws std::invalid_argument unless `side` is odd and `weights` has side*side entries.
    Kernel2D(int side, std::vector<double> weights);

    static Kernel2D identity() { return Kernel2D(1, {1.0}); }

    int side() const { return side_; }
    int radius() const { return side_ / 2; }
    double at(int row, int col) const { return weights_[static_cast<std::size_t>(row) * side_ + col]; }
    std::span<const double> weights() const { return weights_; }
    double sum() const;

private:
    int side_;
    std::vector<double> weights_;
};

/// Per-channel 2-D correlation with replicate borders; output clamped to [0, 1].
ImageF32 convolve2d(const ImageF32& img, const Kernel2D& kernel);

/// Area-average resampling to the requested size (box filter with fractional
/// pixel coverage). Same size returns a copy.
ImageF32 resize_area(const ImageF32& img, int width, int height);

/// Rec. 601 luminance replicated into all three channels.
ImageF32 to_grayscale(const ImageF32& img);

/// Mean over all components.
double mean_value(const ImageF32& img);

/// Quantizes a unit-interval component to a byte with round-half-up.
std::uint8_t to_byte(float component);

/// FNV-1a hash of the 8-bit quantized image plus its dimensions. Images that
/// survive a PNG round trip hash identically.
std::uint64_t content_hash(const ImageF32& img);

}  // namespace lpiqa
