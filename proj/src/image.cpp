#include "lpiqa/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lpiqa {

ImageF32::ImageF32(int width, int height, float fill) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("ImageF32: width and height must be >= 1");
    }
    data_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
}

void ImageF32::clamp01() {
    for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

Kernel2D::Kernel2D(int side, std::vector<double> weights) : side_(side), weights_(std::move(weights)) {
    if (side < 1 || side % 2 == 0) {
        throw std::invalid_argument("Kernel2D: side length must be odd, got " + std::to_string(side));
    }
    if (weights_.size() != static_cast<std::size_t>(side) * side) {
        throw std::invalid_argument("Kernel2D: expected side*side weights");
    }
}

double Kernel2D::sum() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

ImageF32 convolve2d(const ImageF32& img, const Kernel2D& kernel) {
    const int w = img.width();
    const int h = img.height();
    const int r = kernel.radius();
    const int pw = w + 2 * r;

    // Nonzero taps only; motion kernels are mostly empty.
    struct Tap {
        int dy, dx;
        double weight;
    };
    std::vector<Tap> taps;
    for (int i = 0; i < kernel.side(); ++i) {
        for (int j = 0; j < kernel.side(); ++j) {
            if (kernel.at(i, j) != 0.0) taps.push_back({i, j, kernel.at(i, j)});
        }
    }

    ImageF32 out(w, h);
    std::vector<double> padded(static_cast<std::size_t>(pw) * (h + 2 * r));
    std::vector<double> acc(static_cast<std::size_t>(w) * h);
    for (int c = 0; c < ImageF32::kChannels; ++c) {
        for (int py = 0; py < h + 2 * r; ++py) {
            const int sy = std::clamp(py - r, 0, h - 1);
            for (int px = 0; px < pw; ++px) {
                const int sx = std::clamp(px - r, 0, w - 1);
                padded[static_cast<std::size_t>(py) * pw + px] = img.at(c, sy, sx);
            }
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (const Tap& t : taps) {
            for (int y = 0; y < h; ++y) {
                const double* src = padded.data() + static_cast<std::size_t>(y + t.dy) * pw + t.dx;
                double* dst = acc.data() + static_cast<std::size_t>(y) * w;
                for (int x = 0; x < w; ++x) dst[x] += t.weight * src[x];
            }
        }
        auto plane = out.plane(c);
        for (std::size_t i = 0; i < plane.size(); ++i) {
            plane[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
        }
    }
    return out;
}

namespace {

// Sparse weights mapping each destination index onto the source interval it covers.
struct Footprint {
    int first;
    std::vector<double> weights;
};

std::vector<Footprint> area_footprints(int src, int dst) {
    std::vector<Footprint> out(dst);
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        const double a = i * scale;
        const double b = (i + 1) * scale;
        const int first = static_cast<int>(std::floor(a));
        const int last = std::min(src - 1, static_cast<int>(std::ceil(b)) - 1);
        Footprint& f = out[i];
        f.first = first;
        for (int s = first; s <= last; ++s) {
            const double overlap = std::min(b, s + 1.0) - std::max(a, static_cast<double>(s));
            f.weights.push_back(std::max(0.0, overlap) / scale);
        }
    }
    return out;
}

}  // namespace

ImageF32 resize_area(const ImageF32& img, int width, int height) {
    if (width < 1 || height < 1) throw std::invalid_argument("resize_area: target size must be >= 1");
    if (width == img.width() && height == img.height()) return img;

    const auto fx = area_footprints(img.width(), width);
    const auto fy = area_footprints(img.height(), height);
    ImageF32 out(width, height);
    std::vector<double> rows(static_cast<std::size_t>(img.height()) * width);
    for (int c = 0; c < ImageF32::kChannels; ++c) {
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < width; ++x) {
                double s = 0.0;
                const Footprint& f = fx[x];
                for (std::size_t k = 0; k < f.weights.size(); ++k) s += f.weights[k] * img.at(c, y, f.first + k);
                rows[static_cast<std::size_t>(y) * width + x] = s;
            }
        }
        for (int y = 0; y < height; ++y) {
            const Footprint& f = fy[y];
            for (int x = 0; x < width; ++x) {
                double s = 0.0;
                for (std::size_t k = 0; k < f.weights.size(); ++k) {
                    s += f.weights[k] * rows[(f.first + k) * width + x];
                }
                out.at(c, y, x) = static_cast<float>(std::clamp(s, 0.0, 1.0));
            }
        }
    }
    return out;
}

ImageF32 to_grayscale(const ImageF32& img) {
    ImageF32 out(img.width(), img.height());
    const auto r = img.plane(0);
    const auto g = img.plane(1);
    const auto b = img.plane(2);
    for (std::size_t i = 0; i < img.plane_size(); ++i) {
        const float y = std::clamp(0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i], 0.0f, 1.0f);
        for (int c = 0; c < ImageF32::kChannels; ++c) out.plane(c)[i] = y;
    }
    return out;
}

double mean_value(const ImageF32& img) {
    double s = 0.0;
    for (float v : img.data()) s += v;
    return img.empty() ? 0.0 : s / static_cast<double>(img.data().size());
}

std::uint8_t to_byte(float component) {
    const double v = std::floor(static_cast<double>(std::clamp(component, 0.0f, 1.0f)) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

std::uint64_t content_hash(const ImageF32& img) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto feed = [&h](std::uint8_t byte) {
        h ^= byte;
        h *= 0x100000001B3ull;
    };
    for (int shift = 0; shift < 32; shift += 8) {
        feed(static_cast<std::uint8_t>(img.width() >> shift));
        feed(static_cast<std::uint8_t>(img.height() >> shift));
    }
    for (float v : img.data()) feed(to_byte(v));
    return h;
}

}  // namespace lpiqa
