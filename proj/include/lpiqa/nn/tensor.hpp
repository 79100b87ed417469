#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpiqa::nn {

/// Dense NCHW tensor. Feature matrices use shape (n, features, 1, 1).
template <typename T>
class Tensor {
public:
    using Shape = std::array<int, 4>;

    Tensor() = default;
    Tensor(int n, int c, int h = 1, int w = 1, T fill = T(0)) : shape_{n, c, h, w} {
        for (int d : shape_) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        }
        data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
    }
    explicit Tensor(Shape s, T fill = T(0)) : Tensor(s[0], s[1], s[2], s[3], fill) {}

    int n() const { return shape_[0]; }
    int c() const { return shape_[1]; }
    int h() const { return shape_[2]; }
    int w() const { return shape_[3]; }
    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t sample_size() const { return static_cast<std::size_t>(shape_[1]) * shape_[2] * shape_[3]; }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    T* sample(int i) { return data_.data() + static_cast<std::size_t>(i) * sample_size(); }
    const T* sample(int i) const { return data_.data() + static_cast<std::size_t>(i) * sample_size(); }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }
    T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    T at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

    bool operator==(const Tensor&) const = default;

private:
    std::size_t offset(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    Shape shape_{0, 0, 0, 0};
    std::vector<T> data_;
};

inline std::string shape_string(const std::array<int, 4>& s) {
    return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
           std::to_string(s[3]) + ")";
}

}  // namespace lpiqa::nn
