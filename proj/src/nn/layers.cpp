#include "lpiqa/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "lpiqa/parallel.hpp"

namespace lpiqa::nn {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvDims {
    int cin, h, w, cout, k, ho, wo;
    ConvGeometry g;
    int col_rows() const { return cin * k * k; }
    int col_cols() const { return ho * wo; }
};

template <typename T>
ConvDims check_conv(const Tensor<T>& input, const Tensor<T>& weight, ConvGeometry g) {
    if (g.stride < 1 || g.padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
    if (weight.c() != input.c()) {
        throw ShapeError("conv2d: input has " + std::to_string(input.c()) + " channels, weight expects " +
                         std::to_string(weight.c()));
    }
    if (weight.h() != weight.w()) throw ShapeError("conv2d: kernel must be square");
    ConvDims d{input.c(), input.h(), input.w(), weight.n(), weight.h(), 0, 0, g};
    d.ho = conv_output_size(d.h, d.k, g);
    d.wo = conv_output_size(d.w, d.k, g);
    if (d.ho < 1 || d.wo < 1) throw ShapeError("conv2d: kernel larger than padded input");
    return d;
}

/// Output columns [lo, hi) whose input column ox*stride - pad + kj lies inside the image.
struct ValidRange {
    int lo, hi;
};
inline ValidRange valid_range(int out_size, int in_size, int stride, int pad, int tap) {
    const int first = pad - tap;  // smallest input offset admitted is 0
    const int lo = first <= 0 ? 0 : (first + stride - 1) / stride;
    const int last = in_size - 1 + pad - tap;
    const int hi = last < 0 ? 0 : std::min(out_size, last / stride + 1);
    return {std::min(lo, hi), hi};
}

template <typename T>
void im2col(const T* x, const ConvDims& d, T* col) {
    const int cols = d.col_cols();
    const int s = d.g.stride;
    for (int c = 0; c < d.cin; ++c) {
        for (int ki = 0; ki < d.k; ++ki) {
            for (int kj = 0; kj < d.k; ++kj) {
                T* dst = col + static_cast<std::size_t>((c * d.k + ki) * d.k + kj) * cols;
                const ValidRange rx = valid_range(d.wo, d.w, s, d.g.padding, kj);
                for (int oy = 0; oy < d.ho; ++oy) {
                    const int iy = oy * s - d.g.padding + ki;
                    T* row = dst + static_cast<std::size_t>(oy) * d.wo;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(row, row + d.wo, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(c) * d.h + iy) * d.w - d.g.padding + kj;
                    std::fill(row, row + rx.lo, T(0));
                    if (s == 1) {
                        std::copy(src + rx.lo, src + rx.hi, row + rx.lo);
                    } else {
                        for (int ox = rx.lo; ox < rx.hi; ++ox) row[ox] = src[ox * s];
                    }
                    std::fill(row + rx.hi, row + d.wo, T(0));
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, const ConvDims& d, T* x) {
    const int cols = d.col_cols();
    const int s = d.g.stride;
    for (int c = 0; c < d.cin; ++c) {
        for (int ki = 0; ki < d.k; ++ki) {
            for (int kj = 0; kj < d.k; ++kj) {
                const T* src = col + static_cast<std::size_t>((c * d.k + ki) * d.k + kj) * cols;
                const ValidRange rx = valid_range(d.wo, d.w, s, d.g.padding, kj);
                for (int oy = 0; oy < d.ho; ++oy) {
                    const int iy = oy * s - d.g.padding + ki;
                    if (iy < 0 || iy >= d.h) continue;
                    T* dst = x + (static_cast<std::size_t>(c) * d.h + iy) * d.w - d.g.padding + kj;
                    const T* row = src + static_cast<std::size_t>(oy) * d.wo;
                    for (int ox = rx.lo; ox < rx.hi; ++ox) dst[ox * s] += row[ox];
                }
            }
        }
    }
}

/// Scratch buffer without value-initialization; im2col overwrites every entry.
template <typename T>
std::unique_ptr<T[]> scratch(std::size_t n) {
    return std::unique_ptr<T[]>(new T[n]);
}

}  // namespace

int conv_output_size(int in, int kernel, ConvGeometry g) {
    const int span = in + 2 * g.padding - kernel;
    return span < 0 ? 0 : span / g.stride + 1;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry g) {
    const ConvDims d = check_conv(input, weight, g);
    if (bias.size() != static_cast<std::size_t>(d.cout)) throw ShapeError("conv2d: bias size must equal output channels");
    Tensor<T> out(input.n(), d.cout, d.ho, d.wo);
    const ConstMatrixMap<T> wmat(weight.data(), d.cout, d.col_rows());
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bvec(bias.data(), d.cout);
    parallel_for(static_cast<std::size_t>(input.n()), [&](std::size_t i) {
        const auto col = scratch<T>(static_cast<std::size_t>(d.col_rows()) * d.col_cols());
        im2col(input.sample(static_cast<int>(i)), d, col.get());
        const ConstMatrixMap<T> cmat(col.get(), d.col_rows(), d.col_cols());
        MatrixMap<T> omat(out.sample(static_cast<int>(i)), d.cout, d.col_cols());
        omat.noalias() = wmat * cmat;
        omat.colwise() += bvec;
    });
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_output,
                             ConvGeometry g, bool want_input_grad) {
    const ConvDims d = check_conv(input, weight, g);
    if (grad_output.n() != input.n() || grad_output.c() != d.cout || grad_output.h() != d.ho ||
        grad_output.w() != d.wo) {
        throw ShapeError("conv2d backward: grad_output shape " + shape_string(grad_output.shape()) + " mismatched");
    }
    const int n = input.n();
    const std::size_t wsize = weight.size();
    ConvGrads<T> grads;
    if (want_input_grad) grads.input = Tensor<T>(input.shape());
    std::vector<T> partial_w(wsize * n);
    std::vector<T> partial_b(static_cast<std::size_t>(d.cout) * n);
    const ConstMatrixMap<T> wmat(weight.data(), d.cout, d.col_rows());
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const int s = static_cast<int>(i);
        const auto col = scratch<T>(static_cast<std::size_t>(d.col_rows()) * d.col_cols());
        im2col(input.sample(s), d, col.get());
        const ConstMatrixMap<T> cmat(col.get(), d.col_rows(), d.col_cols());
        const ConstMatrixMap<T> gmat(grad_output.sample(s), d.cout, d.col_cols());
        MatrixMap<T> gw(partial_w.data() + i * wsize, d.cout, d.col_rows());
        gw.noalias() = gmat * cmat.transpose();
        // Plain loop: Eigen's vectorized reductions reorder sums by buffer alignment.
        const T* go = grad_output.sample(s);
        for (int o = 0; o < d.cout; ++o) {
            T acc = T(0);
            for (int j = 0; j < d.col_cols(); ++j) acc += go[static_cast<std::size_t>(o) * d.col_cols() + j];
            partial_b[i * d.cout + o] = acc;
        }
        if (want_input_grad) {
            MatrixMap<T> gcol(col.get(), d.col_rows(), d.col_cols());
            gcol.noalias() = wmat.transpose() * gmat;
            col2im(col.get(), d, grads.input.sample(s));
        }
    });
    grads.weight = Tensor<T>(weight.shape());
    grads.bias = Tensor<T>(d.cout, 1, 1, 1);
    for (int i = 0; i < n; ++i) {
        const T* pw = partial_w.data() + static_cast<std::size_t>(i) * wsize;
        for (std::size_t j = 0; j < wsize; ++j) grads.weight[j] += pw[j];
        const T* pb = partial_b.data() + static_cast<std::size_t>(i) * d.cout;
        for (int j = 0; j < d.cout; ++j) grads.bias[j] += pb[j];
    }
    return grads;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
    if (!input.same_shape(grad_output)) throw ShapeError("relu backward: shape mismatch");
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? grad_output[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& input) {
    Tensor<T> out(input.n(), input.c(), 1, 1);
    const std::size_t plane = static_cast<std::size_t>(input.h()) * input.w();
    if (plane == 0) throw ShapeError("global_avg_pool: empty spatial plane");
    for (int i = 0; i < input.n(); ++i) {
        for (int c = 0; c < input.c(); ++c) {
            const T* p = input.sample(i) + c * plane;
            T s = T(0);
            for (std::size_t j = 0; j < plane; ++j) s += p[j];
            out.at(i, c, 0, 0) = s / static_cast<T>(plane);
        }
    }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_output, const typename Tensor<T>::Shape& input_shape) {
    if (grad_output.n() != input_shape[0] || grad_output.c() != input_shape[1]) {
        throw ShapeError("global_avg_pool backward: shape mismatch");
    }
    Tensor<T> out(input_shape);
    const std::size_t plane = static_cast<std::size_t>(input_shape[2]) * input_shape[3];
    for (int i = 0; i < out.n(); ++i) {
        for (int c = 0; c < out.c(); ++c) {
            const T g = grad_output.at(i, c, 0, 0) / static_cast<T>(plane);
            T* p = out.sample(i) + c * plane;
            std::fill(p, p + plane, g);
        }
    }
    return out;
}

template <typename T>
Tensor<T> fully_connected_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    const int features = static_cast<int>(input.sample_size());
    if (static_cast<int>(weight.sample_size()) != features) {
        throw ShapeError("fully_connected: input has " + std::to_string(features) + " features, weight expects " +
                         std::to_string(weight.sample_size()));
    }
    if (bias.size() != static_cast<std::size_t>(weight.n())) throw ShapeError("fully_connected: bias size mismatch");
    Tensor<T> out(input.n(), weight.n(), 1, 1);
    const ConstMatrixMap<T> x(input.data(), input.n(), features);
    const ConstMatrixMap<T> w(weight.data(), weight.n(), features);
    MatrixMap<T> y(out.data(), input.n(), weight.n());
    y.noalias() = x * w.transpose();
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data(), weight.n());
    return out;
}

template <typename T>
LinearGrads<T> fully_connected_backward(const Tensor<T>& input, const Tensor<T>& weight,
                                        const Tensor<T>& grad_output) {
    const int features = static_cast<int>(input.sample_size());
    if (static_cast<int>(weight.sample_size()) != features || grad_output.n() != input.n() ||
        static_cast<int>(grad_output.sample_size()) != weight.n()) {
        throw ShapeError("fully_connected backward: shape mismatch");
    }
    LinearGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape()), Tensor<T>(weight.n(), 1, 1, 1)};
    const ConstMatrixMap<T> x(input.data(), input.n(), features);
    const ConstMatrixMap<T> w(weight.data(), weight.n(), features);
    const ConstMatrixMap<T> gy(grad_output.data(), input.n(), weight.n());
    MatrixMap<T>(g.input.data(), input.n(), features).noalias() = gy * w;
    MatrixMap<T>(g.weight.data(), weight.n(), features).noalias() = gy.transpose() * x;
    for (int n = 0; n < input.n(); ++n) {
        for (int o = 0; o < weight.n(); ++o) g.bias[o] += grad_output[static_cast<std::size_t>(n) * weight.n() + o];
    }
    return g;
}

template <typename T>
LossOutput<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
    const int n = logits.n();
    const int k = static_cast<int>(logits.sample_size());
    if (static_cast<int>(targets.size()) != n) throw ShapeError("softmax_cross_entropy: one target per row required");
    LossOutput<T> out{T(0), Tensor<T>(n, k, 1, 1), Tensor<T>(n, k, 1, 1)};
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int t = targets[i];
        if (t < 0 || t >= k) throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(t) + " out of range");
        const T* z = logits.sample(i);
        T* p = out.probabilities.sample(i);
        const T zmax = *std::max_element(z, z + k);
        T denom = T(0);
        for (int c = 0; c < k; ++c) {
            p[c] = std::exp(z[c] - zmax);
            denom += p[c];
        }
        for (int c = 0; c < k; ++c) p[c] /= denom;
        // log p_t computed from the shifted logits, never from a rounded probability.
        total += -(static_cast<double>(z[t] - zmax) - std::log(static_cast<double>(denom)));
        T* g = out.grad_logits.sample(i);
        for (int c = 0; c < k; ++c) g[c] = (p[c] - (c == t ? T(1) : T(0))) / static_cast<T>(n);
    }
    out.loss = static_cast<T>(std::max(0.0, total / n));
    return out;
}

#define LPIQA_INSTANTIATE_LAYERS(T)                                                                            \
    template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry);      \
    template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry,   \
                                          bool);                                                                \
    template Tensor<T> relu_forward(const Tensor<T>&);                                                          \
    template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> global_avg_pool_forward(const Tensor<T>&);                                               \
    template Tensor<T> global_avg_pool_backward(const Tensor<T>&, const Tensor<T>::Shape&);                     \
    template Tensor<T> fully_connected_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
    template LinearGrads<T> fully_connected_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
    template LossOutput<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);

LPIQA_INSTANTIATE_LAYERS(float)
LPIQA_INSTANTIATE_LAYERS(double)

}  // namespace lpiqa::nn
