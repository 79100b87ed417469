#pragma once

#include <span>

#include "lpiqa/nn/tensor.hpp"

namespace lpiqa::nn {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ConvGeometry {
    int stride = 1;
    int padding = 0;
};

/// Output spatial size floor((in + 2*pad - k) / stride) + 1.
int conv_output_size(int in, int kernel, ConvGeometry g);

/// Cross-correlation. input (n, cin, h, w), weight (cout, cin, k, k), bias (cout, 1, 1, 1).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry g);

template <typename T>
struct ConvGrads {
    Tensor<T> input;  // empty when not requested
    Tensor<T> weight;
    Tensor<T> bias;
};

/// Weight and bias gradients are reduced over the batch in sample order, so
/// the result is independent of the worker count.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_output,
                             ConvGeometry g, bool want_input_grad = true);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);
/// Passes grad where the forward input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

/// (n, c, h, w) -> (n, c, 1, 1) spatial mean.
template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& input);
template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_output, const typename Tensor<T>::Shape& input_shape);

/// input (n, f, 1, 1), weight (out, f, 1, 1), bias (out, 1, 1, 1) -> (n, out, 1, 1).
template <typename T>
Tensor<T> fully_connected_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
    Tensor<T> input;
    Tensor<T> weight;
    Tensor<T> bias;
};
template <typename T>
LinearGrads<T> fully_connected_backward(const Tensor<T>& input, const Tensor<T>& weight,
                                        const Tensor<T>& grad_output);

template <typename T>
struct LossOutput {
    T loss;                    // mean over the batch of -log p[target]
    Tensor<T> probabilities;   // (n, classes, 1, 1)
    Tensor<T> grad_logits;     // (p - onehot) / n
};

template <typename T>
LossOutput<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

}  // namespace lpiqa::nn
