#pragma once

#include <cstdint>
#include <vector>

#include "lpiqa/nn/model.hpp"

namespace lpiqa::nn {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool operator==(const AdamHyper&) const = default;
};

/// Moment accumulators mirror the parameter tensors in declaration order.
template <typename T>
struct AdamState {
    AdamHyper hyper;
    std::int64_t step = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;

    static AdamState zeros_for(const std::vector<const Tensor<T>*>& params, AdamHyper hyper = {});
    bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads, AdamState<T>& state);

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state);

}  // namespace lpiqa::nn
