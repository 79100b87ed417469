#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "lpiqa/nn/model.hpp"

namespace lpiqa::test {

using TensorD = nn::Tensor<double>;

inline TensorD random_tensor(int n, int c, int h, int w, std::uint64_t seed, double scale = 1.0) {
    TensorD t(n, c, h, w);
    SeededRng rng(seed, 42);
    for (double& v : t.values()) v = scale * rng.normal();
    return t;
}

/// Central differences of `loss` with respect to every entry of `x`.
inline std::vector<double> numeric_gradient(std::span<double> x, const std::function<double()>& loss,
                                            double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss();
        x[i] = keep - h;
        const double down = loss();
        x[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    return denom == 0 ? 0.0 : std::sqrt(diff) / denom;
}

/// Weighted sum <out, r>: a scalar whose gradient w.r.t. out is r.
inline double project(const TensorD& out, const TensorD& r) {
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
}

// Worst relative error of each check below.

inline double conv_gradcheck(int stride, int padding, std::uint64_t seed) {
    TensorD x = random_tensor(4, 3, 5, 5, seed);
    TensorD w = random_tensor(2, 3, 3, 3, seed + 1, 0.5);
    TensorD b = random_tensor(2, 1, 1, 1, seed + 2);
    const nn::ConvGeometry g{stride, padding};
    const TensorD out = nn::conv2d_forward(x, w, b, g);
    const TensorD r = random_tensor(out.n(), out.c(), out.h(), out.w(), seed + 3);
    const auto grads = nn::conv2d_backward(x, w, r, g);
    auto loss = [&] { return project(nn::conv2d_forward(x, w, b, g), r); };
    double worst = relative_error(grads.input.values(), numeric_gradient(x.values(), loss));
    worst = std::max(worst, relative_error(grads.weight.values(), numeric_gradient(w.values(), loss)));
    worst = std::max(worst, relative_error(grads.bias.values(), numeric_gradient(b.values(), loss)));
    return worst;
}

inline double relu_gradcheck(std::uint64_t seed) {
    TensorD x = random_tensor(3, 4, 5, 5, seed);
    for (double& v : x.values()) {
        if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;  // keep away from the kink
    }
    const TensorD r = random_tensor(3, 4, 5, 5, seed + 1);
    const TensorD analytic = nn::relu_backward(x, r);
    auto loss = [&] { return project(nn::relu_forward(x), r); };
    return relative_error(analytic.values(), numeric_gradient(x.values(), loss));
}

inline double pool_gradcheck(std::uint64_t seed) {
    TensorD x = random_tensor(2, 3, 4, 5, seed);
    const TensorD r = random_tensor(2, 3, 1, 1, seed + 1);
    const TensorD analytic = nn::global_avg_pool_backward(r, x.shape());
    auto loss = [&] { return project(nn::global_avg_pool_forward(x), r); };
    return relative_error(analytic.values(), numeric_gradient(x.values(), loss));
}

inline double fc_gradcheck(std::uint64_t seed) {
    TensorD x = random_tensor(3, 6, 1, 1, seed);
    TensorD w = random_tensor(20, 6, 1, 1, seed + 1);
    TensorD b = random_tensor(20, 1, 1, 1, seed + 2);
    const TensorD r = random_tensor(3, 20, 1, 1, seed + 3);
    const auto grads = nn::fully_connected_backward(x, w, r);
    auto loss = [&] { return project(nn::fully_connected_forward(x, w, b), r); };
    double worst = relative_error(grads.input.values(), numeric_gradient(x.values(), loss));
    worst = std::max(worst, relative_error(grads.weight.values(), numeric_gradient(w.values(), loss)));
    std::vector<double> bias_grad(20, 0.0);
    for (int n = 0; n < 3; ++n)
        for (int o = 0; o < 20; ++o) bias_grad[o] += r.at(n, o, 0, 0);
    worst = std::max(worst, relative_error(grads.bias.values(), bias_grad));
    worst = std::max(worst, relative_error(bias_grad, numeric_gradient(b.values(), loss)));
    return worst;
}

inline double softmax_gradcheck(std::uint64_t seed) {
    TensorD z = random_tensor(3, 20, 1, 1, seed, 2.0);
    const std::vector<int> targets{4, 19, 0};
    const auto out = nn::softmax_cross_entropy(z, std::span<const int>(targets));
    auto loss = [&] { return nn::softmax_cross_entropy(z, std::span<const int>(targets)).loss; };
    return relative_error(out.grad_logits.values(), numeric_gradient(z.values(), loss));
}

inline nn::ConvParams<double> random_conv(int cout, int cin, int k, nn::ConvGeometry g, std::uint64_t seed) {
    return {random_tensor(cout, cin, k, k, seed, std::sqrt(2.0 / (cin * k * k))), random_tensor(cout, 1, 1, 1, seed + 1, 0.1),
            g};
}

inline double block_gradcheck(bool projection, std::uint64_t seed) {
    const int cin = 3, cout = projection ? 4 : 3, stride = projection ? 2 : 1;
    nn::BlockParams<double> block{random_conv(cout, cin, 3, {stride, 1}, seed), random_conv(cout, cout, 3, {1, 1}, seed + 2),
                                  std::nullopt};
    if (projection) block.projection = random_conv(cout, cin, 1, {stride, 0}, seed + 4);
    TensorD x = random_tensor(2, cin, 6, 6, seed + 6);
    nn::BlockCache<double> cache;
    const TensorD out = nn::residual_block_forward(block, x, &cache);
    const TensorD r = random_tensor(out.n(), out.c(), out.h(), out.w(), seed + 7);
    nn::BlockParams<double> grads = block;
    const TensorD gx = nn::residual_block_backward(block, cache, r, grads);
    auto loss = [&] { return project(nn::residual_block_forward(block, x), r); };
    double worst = relative_error(gx.values(), numeric_gradient(x.values(), loss));
    std::vector<std::pair<nn::Tensor<double>*, nn::Tensor<double>*>> pairs{
        {&block.conv1.weight, &grads.conv1.weight}, {&block.conv1.bias, &grads.conv1.bias},
        {&block.conv2.weight, &grads.conv2.weight}, {&block.conv2.bias, &grads.conv2.bias}};
    if (projection) {
        pairs.push_back({&block.projection->weight, &grads.projection->weight});
        pairs.push_back({&block.projection->bias, &grads.projection->bias});
    }
    for (auto [p, g] : pairs) worst = std::max(worst, relative_error(g->values(), numeric_gradient(p->values(), loss)));
    return worst;
}

inline nn::ModelConfig tiny_config() {
    nn::ModelConfig c;
    c.stem_channels = 8;
    c.stages = {{1, 8}};
    c.input_size = 16;
    return c;
}

/// Gradient of the mean cross-entropy of a tiny network w.r.t. every parameter.
inline double end_to_end_gradcheck(const nn::ModelConfig& config, std::uint64_t seed) {
    SeededRng rng(seed, streams::kInit);
    nn::ModelParams<double> params = nn::init_params<double>(config, rng);
    // Non-zero biases so their gradients are exercised through every path.
    std::uint64_t k = 0;
    for (auto* t : params.tensors()) {
        if (t->h() == 1 && t->w() == 1 && t->c() == 1) {
            SeededRng brng(seed, 100 + k++);
            for (double& v : t->values()) v = 0.05 * brng.normal();
        }
    }
    const TensorD batch = random_tensor(2, 3, config.input_size, config.input_size, seed + 9, 0.3);
    const std::vector<int> targets{3, 17};
    nn::ForwardCache<double> cache;
    const TensorD logits = nn::model_forward(params, batch, &cache);
    const auto out = nn::softmax_cross_entropy(logits, std::span<const int>(targets));
    const nn::ModelParams<double> grads = nn::model_backward(params, cache, out.grad_logits);
    auto loss = [&] { return nn::softmax_cross_entropy(nn::model_forward(params, batch), std::span<const int>(targets)).loss; };
    std::vector<double> analytic, numeric;
    const auto gt = grads.tensors();
    const auto pt = params.tensors();
    for (std::size_t i = 0; i < pt.size(); ++i) {
        const auto num = numeric_gradient(pt[i]->values(), loss);
        analytic.insert(analytic.end(), gt[i]->values().begin(), gt[i]->values().end());
        numeric.insert(numeric.end(), num.begin(), num.end());
    }
    return relative_error(analytic, numeric);
}

}  // namespace lpiqa::test
