#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lpiqa/nn/layers.hpp"
#include "lpiqa/rng.hpp"

namespace lpiqa::nn {

struct StageConfig {
    int blocks;
    int channels;
    bool operator==(const StageConfig&) const = default;
};

/// Architecture of the residual classifier:
/// stem 3x3 conv + relu, then stages of residual blocks (the first block of
/// every stage after the first downsamples with stride 2), global average
/// pooling and a fully connected head with `num_classes` outputs.
struct ModelConfig {
    int stem_channels = 16;
    std::vector<StageConfig> stages{{2, 16}, {2, 32}, {2, 64}};
    int input_size = 64;
    int num_classes = 20;

    void validate() const;
    /// Canonical text form, e.g. "resnet;stem=16;stages=2x16,2x32,2x64;input=64;classes=20".
    std::string fingerprint() const;
    static ModelConfig from_fingerprint(std::string_view fp);
    /// Parses "2x16,2x32,2x64".
    static std::vector<StageConfig> parse_stages(std::string_view text);

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ConvParams {
    Tensor<T> weight;  // (cout, cin, k, k)
    Tensor<T> bias;    // (cout, 1, 1, 1)
    ConvGeometry geometry;
};

/// out = relu(conv2(relu(conv1(x))) + shortcut(x)); shortcut is identity or a
/// 1x1 projection when stride or width changes.
template <typename T>
struct BlockParams {
    ConvParams<T> conv1;
    ConvParams<T> conv2;
    std::optional<ConvParams<T>> projection;
};

template <typename T>
struct ModelParams {
    ModelConfig config;
    ConvParams<T> stem;
    std::vector<BlockParams<T>> blocks;
    Tensor<T> fc_weight;  // (classes, features, 1, 1)
    Tensor<T> fc_bias;    // (classes, 1, 1, 1)

    /// Every parameter tensor in declaration order: stem, blocks (conv1,
    /// conv2, projection; weight before bias), head.
    std::vector<Tensor<T>*> tensors();
    std::vector<const Tensor<T>*> tensors() const;
    std::size_t parameter_count() const;
    std::string fingerprint() const { return config.fingerprint(); }
};

/// Zero-filled parameters with the shapes implied by `config`.
template <typename T>
ModelParams<T> make_params(const ModelConfig& config);

/// He-normal conv weights (variance 2 / fan_in), head weights with variance
/// 1 / fan_in, zero biases.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, SeededRng& rng);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p);

template <typename T>
struct BlockCache {
    Tensor<T> input;
    Tensor<T> pre1;
    Tensor<T> act1;
    Tensor<T> sum;  // pre-activation block output
};

template <typename T>
Tensor<T> residual_block_forward(const BlockParams<T>& block, const Tensor<T>& input, BlockCache<T>* cache = nullptr);

/// Accumulates parameter gradients into `grads` (overwrites) and returns the input gradient.
template <typename T>
Tensor<T> residual_block_backward(const BlockParams<T>& block, const BlockCache<T>& cache,
                                  const Tensor<T>& grad_output, BlockParams<T>& grads);

template <typename T>
struct ForwardCache {
    Tensor<T> input;
    Tensor<T> stem_pre;
    std::vector<BlockCache<T>> blocks;
    Tensor<T> features;  // output of the last block
    Tensor<T> pooled;
};

/// batch (n, 3, input_size, input_size) -> logits (n, classes, 1, 1).
template <typename T>
Tensor<T> model_forward(const ModelParams<T>& params, const Tensor<T>& batch, ForwardCache<T>* cache = nullptr);

template <typename T>
ModelParams<T> model_backward(const ModelParams<T>& params, const ForwardCache<T>& cache,
                              const Tensor<T>& grad_logits);

}  // namespace lpiqa::nn
