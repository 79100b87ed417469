#include "lpiqa/nn/model.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace lpiqa::nn {

namespace {

int parse_int(std::string_view s, const char* what) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument(std::string("invalid ") + what + " '" + std::string(s) + "'");
    }
    return v;
}

template <typename T>
ConvParams<T> make_conv(int cin, int cout, int k, ConvGeometry g) {
    return {Tensor<T>(cout, cin, k, k), Tensor<T>(cout, 1, 1, 1), g};
}

}  // namespace

void ModelConfig::validate() const {
    if (num_classes != 20) throw std::invalid_argument("model: class count must be 20");
    if (stages.empty()) throw std::invalid_argument("model: at least one stage required");
    if (stem_channels < 1) throw std::invalid_argument("model: stem channels must be >= 1");
    for (const auto& s : stages) {
        if (s.blocks < 1 || s.channels < 1) throw std::invalid_argument("model: stage blocks and channels must be >= 1");
    }
    int size = input_size;
    for (std::size_t i = 1; i < stages.size(); ++i) size = (size - 1) / 2 + 1;
    if (input_size < 1 || size < 1) throw std::invalid_argument("model: input too small for the stage count");
}

std::string ModelConfig::fingerprint() const {
    std::ostringstream os;
    os << "resnet;stem=" << stem_channels << ";stages=";
    for (std::size_t i = 0; i < stages.size(); ++i) os << (i ? "," : "") << stages[i].blocks << 'x' << stages[i].channels;
    os << ";input=" << input_size << ";classes=" << num_classes;
    return os.str();
}

std::vector<StageConfig> ModelConfig::parse_stages(std::string_view text) {
    std::vector<StageConfig> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const std::string_view item = text.substr(0, comma);
        const auto x = item.find('x');
        if (x == std::string_view::npos) throw std::invalid_argument("stage must look like <blocks>x<channels>");
        out.push_back({parse_int(item.substr(0, x), "stage block count"), parse_int(item.substr(x + 1), "stage width")});
        text = comma == std::string_view::npos ? std::string_view() : text.substr(comma + 1);
    }
    return out;
}

ModelConfig ModelConfig::from_fingerprint(std::string_view fp) {
    ModelConfig c;
    std::size_t pos = 0;
    bool tag = false;
    bool have[4] = {};
    while (pos <= fp.size()) {
        const auto end = std::min(fp.find(';', pos), fp.size());
        const std::string_view field = fp.substr(pos, end - pos);
        pos = end + 1;
        if (field == "resnet") {
            tag = true;
            continue;
        }
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) throw std::invalid_argument("malformed fingerprint '" + std::string(fp) + "'");
        const std::string_view key = field.substr(0, eq);
        const std::string_view value = field.substr(eq + 1);
        if (key == "stem") {
            c.stem_channels = parse_int(value, "stem");
            have[0] = true;
        } else if (key == "stages") {
            c.stages = parse_stages(value);
            have[1] = true;
        } else if (key == "input") {
            c.input_size = parse_int(value, "input");
            have[2] = true;
        } else if (key == "classes") {
            c.num_classes = parse_int(value, "classes");
            have[3] = true;
        } else {
            throw std::invalid_argument("unknown fingerprint field '" + std::string(key) + "'");
        }
    }
    if (!tag || !have[0] || !have[1] || !have[2] || !have[3]) {
        throw std::invalid_argument("incomplete fingerprint '" + std::string(fp) + "'");
    }
    c.validate();
    return c;
}

template <typename T>
std::vector<Tensor<T>*> ModelParams<T>::tensors() {
    std::vector<Tensor<T>*> out{&stem.weight, &stem.bias};
    for (auto& b : blocks) {
        out.insert(out.end(), {&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias});
        if (b.projection) out.insert(out.end(), {&b.projection->weight, &b.projection->bias});
    }
    out.insert(out.end(), {&fc_weight, &fc_bias});
    return out;
}

template <typename T>
std::vector<const Tensor<T>*> ModelParams<T>::tensors() const {
    auto mutable_list = const_cast<ModelParams<T>*>(this)->tensors();
    return {mutable_list.begin(), mutable_list.end()};
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
}

template <typename T>
ModelParams<T> make_params(const ModelConfig& config) {
    config.validate();
    ModelParams<T> p;
    p.config = config;
    p.stem = make_conv<T>(3, config.stem_channels, 3, {1, 1});
    int channels = config.stem_channels;
    for (std::size_t s = 0; s < config.stages.size(); ++s) {
        for (int b = 0; b < config.stages[s].blocks; ++b) {
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            const int width = config.stages[s].channels;
            BlockParams<T> block{make_conv<T>(channels, width, 3, {stride, 1}), make_conv<T>(width, width, 3, {1, 1}),
                                 std::nullopt};
            if (stride != 1 || width != channels) block.projection = make_conv<T>(channels, width, 1, {stride, 0});
            p.blocks.push_back(std::move(block));
            channels = width;
        }
    }
    p.fc_weight = Tensor<T>(config.num_classes, channels, 1, 1);
    p.fc_bias = Tensor<T>(config.num_classes, 1, 1, 1);
    return p;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, SeededRng& rng) {
    ModelParams<T> p = make_params<T>(config);
    auto fill = [&rng](Tensor<T>& w, double variance) {
        const double sd = std::sqrt(variance);
        for (auto& v : w.values()) v = static_cast<T>(sd * rng.normal());
    };
    auto fill_conv = [&](ConvParams<T>& c) { fill(c.weight, 2.0 / static_cast<double>(c.weight.sample_size())); };
    fill_conv(p.stem);
    for (auto& b : p.blocks) {
        fill_conv(b.conv1);
        fill_conv(b.conv2);
        if (b.projection) fill_conv(*b.projection);
    }
    fill(p.fc_weight, 1.0 / static_cast<double>(p.fc_weight.sample_size()));
    return p;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
    ModelParams<To> out = make_params<To>(p.config);
    const auto src = p.tensors();
    auto dst = out.tensors();
    for (std::size_t i = 0; i < src.size(); ++i) {
        for (std::size_t j = 0; j < src[i]->size(); ++j) (*dst[i])[j] = static_cast<To>((*src[i])[j]);
    }
    return out;
}

namespace {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("residual add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

template <typename T>
Tensor<T> conv(const ConvParams<T>& c, const Tensor<T>& x) {
    return conv2d_forward(x, c.weight, c.bias, c.geometry);
}

template <typename T>
void store(ConvParams<T>& dst, ConvGrads<T>& g) {
    dst.weight = std::move(g.weight);
    dst.bias = std::move(g.bias);
}

}  // namespace

template <typename T>
Tensor<T> residual_block_forward(const BlockParams<T>& block, const Tensor<T>& input, BlockCache<T>* cache) {
    Tensor<T> pre1 = conv(block.conv1, input);
    Tensor<T> act1 = relu_forward(pre1);
    Tensor<T> sum = add(conv(block.conv2, act1), block.projection ? conv(*block.projection, input) : input);
    Tensor<T> out = relu_forward(sum);
    if (cache) *cache = {input, std::move(pre1), std::move(act1), std::move(sum)};
    return out;
}

template <typename T>
Tensor<T> residual_block_backward(const BlockParams<T>& block, const BlockCache<T>& cache,
                                  const Tensor<T>& grad_output, BlockParams<T>& grads) {
    const Tensor<T> grad_sum = relu_backward(cache.sum, grad_output);
    ConvGrads<T> g2 = conv2d_backward(cache.act1, block.conv2.weight, grad_sum, block.conv2.geometry);
    const Tensor<T> grad_pre1 = relu_backward(cache.pre1, g2.input);
    ConvGrads<T> g1 = conv2d_backward(cache.input, block.conv1.weight, grad_pre1, block.conv1.geometry);
    Tensor<T> grad_input;
    if (block.projection) {
        ConvGrads<T> gp = conv2d_backward(cache.input, block.projection->weight, grad_sum, block.projection->geometry);
        grad_input = add(g1.input, gp.input);
        if (!grads.projection) grads.projection = ConvParams<T>{{}, {}, block.projection->geometry};
        store(*grads.projection, gp);
    } else {
        grad_input = add(g1.input, grad_sum);
    }
    grads.conv1.geometry = block.conv1.geometry;
    grads.conv2.geometry = block.conv2.geometry;
    store(grads.conv1, g1);
    store(grads.conv2, g2);
    return grad_input;
}

template <typename T>
Tensor<T> model_forward(const ModelParams<T>& params, const Tensor<T>& batch, ForwardCache<T>* cache) {
    const int size = params.config.input_size;
    if (batch.c() != 3 || batch.h() != size || batch.w() != size) {
        throw ShapeError("model: expected batch (n,3," + std::to_string(size) + "," + std::to_string(size) + "), got " +
                         shape_string(batch.shape()));
    }
    Tensor<T> stem_pre = conv(params.stem, batch);
    Tensor<T> x = relu_forward(stem_pre);
    if (cache) {
        cache->input = batch;
        cache->stem_pre = std::move(stem_pre);
        cache->blocks.assign(params.blocks.size(), {});
    }
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        x = residual_block_forward(params.blocks[i], x, cache ? &cache->blocks[i] : nullptr);
    }
    Tensor<T> pooled = global_avg_pool_forward(x);
    Tensor<T> logits = fully_connected_forward(pooled, params.fc_weight, params.fc_bias);
    if (cache) {
        cache->features = std::move(x);
        cache->pooled = std::move(pooled);
    }
    return logits;
}

template <typename T>
ModelParams<T> model_backward(const ModelParams<T>& params, const ForwardCache<T>& cache,
                              const Tensor<T>& grad_logits) {
    if (cache.blocks.size() != params.blocks.size()) throw ShapeError("model backward: cache does not match params");
    ModelParams<T> grads;
    grads.config = params.config;
    grads.blocks.resize(params.blocks.size());

    LinearGrads<T> head = fully_connected_backward(cache.pooled, params.fc_weight, grad_logits);
    grads.fc_weight = std::move(head.weight);
    grads.fc_bias = std::move(head.bias);
    Tensor<T> g = global_avg_pool_backward(head.input, cache.features.shape());
    for (std::size_t i = params.blocks.size(); i-- > 0;) {
        g = residual_block_backward(params.blocks[i], cache.blocks[i], g, grads.blocks[i]);
    }
    g = relu_backward(cache.stem_pre, g);
    ConvGrads<T> stem = conv2d_backward(cache.input, params.stem.weight, g, params.stem.geometry, false);
    grads.stem.geometry = params.stem.geometry;
    store(grads.stem, stem);
    return grads;
}

#define LPIQA_INSTANTIATE_MODEL(T)                                                                           \
    template struct ModelParams<T>;                                                                          \
    template ModelParams<T> make_params<T>(const ModelConfig&);                                              \
    template ModelParams<T> init_params<T>(const ModelConfig&, SeededRng&);                                  \
    template Tensor<T> residual_block_forward(const BlockParams<T>&, const Tensor<T>&, BlockCache<T>*);      \
    template Tensor<T> residual_block_backward(const BlockParams<T>&, const BlockCache<T>&, const Tensor<T>&, \
                                               BlockParams<T>&);                                             \
    template Tensor<T> model_forward(const ModelParams<T>&, const Tensor<T>&, ForwardCache<T>*);             \
    template ModelParams<T> model_backward(const ModelParams<T>&, const ForwardCache<T>&, const Tensor<T>&);

LPIQA_INSTANTIATE_MODEL(float)
LPIQA_INSTANTIATE_MODEL(double)

template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_params<double, double>(const ModelParams<double>&);

}  // namespace lpiqa::nn
