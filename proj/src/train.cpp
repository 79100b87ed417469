#include "lpiqa/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "lpiqa/image_io.hpp"
#include "lpiqa/parallel.hpp"

namespace lpiqa {

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
    if (checkpoint_every < 0) throw std::invalid_argument("checkpoint cadence must be >= 0");
    model.validate();
}

LabeledImages::LabeledImages(int input_size, std::vector<float> pixels, std::vector<int> labels)
    : input_size_(input_size), pixels_(std::move(pixels)), labels_(std::move(labels)) {
    if (pixels_.size() != labels_.size() * 3 * input_size * input_size) {
        throw std::invalid_argument("LabeledImages: pixel buffer does not match label count");
    }
}

void image_to_planar(const ImageF32& img, float* dst) {
    const auto src = img.data();
    std::copy(src.begin(), src.end(), dst);
}

LabeledImages LabeledImages::from_manifest(const Manifest& m, const std::filesystem::path& image_root, int input_size,
                                           Split split) {
    const auto records = m.records_in(split);
    const std::size_t per = static_cast<std::size_t>(3) * input_size * input_size;
    std::vector<float> pixels(records.size() * per);
    std::vector<int> labels(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        const ManifestRecord& r = *records[i];
        const auto path = image_root / r.output_path;
        ImageF32 img;
        if (std::filesystem::exists(path) || m.source.kind == ReferenceSource::Kind::None) {
            img = load_image(path);
        } else {
            img = apply(r.spec, load_reference(m, r));
        }
        image_to_planar(resize_area(img, input_size, input_size), pixels.data() + i * per);
        labels[i] = r.class_id.id();
    });
    return LabeledImages(input_size, std::move(pixels), std::move(labels));
}

nn::Tensor<float> LabeledImages::images(std::span<const std::size_t> indices) const {
    nn::Tensor<float> t(static_cast<int>(indices.size()), 3, input_size_, input_size_);
    const std::size_t per = t.sample_size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= labels_.size()) throw std::out_of_range("LabeledImages: index out of range");
        std::copy_n(pixels_.data() + indices[i] * per, per, t.sample(static_cast<int>(i)));
    }
    return t;
}

std::vector<int> LabeledImages::labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels_.at(i));
    return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, int batch_size, std::uint64_t seed, int epoch) {
    if (count == 0) throw DataError("training split is empty");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng rng = make_rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)), streams::kShuffle);
    for (std::size_t i = count - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < count; start += batch_size) {
        const std::size_t end = std::min(count, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

std::vector<Batch> batch_iter(const LabeledImages& data, int batch_size, std::uint64_t seed, int epoch) {
    std::vector<Batch> out;
    for (const auto& idx : batch_indices(data.size(), batch_size, seed, epoch)) {
        out.push_back({data.images(idx), data.labels(idx)});
    }
    return out;
}

void write_train_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path, bool append) {
    const bool header = !append || !std::filesystem::exists(path);
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw DataError("cannot write training log " + path.string());
    if (header) out << "epoch,loss,train_acc,seconds\n";
    out << std::setprecision(9);
    for (const auto& e : log) out << e.epoch << ',' << e.loss << ',' << e.train_accuracy << ',' << e.seconds << '\n';
}

namespace {

TrainResult run_epochs(nn::ModelParams<float> params, nn::AdamState<float> adam, int start_epoch,
                       const TrainConfig& config, const LabeledImages& data, const TrainOutputs& outputs,
                       bool append_log) {
    if (data.input_size() != config.model.input_size) {
        throw DataError("training images are " + std::to_string(data.input_size()) + "px, model expects " +
                        std::to_string(config.model.input_size) + "px");
    }
    if (data.size() == 0) throw DataError("training split is empty");
    TrainResult result;
    if (!outputs.directory.empty()) std::filesystem::create_directories(outputs.directory);
    for (int epoch = start_epoch + 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0.0;
        std::size_t correct = 0;
        const auto batches = batch_indices(data.size(), config.batch_size, config.seed, epoch);
        for (const auto& idx : batches) {
            const nn::Tensor<float> x = data.images(idx);
            const std::vector<int> y = data.labels(idx);
            nn::ForwardCache<float> cache;
            const nn::Tensor<float> logits = nn::model_forward(params, x, &cache);
            const nn::LossOutput<float> loss = nn::softmax_cross_entropy(logits, y);
            if (!std::isfinite(loss.loss)) throw std::runtime_error("training diverged: non-finite loss");
            for (std::size_t i = 0; i < y.size(); ++i) {
                const float* row = logits.sample(static_cast<int>(i));
                const auto best = std::max_element(row, row + logits.c()) - row;
                correct += best == y[i];
            }
            loss_sum += loss.loss;
            const nn::ModelParams<float> grads = nn::model_backward(params, cache, loss.grad_logits);
            nn::adam_step(params, grads, adam);
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const TrainLogEntry entry{epoch, loss_sum / static_cast<double>(batches.size()),
                                  static_cast<double>(correct) / static_cast<double>(data.size()), seconds};
        result.log.push_back(entry);
        if (outputs.on_epoch) outputs.on_epoch(entry);
        const bool cadence = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
        if (!outputs.directory.empty() && (cadence || epoch == config.epochs)) {
            const auto path = outputs.directory / nn::checkpoint_filename(outputs.prefix, epoch);
            nn::save_checkpoint({params, epoch, adam}, path);
            result.checkpoints.push_back(path);
        }
    }
    if (!outputs.directory.empty()) write_train_log(result.log, outputs.directory / "train_log.csv", append_log);
    result.final_state = {std::move(params), std::max(start_epoch, config.epochs), std::move(adam)};
    return result;
}

nn::AdamHyper hyper_for(const TrainConfig& config) {
    nn::AdamHyper h;
    h.learning_rate = config.learning_rate;
    return h;
}

}  // namespace

TrainResult train(const TrainConfig& config, const LabeledImages& data, const TrainOutputs& outputs) {
    config.validate();
    SeededRng rng = make_rng(config.seed, streams::kInit);
    auto params = nn::init_params<float>(config.model, rng);
    auto adam = nn::AdamState<float>::zeros_for(std::as_const(params).tensors(), hyper_for(config));
    return run_epochs(std::move(params), std::move(adam), 0, config, data, outputs, false);
}

TrainResult train(const TrainConfig& config, const Manifest& manifest, const std::filesystem::path& image_root,
                  const TrainOutputs& outputs) {
    config.validate();
    const auto data = LabeledImages::from_manifest(manifest, image_root, config.model.input_size, Split::Train);
    return train(config, data, outputs);
}

TrainResult resume(const nn::Checkpoint& checkpoint, const TrainConfig& config, const LabeledImages& data,
                   const TrainOutputs& outputs, bool fresh_optimizer) {
    config.validate();
    if (checkpoint.params.fingerprint() != config.model.fingerprint()) {
        throw nn::CheckpointError(nn::CheckpointError::Kind::FingerprintMismatch,
                                  "checkpoint architecture '" + checkpoint.params.fingerprint() +
                                      "' does not match '" + config.model.fingerprint() + "'");
    }
    nn::AdamState<float> adam;
    if (checkpoint.adam) {
        adam = *checkpoint.adam;
        adam.hyper.learning_rate = config.learning_rate;
    } else if (fresh_optimizer) {
        adam = nn::AdamState<float>::zeros_for(checkpoint.params.tensors(), hyper_for(config));
    } else {
        throw DataError("checkpoint has no optimizer state; resume with a fresh optimizer explicitly");
    }
    return run_epochs(checkpoint.params, std::move(adam), checkpoint.epoch, config, data, outputs, true);
}

TrainResult resume(const std::filesystem::path& checkpoint, const TrainConfig& config, const LabeledImages& data,
                   const TrainOutputs& outputs, bool fresh_optimizer) {
    return resume(nn::load_checkpoint(checkpoint, &config.model), config, data, outputs, fresh_optimizer);
}

}  // namespace lpiqa
