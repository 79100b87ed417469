#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lpiqa/labels.hpp"
#include "lpiqa/nn/checkpoint.hpp"

namespace lpiqa {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 10;
    int epochs = 30;
    std::uint64_t seed = 0;
    nn::ModelConfig model;
    int checkpoint_every = 0;  // 0: final checkpoint only

    void validate() const;
};

struct TrainLogEntry {
    int epoch;
    double loss;
    double train_accuracy;
    double seconds;
};

/// Images of one split, resampled to the model input size and kept in memory.
class LabeledImages {
public:
    LabeledImages(int input_size, std::vector<float> pixels, std::vector<int> labels);

    /// Loads `split` records from `image_root`. Missing files are regenerated
    /// from the manifest when its reference source allows it.
    static LabeledImages from_manifest(const Manifest& m, const std::filesystem::path& image_root, int input_size,
                                       Split split = Split::Train);

    std::size_t size() const { return labels_.size(); }
    int input_size() const { return input_size_; }
    int label(std::size_t i) const { return labels_[i]; }
    /// Tensor (indices.size(), 3, input, input) with labels in the same order.
    nn::Tensor<float> images(std::span<const std::size_t> indices) const;
    std::vector<int> labels(std::span<const std::size_t> indices) const;

private:
    int input_size_;
    std::vector<float> pixels_;
    std::vector<int> labels_;
};

/// Planar copy of an image already at the model input size.
void image_to_planar(const ImageF32& img, float* dst);

/// Epoch-wise permutation of [0, count) cut into batches of `batch_size`
/// (last batch may be short). Depends only on (seed, epoch).
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, int batch_size, std::uint64_t seed, int epoch);

struct Batch {
    nn::Tensor<float> images;
    std::vector<int> labels;
};
std::vector<Batch> batch_iter(const LabeledImages& data, int batch_size, std::uint64_t seed, int epoch);

struct TrainOutputs {
    std::filesystem::path directory;  // empty: nothing written
    std::string prefix = "model";
    std::function<void(const TrainLogEntry&)> on_epoch;
};

struct TrainResult {
    nn::Checkpoint final_state;
    std::vector<TrainLogEntry> log;
    std::vector<std::filesystem::path> checkpoints;
};

TrainResult train(const TrainConfig& config, const LabeledImages& data, const TrainOutputs& outputs = {});
TrainResult train(const TrainConfig& config, const Manifest& manifest, const std::filesystem::path& image_root,
                  const TrainOutputs& outputs = {});

/// Continues from `checkpoint` up to config.epochs. Without stored optimizer
/// state the call is refused unless `fresh_optimizer` is set.
TrainResult resume(const nn::Checkpoint& checkpoint, const TrainConfig& config, const LabeledImages& data,
                   const TrainOutputs& outputs = {}, bool fresh_optimizer = false);
TrainResult resume(const std::filesystem::path& checkpoint, const TrainConfig& config, const LabeledImages& data,
                   const TrainOutputs& outputs = {}, bool fresh_optimizer = false);

/// CSV with header epoch,loss,train_acc,seconds.
void write_train_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path, bool append = false);

}  // namespace lpiqa
