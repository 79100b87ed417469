#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lpiqa/labels.hpp"
#include "lpiqa/nn/checkpoint.hpp"

namespace lpiqa {

using ClassScores = std::array<double, kNumClasses>;

/// Anything that maps images to 20 class logits.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::vector<ClassScores> logits(std::span<const ImageF32> images) const = 0;
};

/// The residual network; images are area-resampled to the model input size.
class NetworkClassifier final : public Classifier {
public:
    explicit NetworkClassifier(nn::ModelParams<float> params) : params_(std::move(params)) {}
    std::vector<ClassScores> logits(std::span<const ImageF32> images) const override;
    const nn::ModelParams<float>& params() const { return params_; }

private:
    nn::ModelParams<float> params_;
};

/// Fixed lookup from image content hash to class. Used as a plug-in oracle
/// for pipeline tests; unknown images fall back to `fallback`.
class LookupClassifier final : public Classifier {
public:
    static constexpr char kMagic[8] = {'L', 'P', 'I', 'Q', 'A', 'L', 'U', 'T'};

    explicit LookupClassifier(int fallback = 0) : fallback_(ClassLabel(fallback).id()) {}
    void add(const ImageF32& img, ClassLabel label) { table_[content_hash(img)] = label.id(); }
    std::size_t size() const { return table_.size(); }
    std::vector<ClassScores> logits(std::span<const ImageF32> images) const override;

    void save(const std::filesystem::path& path) const;
    static LookupClassifier load(const std::filesystem::path& path);

private:
    int fallback_;
    std::unordered_map<std::uint64_t, int> table_;
};

/// Reads either a network checkpoint or a lookup table, by magic.
std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path);

struct Prediction {
    ClassLabel label;
    ClassScores probabilities;
    double confidence() const { return probabilities[label.id()]; }
};

/// Argmax (ties go to the lower class id) plus softmax probabilities.
Prediction prediction_from_logits(const ClassScores& logits);
Prediction predict(const Classifier& model, const ImageF32& img);
Prediction predict(const nn::ModelParams<float>& params, const ImageF32& img);

double accuracy(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truths);
/// Marginalized over severity: correct when the distortion type matches.
double type_accuracy(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truths);

using ConfusionMatrix = std::array<std::array<long, kNumClasses>, kNumClasses>;
/// Entry [truth][prediction].
ConfusionMatrix confusion_matrix(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truths);

struct RankPair {
    int predicted;
    int truth;
    RankPair(int predicted_level, int true_level);
};

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);
/// Spearman correlation with average ranks; nullopt when either side has zero variance or n < 2.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);
std::optional<double> srocc(std::span<const RankPair> pairs);

struct EvalReport {
    std::size_t sample_count = 0;
    double accuracy = 0.0;
    double type_accuracy = 0.0;
    std::array<double, kNumClasses> per_class_accuracy{};
    std::array<long, kNumClasses> per_class_count{};
    ConfusionMatrix confusion{};
    std::optional<double> srocc_overall;
    std::array<std::optional<double>, kNumDistortionTypes> srocc_per_type{};
    bool srocc_degenerate() const { return !srocc_overall.has_value(); }
};

EvalReport make_report(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truths);
/// Predicts every test record of `manifest` and summarizes.
EvalReport evaluate(const Classifier& model, const Manifest& manifest, const std::filesystem::path& image_root);

std::string report_text(const EvalReport& r);
std::string report_json(const EvalReport& r);
std::string confusion_csv(const ConfusionMatrix& m);

/// Value reported by psnr() for identical images.
inline constexpr double kPsnrCap = 99.0;
/// 10 log10(1 / MSE) over all components.
double psnr(const ImageF32& a, const ImageF32& b);

}  // namespace lpiqa
