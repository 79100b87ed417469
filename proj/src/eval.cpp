#include "lpiqa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lpiqa/image_io.hpp"
#include "lpiqa/train.hpp"

namespace lpiqa {

namespace {

constexpr std::size_t kInferenceChunk = 32;

void put_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>(v >> (8 * i)));
}
void put_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>(v >> (8 * i)));
}
std::uint64_t get_le(const std::vector<unsigned char>& b, std::size_t& pos, int bytes) {
    if (b.size() - pos < static_cast<std::size_t>(bytes)) throw DataError("lookup table truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[pos++]) << (8 * i);
    return v;
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw nn::CheckpointError(nn::CheckpointError::Kind::Missing, "cannot open checkpoint " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void check_lengths(std::span<const ClassLabel> p, std::span<const ClassLabel> t) {
    if (p.size() != t.size()) throw std::invalid_argument("predictions and truths differ in length");
    if (p.empty()) throw std::invalid_argument("no predictions to score");
}

}  // namespace

std::vector<ClassScores> NetworkClassifier::logits(std::span<const ImageF32> images) const {
    const int size = params_.config.input_size;
    std::vector<ClassScores> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += kInferenceChunk) {
        const std::size_t n = std::min(kInferenceChunk, images.size() - start);
        nn::Tensor<float> batch(static_cast<int>(n), 3, size, size);
        for (std::size_t i = 0; i < n; ++i) {
            image_to_planar(resize_area(images[start + i], size, size), batch.sample(static_cast<int>(i)));
        }
        const nn::Tensor<float> z = nn::model_forward(params_, batch);
        for (std::size_t i = 0; i < n; ++i) {
            ClassScores s{};
            for (int c = 0; c < kNumClasses; ++c) s[c] = z.at(static_cast<int>(i), c, 0, 0);
            out.push_back(s);
        }
    }
    return out;
}

std::vector<ClassScores> LookupClassifier::logits(std::span<const ImageF32> images) const {
    std::vector<ClassScores> out;
    for (const auto& img : images) {
        const auto it = table_.find(content_hash(img));
        ClassScores s{};
        s[it == table_.end() ? fallback_ : it->second] = 100.0;
        out.push_back(s);
    }
    return out;
}

void LookupClassifier::save(const std::filesystem::path& path) const {
    std::vector<std::pair<std::uint64_t, int>> entries(table_.begin(), table_.end());
    std::sort(entries.begin(), entries.end());
    std::ofstream out(path, std::ios::binary);
    out.write(kMagic, sizeof kMagic);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(fallback_));
    put_u64(out, entries.size());
    for (const auto& [hash, label] : entries) {
        put_u64(out, hash);
        put_u32(out, static_cast<std::uint32_t>(label));
    }
    if (!out) throw DataError("failed writing lookup table " + path.string());
}

LookupClassifier LookupClassifier::load(const std::filesystem::path& path) {
    const auto b = read_all(path);
    if (b.size() < 8 || std::memcmp(b.data(), kMagic, 8) != 0) throw DataError("not a lookup table: " + path.string());
    std::size_t pos = 8;
    if (get_le(b, pos, 4) != 1) throw DataError("unsupported lookup table version");
    LookupClassifier lut(static_cast<int>(get_le(b, pos, 4)));
    const std::uint64_t n = get_le(b, pos, 8);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint64_t hash = get_le(b, pos, 8);
        lut.table_[hash] = ClassLabel(static_cast<int>(get_le(b, pos, 4))).id();
    }
    return lut;
}

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), LookupClassifier::kMagic, 8) == 0) {
        return std::make_unique<LookupClassifier>(LookupClassifier::load(path));
    }
    return std::make_unique<NetworkClassifier>(nn::parse_checkpoint(bytes).params);
}

Prediction prediction_from_logits(const ClassScores& logits) {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
        if (logits[c] > logits[best]) best = c;
    }
    ClassScores p{};
    double denom = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
        p[c] = std::exp(logits[c] - logits[best]);
        denom += p[c];
    }
    for (double& v : p) v /= denom;
    return {ClassLabel(best), p};
}

Prediction predict(const Classifier& model, const ImageF32& img) {
    return prediction_from_logits(model.logits(std::span<const ImageF32>(&img, 1)).front());
}

Prediction predict(const nn::ModelParams<float>& params, const ImageF32& img) {
    return predict(NetworkClassifier(params), img);
}

double accuracy(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truths) {
    check_lengths(predictions, truths);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) hits += predictions[i] == truths[i];
    return static_cast<double>(hits) / static_cast<double>(truths.size());
}

double type_accuracy(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truths) {
    check_lengths(predictions, truths);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        hits += decode_class(predictions[i]).first == decode_class(truths[i]).first;
    }
    return static_cast<double>(hits) / static_cast<double>(truths.size());
}

ConfusionMatrix confusion_matrix(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truths) {
    if (predictions.size() != truths.size()) throw std::invalid_argument("predictions and truths differ in length");
    ConfusionMatrix m{};
    for (std::size_t i = 0; i < truths.size(); ++i) ++m[truths[i].id()][predictions[i].id()];
    return m;
}

RankPair::RankPair(int predicted_level, int true_level) : predicted(predicted_level), truth(true_level) {
    if (predicted < 1 || predicted > kNumSeverityLevels || truth < 1 || truth > kNumSeverityLevels) {
        throw std::invalid_argument("rank pair levels must be in 1..4");
    }
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        // Positions i..j-1 hold ranks i+1..j.
        const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mean_rank;
        i = j;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: inputs differ in length");
    if (a.size() < 2) return std::nullopt;
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(ra.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - ma;
        const double db = rb[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> srocc(std::span<const RankPair> pairs) {
    std::vector<double> predicted, truth;
    predicted.reserve(pairs.size());
    truth.reserve(pairs.size());
    for (const auto& p : pairs) {
        predicted.push_back(p.predicted);
        truth.push_back(p.truth);
    }
    return spearman(predicted, truth);
}

EvalReport make_report(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truths) {
    check_lengths(predictions, truths);
    EvalReport r;
    r.sample_count = truths.size();
    r.accuracy = accuracy(predictions, truths);
    r.type_accuracy = type_accuracy(predictions, truths);
    r.confusion = confusion_matrix(predictions, truths);
    for (int t = 0; t < kNumClasses; ++t) {
        r.per_class_count[t] = std::accumulate(r.confusion[t].begin(), r.confusion[t].end(), 0L);
        r.per_class_accuracy[t] = r.per_class_count[t] ? static_cast<double>(r.confusion[t][t]) / r.per_class_count[t] : 0.0;
    }
    std::vector<RankPair> all;
    std::array<std::vector<RankPair>, kNumDistortionTypes> by_type;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto [true_type, true_level] = decode_class(truths[i]);
        const RankPair pair(decode_class(predictions[i]).second.rank(), true_level.rank());
        all.push_back(pair);
        by_type[type_index(true_type)].push_back(pair);
    }
    r.srocc_overall = srocc(all);
    for (int t = 0; t < kNumDistortionTypes; ++t) r.srocc_per_type[t] = srocc(by_type[t]);
    return r;
}

EvalReport evaluate(const Classifier& model, const Manifest& manifest, const std::filesystem::path& image_root) {
    const auto records = manifest.records_in(Split::Test);
    if (records.empty()) throw DataError("manifest has no test records");
    std::vector<ClassLabel> predictions, truths;
    for (std::size_t start = 0; start < records.size(); start += kInferenceChunk) {
        const std::size_t n = std::min(kInferenceChunk, records.size() - start);
        std::vector<ImageF32> images;
        for (std::size_t i = 0; i < n; ++i) images.push_back(load_image(image_root / records[start + i]->output_path));
        const auto z = model.logits(images);
        for (std::size_t i = 0; i < n; ++i) {
            predictions.push_back(prediction_from_logits(z[i]).label);
            truths.push_back(records[start + i]->class_id);
        }
    }
    return make_report(predictions, truths);
}

namespace {

std::string fmt_srocc(const std::optional<double>& v) {
    if (!v) return "undefined (degenerate)";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << *v;
    return os.str();
}

}  // namespace

std::string report_text(const EvalReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "samples            " << r.sample_count << '\n';
    os << "accuracy (20-way)  " << r.accuracy << '\n';
    os << "type accuracy (5)  " << r.type_accuracy << '\n';
    os << "SROCC pooled       " << fmt_srocc(r.srocc_overall) << '\n';
    for (DistortionType t : kAllDistortionTypes) {
        os << "SROCC " << std::left << std::setw(13) << short_name(t) << std::right
           << fmt_srocc(r.srocc_per_type[type_index(t)]) << '\n';
    }
    os << "\nclass  count  accuracy\n";
    for (int c = 0; c < kNumClasses; ++c) {
        os << std::left << std::setw(7) << class_name(ClassLabel(c)) << std::right << std::setw(5)
           << r.per_class_count[c] << "  " << r.per_class_accuracy[c] << '\n';
    }
    return os.str();
}

std::string report_json(const EvalReport& r) {
    using Json = nlohmann::ordered_json;
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    Json per_type = Json::object();
    for (DistortionType t : kAllDistortionTypes) per_type[std::string(short_name(t))] = opt(r.srocc_per_type[type_index(t)]);
    Json classes = Json::array();
    for (int c = 0; c < kNumClasses; ++c) {
        classes.push_back({{"class_id", c},
                           {"name", class_name(ClassLabel(c))},
                           {"count", r.per_class_count[c]},
                           {"accuracy", r.per_class_accuracy[c]}});
    }
    Json confusion = Json::array();
    for (const auto& row : r.confusion) confusion.push_back(Json(std::vector<long>(row.begin(), row.end())));
    const Json j{{"sample_count", r.sample_count},
                 {"accuracy", r.accuracy},
                 {"type_accuracy", r.type_accuracy},
                 {"srocc_overall", opt(r.srocc_overall)},
                 {"srocc_degenerate", r.srocc_degenerate()},
                 {"srocc_per_type", per_type},
                 {"per_class", classes},
                 {"confusion", confusion}};
    return j.dump(2) + "\n";
}

std::string confusion_csv(const ConfusionMatrix& m) {
    std::ostringstream os;
    os << "truth\\predicted";
    for (int c = 0; c < kNumClasses; ++c) os << ',' << class_name(ClassLabel(c));
    os << '\n';
    for (int t = 0; t < kNumClasses; ++t) {
        os << class_name(ClassLabel(t));
        for (int p = 0; p < kNumClasses; ++p) os << ',' << m[t][p];
        os << '\n';
    }
    return os.str();
}

double psnr(const ImageF32& a, const ImageF32& b) {
    if (a.width() != b.width() || a.height() != b.height()) throw std::invalid_argument("psnr: dimension mismatch");
    const auto x = a.data();
    const auto y = b.data();
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - y[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(x.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace lpiqa
