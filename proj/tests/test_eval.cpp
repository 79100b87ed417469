#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "json.hpp"
#include "lpiqa/eval.hpp"
#include "lpiqa/image_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lpiqa;

namespace {

std::vector<ClassLabel> labels(std::initializer_list<int> ids) {
    std::vector<ClassLabel> out;
    for (int i : ids) out.emplace_back(i);
    return out;
}

std::vector<RankPair> pairs(const std::vector<int>& pred, const std::vector<int>& truth) {
    std::vector<RankPair> out;
    for (std::size_t i = 0; i < pred.size(); ++i) out.emplace_back(pred[i], truth[i]);
    return out;
}

/// Writes `per_class` phantom-based images per class, all in the test split.
Manifest write_test_corpus(const std::filesystem::path& root, int per_class) {
    Manifest m = build_manifest(phantom_reference_ids(per_class), per_class, SeverityTable{}, 4);
    m.source = {ReferenceSource::Kind::Phantom, 32, 24, {}};
    for (auto& r : m.records) {
        r.split = Split::Test;
        std::filesystem::create_directories((root / r.output_path).parent_path());
        save_image(apply(r.spec, load_reference(m, r)), root / r.output_path);
    }
    return m;
}

LookupClassifier oracle_for(const Manifest& m, const std::filesystem::path& root) {
    LookupClassifier lut;
    for (const auto& r : m.records) lut.add(load_image(root / r.output_path), r.class_id);
    return lut;
}

}  // namespace

TEST(Srocc, IdenticalAndReversed) {
    EXPECT_NEAR(*srocc(pairs({1, 2, 3, 4}, {1, 2, 3, 4})), 1.0, 1e-15);
    EXPECT_NEAR(*srocc(pairs({4, 3, 2, 1}, {1, 2, 3, 4})), -1.0, 1e-15);
}

TEST(Srocc, AdjacentSwapIsPointEight) {
    const double closed_form = 1.0 - 6.0 * 2.0 / (4.0 * 15.0);
    EXPECT_NEAR(closed_form, 0.8, 1e-15);
    EXPECT_NEAR(*srocc(pairs({2, 1, 3, 4}, {1, 2, 3, 4})), 0.8, 1e-12);
    EXPECT_NEAR(*test::brute_force_srocc({2, 1, 3, 4}, {1, 2, 3, 4}), 0.8, 1e-12);
}

TEST(Srocc, MatchesBruteForceOracleOnTiedInstances) {
    const auto r = test::srocc_oracle_sweep(1000, 2024);
    EXPECT_EQ(r.instances, 1000);
    EXPECT_EQ(r.degenerate_mismatches, 0);
    EXPECT_LE(r.worst_difference, 1e-12);
}

TEST(Srocc, AverageRanksWithTies) {
    const std::vector<double> v{3, 1, 3, 2, 3};
    EXPECT_EQ(average_ranks(v), (std::vector<double>{4, 1, 4, 2, 4}));
    EXPECT_EQ(average_ranks(v), test::brute_force_ranks(v));
}

TEST(Srocc, DegenerateInputsFlagged) {
    EXPECT_FALSE(srocc(pairs({2, 2, 2}, {1, 2, 3})).has_value());
    EXPECT_FALSE(srocc(pairs({1, 2, 3}, {4, 4, 4})).has_value());
    EXPECT_FALSE(srocc(pairs({1}, {1})).has_value());
    EXPECT_THROW(RankPair(0, 1), std::invalid_argument);
    EXPECT_THROW(RankPair(1, 5), std::invalid_argument);
}

TEST(Srocc, RangeSelfAndMonotoneRelabeling) {
    SeededRng rng(5, 0);
    for (int k = 0; k < 200; ++k) {
        std::vector<double> a, b, b2;
        for (int i = 0; i < 30; ++i) {
            a.push_back(static_cast<double>(rng.uniform_index(4)));
            b.push_back(static_cast<double>(rng.uniform_index(4)));
            b2.push_back(std::exp(b.back()) + 10.0);
        }
        const auto s = spearman(a, b);
        if (!s) continue;
        EXPECT_GE(*s, -1.0);
        EXPECT_LE(*s, 1.0);
        EXPECT_NEAR(*spearman(a, a), 1.0, 1e-12);
        EXPECT_NEAR(*spearman(a, b2), *s, 1e-12);
    }
}

TEST(Accuracy, Counting) {
    EXPECT_DOUBLE_EQ(accuracy(labels({1, 2, 3}), labels({1, 2, 3})), 1.0);
    EXPECT_DOUBLE_EQ(accuracy(labels({0, 0}), labels({1, 2})), 0.0);
    EXPECT_DOUBLE_EQ(accuracy(labels({0, 5, 9, 19}), labels({0, 5, 9, 18})), 0.75);
    EXPECT_THROW(accuracy(labels({1}), labels({1, 2})), std::invalid_argument);
    EXPECT_THROW(accuracy(labels({}), labels({})), std::invalid_argument);
}

TEST(Confusion, EntriesAndTraceIdentity) {
    const auto perfect = confusion_matrix(labels({0, 1, 1, 19}), labels({0, 1, 1, 19}));
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) EXPECT_EQ(perfect[i][j], i == j ? (i == 1 ? 2 : (i == 0 || i == 19)) : 0);
    const auto single = confusion_matrix(labels({5}), labels({2}));
    long total = 0;
    for (const auto& row : single) total += std::accumulate(row.begin(), row.end(), 0L);
    EXPECT_EQ(single[2][5], 1);
    EXPECT_EQ(total, 1);
    EXPECT_EQ(test::accuracy_trace_sweep(100, 7), 0.0);
}

TEST(TypeAccuracy, LevelAgnostic) {
    const ClassLabel db2 = encode_class(DistortionType::DefocusBlur, SeverityLevel(2));
    const ClassLabel db4 = encode_class(DistortionType::DefocusBlur, SeverityLevel(4));
    const ClassLabel sm1 = encode_class(DistortionType::Smoke, SeverityLevel(1));
    const ClassLabel wn1 = encode_class(DistortionType::WhiteNoise, SeverityLevel(1));
    EXPECT_DOUBLE_EQ(type_accuracy(std::vector{db2}, std::vector{db4}), 1.0);
    EXPECT_DOUBLE_EQ(type_accuracy(std::vector{sm1}, std::vector{wn1}), 0.0);
    SeededRng rng(2, 0);
    for (int k = 0; k < 100; ++k) {
        std::vector<ClassLabel> p, t;
        for (int i = 0; i < 25; ++i) {
            p.emplace_back(static_cast<int>(rng.uniform_index(20)));
            t.emplace_back(static_cast<int>(rng.uniform_index(20)));
        }
        EXPECT_GE(type_accuracy(p, t), accuracy(p, t));
    }
}

TEST(Predict, ArgmaxTieRuleAndProbabilities) {
    ClassScores z{};
    z[7] = 2.0;
    const Prediction p = prediction_from_logits(z);
    EXPECT_EQ(p.label.id(), 7);
    EXPECT_EQ(decode_class(p.label), std::make_pair(DistortionType::MotionBlur, SeverityLevel(4)));
    EXPECT_NEAR(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0), 1.0, 1e-6);
    EXPECT_GT(p.confidence(), 0.0);
    EXPECT_LE(p.confidence(), 1.0);

    ClassScores tie{};
    tie[3] = tie[12] = 5.0;
    EXPECT_EQ(prediction_from_logits(tie).label.id(), 3);

    ClassScores huge{};
    huge[2] = 1e300;
    const Prediction h = prediction_from_logits(huge);
    EXPECT_EQ(h.label.id(), 2);
    EXPECT_NEAR(h.confidence(), 1.0, 1e-12);
}

TEST(Psnr, FormulaCapAndSymmetry) {
    const ImageF32 a = phantom_image(30, 20, 1);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    EXPECT_EQ(kPsnrCap, 99.0);
    const ImageF32 x(10, 10, 0.3f), y(10, 10, 0.4f);
    EXPECT_NEAR(psnr(x, y), 20.0, 1e-5);
    const ImageF32 b = phantom_image(30, 20, 2);
    EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
    EXPECT_THROW(psnr(a, ImageF32(20, 30)), std::invalid_argument);
}

TEST(Evaluate, OracleModelIsPerfect) {
    const auto dir = test::scratch_dir();
    const Manifest m = write_test_corpus(dir, 3);
    const EvalReport r = evaluate(oracle_for(m, dir), m, dir);
    EXPECT_EQ(r.sample_count, 60u);
    EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(r.type_accuracy, 1.0);
    ASSERT_TRUE(r.srocc_overall.has_value());
    EXPECT_NEAR(*r.srocc_overall, 1.0, 1e-12);
    for (const auto& s : r.srocc_per_type) EXPECT_NEAR(s.value(), 1.0, 1e-12);
    EXPECT_FALSE(r.srocc_degenerate());
}

TEST(Evaluate, ConstantModelAtChanceAndFlagged) {
    const auto dir = test::scratch_dir();
    const Manifest m = write_test_corpus(dir, 2);
    const EvalReport r = evaluate(LookupClassifier(0), m, dir);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.05);
    EXPECT_DOUBLE_EQ(r.type_accuracy, 0.2);
    EXPECT_TRUE(r.srocc_degenerate());
    // Row sums are the per-class test counts.
    for (int t = 0; t < 20; ++t) {
        EXPECT_EQ(std::accumulate(r.confusion[t].begin(), r.confusion[t].end(), 0L), 2);
        EXPECT_EQ(r.per_class_count[t], 2);
        EXPECT_EQ(r.confusion[t][0], 2);
    }
}

TEST(Evaluate, MissingImagesAndEmptySplit) {
    const auto dir = test::scratch_dir();
    Manifest m = write_test_corpus(dir, 1);
    EXPECT_THROW(evaluate(LookupClassifier(0), m, dir / "elsewhere"), DataError);
    for (auto& r : m.records) r.split = Split::Train;
    EXPECT_THROW(evaluate(LookupClassifier(0), m, dir), DataError);
}

TEST(Evaluate, NetworkClassifierRunsAtAnyImageSize) {
    nn::ModelConfig c;
    c.stem_channels = 4;
    c.stages = {{1, 4}};
    c.input_size = 16;
    SeededRng rng(1, streams::kInit);
    const NetworkClassifier net(nn::init_params<float>(c, rng));
    const std::vector<ImageF32> imgs{phantom_image(40, 30, 1), phantom_image(16, 16, 2)};
    const auto z = net.logits(imgs);
    ASSERT_EQ(z.size(), 2u);
    for (const auto& row : z)
        for (double v : row) EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(predict(net.params(), imgs[0]).label, predict(net, imgs[0]).label);
}

TEST(Reports, TextJsonAndCsvAgree) {
    const auto p = labels({0, 1, 5, 7, 7, 19, 12});
    const auto t = labels({0, 2, 5, 7, 6, 19, 13});
    const EvalReport r = make_report(p, t);
    const auto j = nlohmann::json::parse(report_json(r));
    EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), r.accuracy);
    EXPECT_EQ(j["sample_count"].get<std::size_t>(), 7u);
    EXPECT_EQ(j["srocc_degenerate"].get<bool>(), false);
    EXPECT_EQ(j["confusion"][6][7].get<long>(), 1);

    // Recompute accuracy from the CSV.
    std::istringstream csv(confusion_csv(r.confusion));
    std::string line;
    std::getline(csv, line);
    long trace = 0, total = 0;
    for (int row = 0; std::getline(csv, line); ++row) {
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');
        EXPECT_EQ(cell, class_name(ClassLabel(row)));
        for (int col = 0; std::getline(cells, cell, ','); ++col) {
            total += std::stol(cell);
            if (col == row) trace += std::stol(cell);
        }
    }
    EXPECT_EQ(total, 7);
    EXPECT_DOUBLE_EQ(static_cast<double>(trace) / total, r.accuracy);
    EXPECT_NE(report_text(r).find("accuracy"), std::string::npos);
}

TEST(LookupTable, SaveLoadRoundTrip) {
    const auto dir = test::scratch_dir();
    LookupClassifier lut(4);
    lut.add(phantom_image(8, 8, 1), ClassLabel(11));
    lut.add(phantom_image(8, 8, 2), ClassLabel(2));
    lut.save(dir / "o.lut");
    const auto loaded = load_classifier(dir / "o.lut");
    EXPECT_EQ(predict(*loaded, phantom_image(8, 8, 1)).label.id(), 11);
    EXPECT_EQ(predict(*loaded, phantom_image(8, 8, 2)).label.id(), 2);
    EXPECT_EQ(predict(*loaded, phantom_image(8, 8, 3)).label.id(), 4);
    test::write_bytes(dir / "junk.bin", "nonsense");
    EXPECT_THROW(load_classifier(dir / "junk.bin"), DataError);
}
