#include <algorithm>
#include <cmath>
#include <numeric>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "lpiqa/image_io.hpp"
#include "lpiqa/train.hpp"
#include "test_util.hpp"

using namespace lpiqa;

namespace {

constexpr int kSize = 16;

nn::ModelConfig small_model() {
    nn::ModelConfig c;
    c.stem_channels = 4;
    c.stages = {{1, 4}, {1, 8}};
    c.input_size = kSize;
    return c;
}

TrainConfig small_config(int epochs) {
    TrainConfig c;
    c.model = small_model();
    c.epochs = epochs;
    c.batch_size = 4;
    c.seed = 17;
    return c;
}

/// 20 phantom-derived images, one per class.
LabeledImages small_data() {
    Manifest m = build_manifest(phantom_reference_ids(1), 1, SeverityTable{}, 3);
    m.source = {ReferenceSource::Kind::Phantom, 32, 32, {}};
    for (auto& r : m.records) r.split = Split::Train;
    return LabeledImages::from_manifest(m, "/nonexistent", kSize, Split::Train);
}

std::vector<unsigned char> bytes_of(const nn::Checkpoint& c) { return nn::serialize_checkpoint(c); }

int csv_rows(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string line;
    int n = 0;
    std::getline(in, line);
    EXPECT_EQ(line, "epoch,loss,train_acc,seconds");
    while (std::getline(in, line)) n += !line.empty();
    return n;
}

}  // namespace

TEST(BatchIndices, NinetyFiveByTen) {
    const auto batches = batch_indices(95, 10, 1, 0);
    ASSERT_EQ(batches.size(), 10u);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(batches[i].size(), 10u);
    EXPECT_EQ(batches.back().size(), 5u);
}

TEST(BatchIndices, EpochPartitionsTheSplit) {
    for (int epoch = 0; epoch < 5; ++epoch) {
        std::multiset<std::size_t> seen;
        for (const auto& b : batch_indices(95, 10, 4, epoch)) seen.insert(b.begin(), b.end());
        ASSERT_EQ(seen.size(), 95u);
        for (std::size_t i = 0; i < 95; ++i) ASSERT_EQ(seen.count(i), 1u) << i;
    }
}

TEST(BatchIndices, DeterministicPerSeedAndEpoch) {
    EXPECT_EQ(batch_indices(95, 10, 4, 2), batch_indices(95, 10, 4, 2));
    EXPECT_NE(batch_indices(95, 10, 4, 2), batch_indices(95, 10, 4, 3));
    EXPECT_NE(batch_indices(95, 10, 4, 2), batch_indices(95, 10, 5, 2));
    EXPECT_THROW(batch_indices(0, 10, 1, 1), DataError);
}

TEST(BatchIter, ImagesFollowIndices) {
    const LabeledImages data = small_data();
    const auto idx = batch_indices(data.size(), 6, 9, 1);
    const auto batches = batch_iter(data, 6, 9, 1);
    ASSERT_EQ(batches.size(), idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) {
        EXPECT_EQ(batches[b].labels, data.labels(idx[b]));
        EXPECT_EQ(batches[b].images, data.images(idx[b]));
    }
    EXPECT_EQ(batches.back().images.n(), 2);
}

TEST(TrainConfigTest, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.batch_size, 10);
    EXPECT_DOUBLE_EQ(c.learning_rate, 1e-3);
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.epochs = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Train, LogsEveryEpochAndWritesCheckpoints) {
    const auto dir = test::scratch_dir();
    TrainConfig config = small_config(3);
    config.checkpoint_every = 2;
    int callbacks = 0;
    TrainOutputs out{dir, "model", [&](const TrainLogEntry& e) {
                         ++callbacks;
                         EXPECT_TRUE(std::isfinite(e.loss));
                         EXPECT_GE(e.loss, 0.0);
                     }};
    const TrainResult r = train(config, small_data(), out);
    EXPECT_EQ(callbacks, 3);
    ASSERT_EQ(r.log.size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(r.log[i].epoch, i + 1);
    EXPECT_EQ(r.final_state.epoch, 3);
    EXPECT_TRUE(std::filesystem::exists(dir / "model_e0002.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "model_e0003.ckpt"));
    EXPECT_FALSE(std::filesystem::exists(dir / "model_e0001.ckpt"));
    EXPECT_EQ(csv_rows(dir / "train_log.csv"), 3);
}

TEST(Train, SingleEpochLogsOnce) {
    const auto dir = test::scratch_dir();
    const TrainResult r = train(small_config(1), small_data(), {dir});
    EXPECT_EQ(r.log.size(), 1u);
    EXPECT_EQ(csv_rows(dir / "train_log.csv"), 1);
}

TEST(Train, IdenticalRunsGiveIdenticalCheckpoints) {
    const auto dir = test::scratch_dir();
    const LabeledImages data = small_data();
    train(small_config(2), data, {dir / "a"});
    train(small_config(2), data, {dir / "b"});
    const auto a = test::file_bytes(dir / "a" / "model_e0002.ckpt");
    ASSERT_FALSE(a.empty());
    EXPECT_EQ(a, test::file_bytes(dir / "b" / "model_e0002.ckpt"));

    TrainConfig other = small_config(2);
    other.seed = 18;
    EXPECT_NE(bytes_of(train(other, data).final_state), a);
}

TEST(Train, LossDecreasesOnTinySet) {
    TrainConfig c = small_config(15);
    c.learning_rate = 3e-3;
    const TrainResult r = train(c, small_data());
    EXPECT_LT(r.log.back().loss, r.log.front().loss);
}

TEST(Train, InputSizeMismatchRejected) {
    TrainConfig c = small_config(1);
    c.model.input_size = 32;
    EXPECT_THROW(train(c, small_data()), DataError);
}

TEST(Resume, MatchesUninterruptedRun) {
    const auto dir = test::scratch_dir();
    const LabeledImages data = small_data();
    const TrainResult straight = train(small_config(4), data);
    train(small_config(2), data, {dir});
    const TrainResult resumed = resume(dir / "model_e0002.ckpt", small_config(4), data, {dir});
    ASSERT_EQ(resumed.log.size(), 2u);
    EXPECT_EQ(resumed.log.front().epoch, 3);
    EXPECT_EQ(bytes_of(resumed.final_state), bytes_of(straight.final_state));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(resumed.log[i].loss, straight.log[i + 2].loss);
    EXPECT_EQ(csv_rows(dir / "train_log.csv"), 4);
}

TEST(Resume, WrongArchitectureRejected) {
    const auto dir = test::scratch_dir();
    const LabeledImages data = small_data();
    train(small_config(1), data, {dir});
    TrainConfig other = small_config(2);
    other.model.stages = {{2, 4}, {1, 8}};
    try {
        resume(dir / "model_e0001.ckpt", other, data);
        FAIL() << "resume accepted a different architecture";
    } catch (const nn::CheckpointError& e) {
        EXPECT_EQ(e.kind(), nn::CheckpointError::Kind::FingerprintMismatch);
    }
}

TEST(Resume, MissingOptimizerStateNeedsExplicitFlag) {
    const LabeledImages data = small_data();
    nn::Checkpoint ck = train(small_config(1), data).final_state;
    ck.adam.reset();
    EXPECT_THROW(resume(ck, small_config(2), data), DataError);
    const TrainResult r = resume(ck, small_config(2), data, {}, true);
    EXPECT_EQ(r.final_state.epoch, 2);
    EXPECT_TRUE(r.final_state.adam.has_value());
}

TEST(Resume, TruncatedCheckpointRejected) {
    const auto dir = test::scratch_dir();
    const LabeledImages data = small_data();
    train(small_config(1), data, {dir});
    auto bytes = test::file_bytes(dir / "model_e0001.ckpt");
    test::write_bytes(dir / "cut.ckpt", std::string(bytes.begin(), bytes.begin() + bytes.size() / 2));
    EXPECT_THROW(resume(dir / "cut.ckpt", small_config(2), data), nn::CheckpointError);
}

TEST(LabeledImagesTest, LoadsFilesAndRegeneratesMissingOnes) {
    const auto dir = test::scratch_dir();
    Manifest m = build_manifest(phantom_reference_ids(2), 2, SeverityTable{}, 8);
    m.source = {ReferenceSource::Kind::Phantom, 24, 24, {}};
    m = split_manifest(m, 0.5, 1);
    const LabeledImages regen = LabeledImages::from_manifest(m, dir, 24, Split::Train);
    ASSERT_EQ(regen.size(), 20u);
    for (const auto& r : m.records) {
        std::filesystem::create_directories((dir / r.output_path).parent_path());
        save_image(apply(r.spec, load_reference(m, r)), dir / r.output_path);
    }
    const LabeledImages loaded = LabeledImages::from_manifest(m, dir, 24, Split::Train);
    std::vector<std::size_t> all(20);
    std::iota(all.begin(), all.end(), std::size_t{0});
    EXPECT_EQ(regen.labels(all), loaded.labels(all));
    const auto a = regen.images(all), b = loaded.images(all);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1.0 / 510 + 1e-6);

    Manifest no_source = m;
    no_source.source = {};
    EXPECT_THROW(LabeledImages::from_manifest(no_source, dir / "empty", 24, Split::Train), DataError);
}
