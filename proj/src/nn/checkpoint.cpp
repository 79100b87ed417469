#include "lpiqa/nn/checkpoint.hpp"

#include <utility>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lpiqa::nn {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void floats(std::span<const float> v) {
        u64(v.size());
        for (float x : v) f32(x);
    }
    std::vector<unsigned char> take() { return std::move(out_); }

private:
    std::vector<unsigned char> out_;
};

class Reader {
public:
    explicit Reader(std::span<const unsigned char> b) : b_(b) {}
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw CheckpointError(Kind::Truncated, "checkpoint truncated");
    }
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void floats_into(std::span<float> dst, const char* what) {
        const std::uint64_t n = u64();
        if (n != dst.size()) {
            throw CheckpointError(Kind::ShapeMismatch, std::string("checkpoint ") + what + " has wrong element count");
        }
        need(n * 4);
        for (float& x : dst) x = f32();
    }
    bool at_end() const { return pos_ == b_.size(); }

private:
    std::span<const unsigned char> b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_filename(const std::string& prefix, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_e%04d.ckpt", epoch);
    return prefix + buf;
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(Checkpoint::kVersion);
    const std::string fp = ckpt.params.fingerprint();
    w.u32(static_cast<std::uint32_t>(fp.size()));
    w.bytes(fp.data(), fp.size());
    w.u32(static_cast<std::uint32_t>(ckpt.epoch));
    const auto tensors = ckpt.params.tensors();
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto* t : tensors) w.floats(t->values());
    w.u8(ckpt.adam ? 1 : 0);
    if (ckpt.adam) {
        const auto& a = *ckpt.adam;
        w.f64(a.hyper.learning_rate);
        w.f64(a.hyper.beta1);
        w.f64(a.hyper.beta2);
        w.f64(a.hyper.epsilon);
        w.u64(static_cast<std::uint64_t>(a.step));
        for (const auto& m : a.first_moment) w.floats(m);
        for (const auto& v : a.second_moment) w.floats(v);
    }
    return w.take();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint parse_checkpoint(std::span<const unsigned char> bytes, const ModelConfig* expected) {
    Reader r(bytes);
    if (bytes.size() < sizeof kCheckpointMagic || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        throw CheckpointError(Kind::BadMagic, "not an lpiqa model checkpoint");
    }
    r.str(8);
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::kVersion) {
        throw CheckpointError(Kind::BadMagic, "unsupported checkpoint version " + std::to_string(version));
    }
    const std::string fp = r.str(r.u32());
    if (expected && expected->fingerprint() != fp) {
        throw CheckpointError(Kind::FingerprintMismatch,
                              "checkpoint architecture '" + fp + "' does not match '" + expected->fingerprint() + "'");
    }
    ModelConfig config;
    try {
        config = ModelConfig::from_fingerprint(fp);
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(Kind::BadMagic, std::string("checkpoint fingerprint unreadable: ") + e.what());
    }
    Checkpoint ckpt{make_params<float>(config), static_cast<int>(r.u32()), std::nullopt};
    auto tensors = ckpt.params.tensors();
    if (r.u32() != tensors.size()) throw CheckpointError(Kind::ShapeMismatch, "checkpoint tensor count mismatch");
    for (auto* t : tensors) r.floats_into(t->values(), "parameter tensor");
    if (r.u8()) {
        AdamState<float> a = AdamState<float>::zeros_for(std::as_const(ckpt.params).tensors());
        a.hyper.learning_rate = r.f64();
        a.hyper.beta1 = r.f64();
        a.hyper.beta2 = r.f64();
        a.hyper.epsilon = r.f64();
        a.step = static_cast<std::int64_t>(r.u64());
        for (auto& m : a.first_moment) r.floats_into(m, "first moment");
        for (auto& v : a.second_moment) r.floats_into(v, "second moment");
        ckpt.adam = std::move(a);
    }
    if (!r.at_end()) throw CheckpointError(Kind::ShapeMismatch, "trailing bytes after checkpoint payload");
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::Missing, "cannot open checkpoint " + path.string());
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse_checkpoint(bytes, expected);
}

}  // namespace lpiqa::nn
