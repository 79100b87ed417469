#include "lpiqa/labels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "lpiqa/image_io.hpp"

namespace lpiqa {

ClassLabel::ClassLabel(int id) : id_(id) {
    if (id < 0 || id >= kNumClasses) throw DataError("class id out of range [0, 20): " + std::to_string(id));
}

ClassLabel encode_class(DistortionType dtype, SeverityLevel level) {
    return ClassLabel(type_index(dtype) * kNumSeverityLevels + (level.rank() - 1));
}

std::pair<DistortionType, SeverityLevel> decode_class(ClassLabel label) {
    return {kAllDistortionTypes[label.id() / kNumSeverityLevels], SeverityLevel(label.id() % kNumSeverityLevels + 1)};
}

std::string class_name(ClassLabel label) {
    const auto [t, l] = decode_class(label);
    return std::string(short_name(t)) + std::to_string(l.rank());
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Test: return "test";
        case Split::Unassigned: break;
    }
    return "unassigned";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    if (name == "unassigned") return Split::Unassigned;
    throw DataError("unknown split '" + std::string(name) + "'");
}

std::vector<const ManifestRecord*> Manifest::records_in(Split split) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records) {
        if (r.split == split) out.push_back(&r);
    }
    return out;
}

std::uint64_t record_seed(std::uint64_t global_seed, const std::string& reference_id, ClassLabel class_id) {
    return derive_seed(global_seed, reference_id, static_cast<std::uint64_t>(class_id.id()) + 1);
}

std::uint64_t phantom_seed(std::uint64_t global_seed, const std::string& reference_id) {
    return derive_seed(global_seed, reference_id, 0);
}

std::vector<std::string> phantom_reference_ids(int count) {
    std::vector<std::string> ids;
    ids.reserve(count);
    char buf[32];
    for (int i = 0; i < count; ++i) {
        std::snprintf(buf, sizeof buf, "phantom_%05d", i);
        ids.emplace_back(buf);
    }
    return ids;
}

namespace {

std::string output_path_for(ClassLabel label, const std::string& reference_id) {
    char dir[16];
    std::snprintf(dir, sizeof dir, "%02d_", label.id());
    const std::filesystem::path ref(reference_id);
    return std::string(dir) + class_name(label) + "/" + ref.stem().string() + ".png";
}

}  // namespace

Manifest build_manifest(const std::vector<std::string>& reference_ids, int per_class_count,
                        const SeverityTable& table, std::uint64_t global_seed, const PlateLibrary* plates) {
    if (per_class_count < 1) throw DataError("per-class count must be >= 1");
    if (static_cast<std::size_t>(per_class_count) > reference_ids.size()) {
        throw DataError("insufficient references: need " + std::to_string(per_class_count) + " per class, have " +
                        std::to_string(reference_ids.size()) + " (short by " +
                        std::to_string(per_class_count - static_cast<long>(reference_ids.size())) + ")");
    }
    table.validate();
    Manifest m;
    m.global_seed = global_seed;
    m.table = table;
    m.records.reserve(static_cast<std::size_t>(kNumClasses) * per_class_count);
    std::set<std::string> paths;
    for (int c = 0; c < kNumClasses; ++c) {
        const ClassLabel label(c);
        const auto [dtype, level] = decode_class(label);
        for (int i = 0; i < per_class_count; ++i) {
            const std::string& ref = reference_ids[i];
            const std::uint64_t seed = record_seed(global_seed, ref, label);
            ManifestRecord rec{ref, resolve_spec(dtype, level, table, seed, plates), label, Split::Unassigned,
                               output_path_for(label, ref)};
            if (!paths.insert(rec.output_path).second) {
                throw DataError("duplicate output path " + rec.output_path + " (reference ids must have distinct stems)");
            }
            m.records.push_back(std::move(rec));
        }
    }
    return m;
}

Manifest split_manifest(const Manifest& m, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DataError("train fraction must lie strictly between 0 and 1");
    }
    Manifest out = m;
    std::array<std::vector<ManifestRecord*>, kNumClasses> by_class;
    for (auto& r : out.records) by_class[r.class_id.id()].push_back(&r);
    for (auto& members : by_class) {
        std::sort(members.begin(), members.end(), [seed](const ManifestRecord* a, const ManifestRecord* b) {
            const std::uint64_t ka = derive_seed(seed, a->reference_id);
            const std::uint64_t kb = derive_seed(seed, b->reference_id);
            return ka != kb ? ka < kb : a->reference_id < b->reference_id;
        });
        const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(members.size())));
        for (std::size_t i = 0; i < members.size(); ++i) members[i]->split = i < n_train ? Split::Train : Split::Test;
    }
    return out;
}

ImageF32 load_reference(const Manifest& m, const ManifestRecord& r) {
    switch (m.source.kind) {
        case ReferenceSource::Kind::Phantom:
            return phantom_image(m.source.width, m.source.height, phantom_seed(m.global_seed, r.reference_id));
        case ReferenceSource::Kind::Directory:
            return load_image(std::filesystem::path(m.source.directory) / r.reference_id);
        case ReferenceSource::Kind::None: break;
    }
    throw DataError("manifest has no reference source; cannot regenerate " + r.output_path);
}

}  // namespace lpiqa
