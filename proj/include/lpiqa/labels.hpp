#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lpiqa/distort.hpp"

namespace lpiqa {

inline constexpr int kNumClasses = kNumDistortionTypes * kNumSeverityLevels;

/// Label-powerset class id in [0, 20). Distortion type is the slow index,
/// severity the fast one: id = type_index * 4 + (level - 1).
class ClassLabel {
public:
    explicit ClassLabel(int id);
    int id() const { return id_; }
    auto operator<=>(const ClassLabel&) const = default;

private:
    int id_;
};

ClassLabel encode_class(DistortionType dtype, SeverityLevel level);
std::pair<DistortionType, SeverityLevel> decode_class(ClassLabel label);
/// "DB1" .. "UI4".
std::string class_name(ClassLabel label);

enum class Split : std::uint8_t { Unassigned, Train, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct ManifestRecord {
    std::string reference_id;
    DistortionSpec spec;
    ClassLabel class_id;
    Split split;
    std::string output_path;
    bool operator==(const ManifestRecord&) const = default;
};

/// Where reference images come from. Phantom references are regenerated from
/// (global seed, reference id); directory references are files under `directory`.
struct ReferenceSource {
    enum class Kind { None, Phantom, Directory };
    Kind kind = Kind::None;
    int width = 0;   // phantom frame size
    int height = 0;
    std::string directory;
    bool operator==(const ReferenceSource&) const = default;
};

struct Manifest {
    static constexpr int kVersion = 1;

    int version = kVersion;
    std::uint64_t global_seed = 0;
    SeverityTable table;
    ReferenceSource source;
    std::vector<ManifestRecord> records;

    std::vector<const ManifestRecord*> records_in(Split split) const;
    bool operator==(const Manifest&) const = default;
};

/// Seed of the distortion applied to `reference_id` for `class_id`.
std::uint64_t record_seed(std::uint64_t global_seed, const std::string& reference_id, ClassLabel class_id);
/// Seed of the phantom frame that stands behind a phantom reference id.
std::uint64_t phantom_seed(std::uint64_t global_seed, const std::string& reference_id);
/// "phantom_00000", "phantom_00001", ...
std::vector<std::string> phantom_reference_ids(int count);

/// Builds `per_class_count` records for every class from the first
/// `per_class_count` references. All specs come out fully resolved.
Manifest build_manifest(const std::vector<std::string>& reference_ids, int per_class_count,
                        const SeverityTable& table, std::uint64_t global_seed, const PlateLibrary* plates = nullptr);

/// Stratified split. Within each class the references are ordered by a hash
/// of (seed, reference_id) and the first round(fraction * n) go to train.
Manifest split_manifest(const Manifest& m, double train_fraction, std::uint64_t seed);

/// Reference image for a record, either regenerated (phantom) or read from disk.
ImageF32 load_reference(const Manifest& m, const ManifestRecord& r);

// Line-delimited JSON serialization. The first line is the header.
void write_manifest(const Manifest& m, std::ostream& out);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(std::istream& in);
Manifest read_manifest(const std::filesystem::path& path);
std::string manifest_to_string(const Manifest& m);

/// Header-schema config file (JSON object). Recognized keys: global_seed,
/// severity_table. Missing keys keep the passed defaults.
struct GenerationConfig {
    std::uint64_t global_seed = 0;
    bool has_seed = false;
    SeverityTable table;
};
GenerationConfig read_generation_config(const std::filesystem::path& path);

}  // namespace lpiqa
