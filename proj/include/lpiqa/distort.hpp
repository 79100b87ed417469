#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "lpiqa/image.hpp"
#include "lpiqa/rng.hpp"

namespace lpiqa {

/// Distortion families, in label order.
enum class DistortionType : std::uint8_t { DefocusBlur, MotionBlur, WhiteNoise, Smoke, UnevenIllumination };

inline constexpr int kNumDistortionTypes = 5;
inline constexpr int kNumSeverityLevels = 4;

inline constexpr std::array<DistortionType, kNumDistortionTypes> kAllDistortionTypes = {
    DistortionType::DefocusBlur, DistortionType::MotionBlur, DistortionType::WhiteNoise, DistortionType::Smoke,
    DistortionType::UnevenIllumination};

/// "DB", "MB", "WN", "SM", "UI".
std::string_view short_name(DistortionType t);
/// "DefocusBlur", "MotionBlur", ...
std::string_view long_name(DistortionType t);
/// Accepts either the short or the long name. Throws DataError otherwise.
DistortionType parse_distortion_type(std::string_view name);
int type_index(DistortionType t);

/// Severity rank 1..4; 4 is the most severe.
class SeverityLevel {
public:
    explicit SeverityLevel(int rank);
    int rank() const { return rank_; }
    auto operator<=>(const SeverityLevel&) const = default;

private:
    int rank_;
};

/// Per-level parameters controlling each distortion. Entries are indexed by
/// level - 1. `validate()` enforces strict monotonicity in severity.
struct SeverityTable {
    std::array<double, 4> defocus_sigma{1.0, 2.0, 4.0, 8.0};
    std::array<double, 4> motion_length{5.0, 10.0, 20.0, 40.0};
    std::array<double, 4> noise_variance{0.001, 0.004, 0.012, 0.030};
    std::array<double, 4> smoke_opacity{0.25, 0.45, 0.7, 0.9};
    std::array<double, 4> illumination_radius_fraction{0.45, 0.35, 0.25, 0.18};
    std::array<double, 4> illumination_floor{0.7, 0.5, 0.35, 0.2};

    void validate() const;
    bool operator==(const SeverityTable&) const = default;
};

struct DefocusParams {
    double sigma;
    bool operator==(const DefocusParams&) const = default;
};
struct MotionParams {
    double length;
    double angle;  // radians in [0, pi)
    bool operator==(const MotionParams&) const = default;
};
struct NoiseParams {
    double variance;
    bool operator==(const NoiseParams&) const = default;
};
struct SmokeParams {
    double opacity;
    std::uint64_t plate_seed;
    std::string plate_id;  // empty: procedural plate from plate_seed
    bool operator==(const SmokeParams&) const = default;
};
/// Geometry is stored relative to the frame so a spec applies at any resolution:
/// center in fractions of width/height, radius and decay in fractions of min(width, height).
struct IlluminationParams {
    double center_x;
    double center_y;
    double radius;
    double decay;
    double floor;
    bool operator==(const IlluminationParams&) const = default;
};

using DistortionParams = std::variant<DefocusParams, MotionParams, NoiseParams, SmokeParams, IlluminationParams>;

/// Fully resolved description of one distorted output. `seed` drives the only
/// remaining stochastic element (the noise field for WhiteNoise).
struct DistortionSpec {
    DistortionType dtype;
    SeverityLevel level;
    std::uint64_t seed;
    DistortionParams params;
    bool operator==(const DistortionSpec&) const = default;
};

/// User-supplied smoke plates keyed by id. Plates are grayscale and resampled
/// to the target frame on lookup.
class PlateLibrary {
public:
    void add(std::string id, const ImageF32& plate);
    bool empty() const { return plates_.empty(); }
    std::size_t size() const { return plates_.size(); }
    const std::string& id_at(std::size_t i) const;
    ImageF32 plate_for(const std::string& id, int width, int height) const;

private:
    std::map<std::string, ImageF32> plates_;
};

// Kernels.
Kernel2D gaussian_kernel(double sigma);
Kernel2D motion_kernel(double length, double angle);

// Individual generators.
ImageF32 apply_defocus_blur(const ImageF32& img, SeverityLevel level, const SeverityTable& table);
std::pair<ImageF32, MotionParams> apply_motion_blur(const ImageF32& img, SeverityLevel level,
                                                    const SeverityTable& table, SeededRng& rng);
ImageF32 apply_awgn(const ImageF32& img, SeverityLevel level, const SeverityTable& table, SeededRng& rng);
/// out = clamp(img + n), n ~ N(0, variance) i.i.d. per component.
ImageF32 add_gaussian_noise(const ImageF32& img, double variance, SeededRng& rng);

/// Attenuation mask: 1 inside the disc, floor + (1 - floor) * exp(-(d - radius) / decay) outside.
/// Units are pixels. Returned as a single plane (row-major, width*height).
std::vector<float> illumination_mask(int width, int height, double center_x, double center_y, double radius,
                                     double floor, double decay);
std::vector<float> illumination_mask(int width, int height, double center_x, double center_y, double radius,
                                     double floor);
std::pair<ImageF32, IlluminationParams> apply_uneven_illumination(const ImageF32& img, SeverityLevel level,
                                                                  const SeverityTable& table, SeededRng& rng);

ImageF32 synth_smoke_plate(int width, int height, SeededRng& rng);
ImageF32 screen_blend(const ImageF32& base, const ImageF32& plate, double opacity);
std::pair<ImageF32, SmokeParams> apply_smoke(const ImageF32& img, SeverityLevel level, const SeverityTable& table,
                                             SeededRng& rng, const std::optional<ImageF32>& plate = std::nullopt);

/// Draws every random parameter for (dtype, level) from `seed` and returns a
/// spec that `apply` can evaluate without further randomness. When `plates`
/// is non-empty, smoke specs pick one of its plates.
DistortionSpec resolve_spec(DistortionType dtype, SeverityLevel level, const SeverityTable& table,
                            std::uint64_t seed, const PlateLibrary* plates = nullptr);

/// Pure dispatch over the five generators.
ImageF32 apply(const DistortionSpec& spec, const ImageF32& img, const PlateLibrary* plates = nullptr);

/// Procedural stand-in for an endoscopic frame: tissue gradient, organ-like
/// ellipses, vessels, an instrument shaft and a specular highlight.
ImageF32 phantom_image(int width, int height, std::uint64_t seed);

/// Fractal value noise: sum of `octaves` bilinear-smoothstep lattice noises
/// with halving amplitude, normalized to [0, 1]. Base lattice has `cells`
/// cells across the larger dimension.
std::vector<float> fractal_value_noise(int width, int height, int octaves, double cells, SeededRng& rng);

}  // namespace lpiqa
