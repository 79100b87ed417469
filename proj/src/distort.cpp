#include "lpiqa/distort.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lpiqa {

std::string_view short_name(DistortionType t) {
    static constexpr std::array<std::string_view, 5> names = {"DB", "MB", "WN", "SM", "UI"};
    return names[type_index(t)];
}

std::string_view long_name(DistortionType t) {
    static constexpr std::array<std::string_view, 5> names = {"DefocusBlur", "MotionBlur", "WhiteNoise", "Smoke",
                                                              "UnevenIllumination"};
    return names[type_index(t)];
}

int type_index(DistortionType t) { return static_cast<int>(t); }

DistortionType parse_distortion_type(std::string_view name) {
    for (DistortionType t : kAllDistortionTypes) {
        if (name == short_name(t) || name == long_name(t)) return t;
    }
    throw DataError("unknown distortion type '" + std::string(name) + "'");
}

SeverityLevel::SeverityLevel(int rank) : rank_(rank) {
    if (rank < 1 || rank > kNumSeverityLevels) {
        throw std::invalid_argument("severity level must be in 1..4, got " + std::to_string(rank));
    }
}

namespace {

template <typename Cmp>
void require_monotone(const std::array<double, 4>& v, const char* name, Cmp cmp) {
    for (int i = 0; i + 1 < 4; ++i) {
        if (!cmp(v[i], v[i + 1])) throw DataError(std::string("severity table: ") + name + " must be strictly monotone");
    }
}

std::size_t row(SeverityLevel level) { return static_cast<std::size_t>(level.rank() - 1); }

}  // namespace

void SeverityTable::validate() const {
    const auto increasing = std::less<double>();
    const auto decreasing = std::greater<double>();
    require_monotone(defocus_sigma, "defocus_sigma", increasing);
    require_monotone(motion_length, "motion_length", increasing);
    require_monotone(noise_variance, "noise_variance", increasing);
    require_monotone(smoke_opacity, "smoke_opacity", increasing);
    require_monotone(illumination_radius_fraction, "illumination_radius_fraction", decreasing);
    require_monotone(illumination_floor, "illumination_floor", decreasing);
    for (int i = 0; i < 4; ++i) {
        if (!(defocus_sigma[i] > 0)) throw DataError("severity table: defocus_sigma must be positive");
        if (!(motion_length[i] >= 1)) throw DataError("severity table: motion_length must be >= 1");
        if (!(noise_variance[i] >= 0)) throw DataError("severity table: noise_variance must be >= 0");
        if (!(smoke_opacity[i] >= 0 && smoke_opacity[i] <= 1)) throw DataError("severity table: smoke_opacity outside [0,1]");
        if (!(illumination_radius_fraction[i] > 0)) throw DataError("severity table: illumination radius must be positive");
        if (!(illumination_floor[i] > 0 && illumination_floor[i] < 1)) throw DataError("severity table: illumination floor outside (0,1)");
    }
}

void PlateLibrary::add(std::string id, const ImageF32& plate) { plates_[std::move(id)] = to_grayscale(plate); }

const std::string& PlateLibrary::id_at(std::size_t i) const {
    auto it = plates_.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(i));
    return it->first;
}

ImageF32 PlateLibrary::plate_for(const std::string& id, int width, int height) const {
    auto it = plates_.find(id);
    if (it == plates_.end()) throw DataError("smoke plate '" + id + "' not available");
    return resize_area(it->second, width, height);
}

Kernel2D gaussian_kernel(double sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const int side = 2 * r + 1;
    std::vector<double> w(static_cast<std::size_t>(side) * side);
    double z = 0.0;
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
            w[static_cast<std::size_t>(y + r) * side + (x + r)] = v;
            z += v;
        }
    }
    for (double& v : w) v /= z;
    return Kernel2D(side, std::move(w));
}

namespace {

// Length of the part of segment p0 + t*(p1 - p0), t in [0,1], inside the box.
double clipped_length(double x0, double y0, double x1, double y1, double xmin, double xmax, double ymin,
                      double ymax) {
    double t0 = 0.0;
    double t1 = 1.0;
    const double dx = x1 - x0;
    const double dy = y1 - y0;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {x0 - xmin, xmax - x0, y0 - ymin, ymax - y0};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return 0.0;
            continue;
        }
        const double t = q[i] / p[i];
        if (p[i] < 0.0) {
            t0 = std::max(t0, t);
        } else {
            t1 = std::min(t1, t);
        }
        if (t0 >= t1) return 0.0;
    }
    return (t1 - t0) * std::hypot(dx, dy);
}

}  // namespace

Kernel2D motion_kernel(double length, double angle) {
    if (!(length >= 1.0)) throw std::invalid_argument("motion_kernel: length must be >= 1");
    // Segment of the given length centered on the kernel origin; x right, y down.
    const double hx = 0.5 * length * std::cos(angle);
    const double hy = 0.5 * length * std::sin(angle);
    const double extent = std::max(std::abs(hx), std::abs(hy));
    const int r = std::max(0, static_cast<int>(std::ceil(extent - 0.5 - 1e-9)));
    const int side = 2 * r + 1;
    std::vector<double> w(static_cast<std::size_t>(side) * side, 0.0);
    double total = 0.0;
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            const double len = clipped_length(-hx, -hy, hx, hy, x - 0.5, x + 0.5, y - 0.5, y + 0.5);
            w[static_cast<std::size_t>(y + r) * side + (x + r)] = len;
            total += len;
        }
    }
    for (double& v : w) v /= total;
    return Kernel2D(side, std::move(w));
}

ImageF32 apply_defocus_blur(const ImageF32& img, SeverityLevel level, const SeverityTable& table) {
    return convolve2d(img, gaussian_kernel(table.defocus_sigma[row(level)]));
}

namespace {

MotionParams draw_motion(SeverityLevel level, const SeverityTable& table, SeededRng& rng) {
    return {table.motion_length[row(level)], rng.uniform() * std::numbers::pi};
}

IlluminationParams draw_illumination(SeverityLevel level, const SeverityTable& table, SeededRng& rng) {
    IlluminationParams p{};
    p.center_x = rng.uniform(1.0 / 3.0, 2.0 / 3.0);
    p.center_y = rng.uniform(1.0 / 3.0, 2.0 / 3.0);
    p.radius = table.illumination_radius_fraction[row(level)];
    p.decay = p.radius;
    p.floor = table.illumination_floor[row(level)];
    return p;
}

ImageF32 apply_motion(const ImageF32& img, const MotionParams& p) {
    return convolve2d(img, motion_kernel(p.length, p.angle));
}

ImageF32 apply_illumination(const ImageF32& img, const IlluminationParams& p) {
    const double m = std::min(img.width(), img.height());
    const auto mask = illumination_mask(img.width(), img.height(), p.center_x * (img.width() - 1),
                                        p.center_y * (img.height() - 1), p.radius * m, p.floor, p.decay * m);
    ImageF32 out = img;
    for (int c = 0; c < ImageF32::kChannels; ++c) {
        auto plane = out.plane(c);
        for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = std::clamp(plane[i] * mask[i], 0.0f, 1.0f);
    }
    return out;
}

ImageF32 procedural_plate(int width, int height, std::uint64_t plate_seed) {
    SeededRng rng = make_rng(plate_seed, streams::kSmokePlate);
    return synth_smoke_plate(width, height, rng);
}

}  // namespace

std::pair<ImageF32, MotionParams> apply_motion_blur(const ImageF32& img, SeverityLevel level,
                                                    const SeverityTable& table, SeededRng& rng) {
    const MotionParams p = draw_motion(level, table, rng);
    return {apply_motion(img, p), p};
}

ImageF32 add_gaussian_noise(const ImageF32& img, double variance, SeededRng& rng) {
    if (!(variance >= 0)) throw std::invalid_argument("add_gaussian_noise: variance must be >= 0");
    const double sd = std::sqrt(variance);
    ImageF32 out = img;
    for (float& v : out.data()) v = static_cast<float>(std::clamp(v + sd * rng.normal(), 0.0, 1.0));
    return out;
}

ImageF32 apply_awgn(const ImageF32& img, SeverityLevel level, const SeverityTable& table, SeededRng& rng) {
    return add_gaussian_noise(img, table.noise_variance[row(level)], rng);
}

std::vector<float> illumination_mask(int width, int height, double center_x, double center_y, double radius,
                                     double floor, double decay) {
    if (!(radius > 0)) throw std::invalid_argument("illumination_mask: radius must be positive");
    if (!(floor > 0 && floor < 1)) throw std::invalid_argument("illumination_mask: floor must be in (0, 1)");
    if (!(decay > 0)) throw std::invalid_argument("illumination_mask: decay must be positive");
    std::vector<float> mask(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double d = std::hypot(x - center_x, y - center_y);
            const double v = d <= radius ? 1.0 : floor + (1.0 - floor) * std::exp(-(d - radius) / decay);
            mask[static_cast<std::size_t>(y) * width + x] = static_cast<float>(v);
        }
    }
    return mask;
}

std::vector<float> illumination_mask(int width, int height, double center_x, double center_y, double radius,
                                     double floor) {
    return illumination_mask(width, height, center_x, center_y, radius, floor, radius);
}

std::pair<ImageF32, IlluminationParams> apply_uneven_illumination(const ImageF32& img, SeverityLevel level,
                                                                  const SeverityTable& table, SeededRng& rng) {
    const IlluminationParams p = draw_illumination(level, table, rng);
    return {apply_illumination(img, p), p};
}

ImageF32 screen_blend(const ImageF32& base, const ImageF32& plate, double opacity) {
    if (base.width() != plate.width() || base.height() != plate.height()) {
        throw DataError("screen_blend: plate is " + std::to_string(plate.width()) + "x" +
                        std::to_string(plate.height()) + ", image is " + std::to_string(base.width()) + "x" +
                        std::to_string(base.height()));
    }
    if (!(opacity >= 0 && opacity <= 1)) throw std::invalid_argument("screen_blend: opacity must be in [0, 1]");
    ImageF32 out = base;
    auto o = out.data();
    const auto p = plate.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double s = opacity * p[i];
        o[i] = static_cast<float>(std::clamp(1.0 - (1.0 - o[i]) * (1.0 - s), 0.0, 1.0));
    }
    return out;
}

std::pair<ImageF32, SmokeParams> apply_smoke(const ImageF32& img, SeverityLevel level, const SeverityTable& table,
                                             SeededRng& rng, const std::optional<ImageF32>& plate) {
    SmokeParams p{table.smoke_opacity[row(level)], rng.next_u64(), {}};
    const ImageF32 smoke = plate ? *plate : procedural_plate(img.width(), img.height(), p.plate_seed);
    return {screen_blend(img, smoke, p.opacity), p};
}

namespace {

std::uint64_t stream_for(DistortionType t) {
    switch (t) {
        case DistortionType::MotionBlur: return streams::kMotionAngle;
        case DistortionType::WhiteNoise: return streams::kNoiseField;
        case DistortionType::Smoke: return streams::kSmokeChoice;
        case DistortionType::UnevenIllumination: return streams::kIllumination;
        case DistortionType::DefocusBlur: break;
    }
    return 0;
}

}  // namespace

DistortionSpec resolve_spec(DistortionType dtype, SeverityLevel level, const SeverityTable& table,
                            std::uint64_t seed, const PlateLibrary* plates) {
    SeededRng rng = make_rng(seed, stream_for(dtype));
    DistortionSpec spec{dtype, level, seed, DefocusParams{}};
    switch (dtype) {
        case DistortionType::DefocusBlur: spec.params = DefocusParams{table.defocus_sigma[row(level)]}; break;
        case DistortionType::MotionBlur: spec.params = draw_motion(level, table, rng); break;
        case DistortionType::WhiteNoise: spec.params = NoiseParams{table.noise_variance[row(level)]}; break;
        case DistortionType::Smoke: {
            SmokeParams p{table.smoke_opacity[row(level)], rng.next_u64(), {}};
            if (plates && !plates->empty()) p.plate_id = plates->id_at(rng.uniform_index(plates->size()));
            spec.params = p;
            break;
        }
        case DistortionType::UnevenIllumination: spec.params = draw_illumination(level, table, rng); break;
    }
    return spec;
}

ImageF32 apply(const DistortionSpec& spec, const ImageF32& img, const PlateLibrary* plates) {
    // Variant alternatives are declared in DistortionType order.
    if (spec.params.index() != static_cast<std::size_t>(type_index(spec.dtype))) {
        throw DataError("distortion spec: parameters do not match type " + std::string(short_name(spec.dtype)));
    }
    return std::visit(
        [&](const auto& p) -> ImageF32 {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, DefocusParams>) {
                return convolve2d(img, gaussian_kernel(p.sigma));
            } else if constexpr (std::is_same_v<P, MotionParams>) {
                return apply_motion(img, p);
            } else if constexpr (std::is_same_v<P, NoiseParams>) {
                SeededRng rng = make_rng(spec.seed, streams::kNoiseField);
                return add_gaussian_noise(img, p.variance, rng);
            } else if constexpr (std::is_same_v<P, SmokeParams>) {
                if (p.plate_id.empty()) return screen_blend(img, procedural_plate(img.width(), img.height(), p.plate_seed), p.opacity);
                if (!plates) throw DataError("spec needs smoke plate '" + p.plate_id + "' but no plates were supplied");
                return screen_blend(img, plates->plate_for(p.plate_id, img.width(), img.height()), p.opacity);
            } else {
                return apply_illumination(img, p);
            }
        },
        spec.params);
}

}  // namespace lpiqa
