#include <algorithm>
#include <cmath>
#include <numbers>

#include "lpiqa/distort.hpp"

namespace lpiqa {

namespace {

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

struct Rgb {
    double r, g, b;
};

Rgb mix(Rgb a, Rgb b, double t) { return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t}; }

Rgb jitter(Rgb c, SeededRng& rng, double amount) {
    return {std::clamp(c.r + rng.uniform(-amount, amount), 0.0, 1.0),
            std::clamp(c.g + rng.uniform(-amount, amount), 0.0, 1.0),
            std::clamp(c.b + rng.uniform(-amount, amount), 0.0, 1.0)};
}

}  // namespace

std::vector<float> fractal_value_noise(int width, int height, int octaves, double cells, SeededRng& rng) {
    const double extent = std::max(width, height);
    std::vector<double> acc(static_cast<std::size_t>(width) * height, 0.0);
    double amplitude = 1.0;
    double total = 0.0;
    double freq = cells;
    for (int o = 0; o < octaves; ++o) {
        const int gw = static_cast<int>(std::ceil(freq * width / extent)) + 2;
        const int gh = static_cast<int>(std::ceil(freq * height / extent)) + 2;
        std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
        for (double& v : lattice) v = rng.uniform();
        for (int y = 0; y < height; ++y) {
            const double v = (y + 0.5) / extent * freq;
            const int iy = static_cast<int>(v);
            const double fy = smoothstep(0.0, 1.0, v - iy);
            for (int x = 0; x < width; ++x) {
                const double u = (x + 0.5) / extent * freq;
                const int ix = static_cast<int>(u);
                const double fx = smoothstep(0.0, 1.0, u - ix);
                const double a = lattice[static_cast<std::size_t>(iy) * gw + ix];
                const double b = lattice[static_cast<std::size_t>(iy) * gw + ix + 1];
                const double c = lattice[static_cast<std::size_t>(iy + 1) * gw + ix];
                const double d = lattice[static_cast<std::size_t>(iy + 1) * gw + ix + 1];
                const double top = a + (b - a) * fx;
                const double bottom = c + (d - c) * fx;
                acc[static_cast<std::size_t>(y) * width + x] += amplitude * (top + (bottom - top) * fy);
            }
        }
        total += amplitude;
        amplitude *= 0.5;
        freq *= 2.0;
    }
    std::vector<float> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(std::clamp(acc[i] / total, 0.0, 1.0));
    return out;
}

ImageF32 synth_smoke_plate(int width, int height, SeededRng& rng) {
    const auto noise = fractal_value_noise(width, height, 5, 3.0, rng);
    // Plume density rises toward the top edge and is thresholded so that most
    // of the lower frame stays black.
    constexpr double kThreshold = 0.3;
    std::vector<double> density(noise.size());
    double peak = 0.0;
    for (int y = 0; y < height; ++y) {
        const double toward_top = height > 1 ? 1.0 - static_cast<double>(y) / (height - 1) : 1.0;
        const double shape = 0.35 + 0.65 * toward_top;
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            density[i] = std::max(0.0, (noise[i] * shape - kThreshold) / (1.0 - kThreshold));
            peak = std::max(peak, density[i]);
        }
    }
    ImageF32 plate(width, height);
    for (std::size_t i = 0; i < density.size(); ++i) {
        const float v = peak > 0 ? static_cast<float>(std::clamp(density[i] / peak, 0.0, 1.0)) : 0.0f;
        for (int c = 0; c < ImageF32::kChannels; ++c) plate.plane(c)[i] = v;
    }
    return plate;
}

ImageF32 phantom_image(int width, int height, std::uint64_t seed) {
    SeededRng rng = make_rng(seed, streams::kPhantom);
    const double m = std::min(width, height);
    const double extent = std::max(width, height);

    // Tissue background with a random-direction illumination gradient.
    const Rgb tissue = jitter({0.72, 0.32, 0.28}, rng, 0.08);
    const Rgb deep = jitter({0.35, 0.10, 0.10}, rng, 0.05);
    const double ga = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double gx = std::cos(ga);
    const double gy = std::sin(ga);
    const auto texture = fractal_value_noise(width, height, 4, 6.0, rng);

    std::vector<Rgb> px(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = (x - 0.5 * width) / extent;
            const double v = (y - 0.5 * height) / extent;
            const double t = std::clamp(0.5 + (u * gx + v * gy), 0.0, 1.0);
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            Rgb c = mix(tissue, deep, 0.6 * t);
            const double tex = 0.8 + 0.4 * texture[i];
            px[i] = {c.r * tex, c.g * tex, c.b * tex};
        }
    }

    // Organ-like ellipses.
    static constexpr Rgb kOrganHues[] = {
        {0.45, 0.14, 0.12},  // liver
        {0.55, 0.60, 0.32},  // gall-bladder
        {0.88, 0.76, 0.45},  // fat
        {0.82, 0.52, 0.46},  // bowel
        {0.62, 0.22, 0.30},  // muscle
    };
    const int organs = 3 + static_cast<int>(rng.uniform_index(3));
    for (int k = 0; k < organs; ++k) {
        const Rgb hue = jitter(kOrganHues[rng.uniform_index(std::size(kOrganHues))], rng, 0.06);
        const double cx = rng.uniform(0.0, width);
        const double cy = rng.uniform(0.0, height);
        const double ra = rng.uniform(0.12, 0.40) * m;
        const double rb = rng.uniform(0.08, 0.25) * m;
        const double rot = rng.uniform(0.0, std::numbers::pi);
        const double cr = std::cos(rot);
        const double sr = std::sin(rot);
        const double edge = 1.5 / std::min(ra, rb);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double dx = x - cx;
                const double dy = y - cy;
                const double a = (dx * cr + dy * sr) / ra;
                const double b = (-dx * sr + dy * cr) / rb;
                const double rho = std::sqrt(a * a + b * b);
                const double cover = 1.0 - smoothstep(1.0 - edge, 1.0 + edge, rho);
                if (cover <= 0.0) continue;
                const double shade = 0.75 + 0.25 * (1.0 - std::min(1.0, rho * rho));
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                const double tex = 0.9 + 0.2 * texture[i];
                const Rgb organ{hue.r * shade * tex, hue.g * shade * tex, hue.b * shade * tex};
                px[i] = mix(px[i], organ, cover);
            }
        }
    }

    // Vessels: thin dark sinusoidal bands.
    const int vessels = 2 + static_cast<int>(rng.uniform_index(3));
    for (int k = 0; k < vessels; ++k) {
        const Rgb hue = jitter({0.40, 0.05, 0.08}, rng, 0.05);
        const double base = rng.uniform(0.1, 0.9) * height;
        const double amp = rng.uniform(0.03, 0.15) * m;
        const double freq = rng.uniform(1.0, 4.0) * 2.0 * std::numbers::pi / width;
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double half_width = std::max(0.6, rng.uniform(0.004, 0.012) * m);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double yc = base + amp * std::sin(freq * x + phase);
                const double cover = 1.0 - smoothstep(half_width - 0.7, half_width + 0.7, std::abs(y - yc));
                if (cover <= 0.0) continue;
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                px[i] = mix(px[i], hue, 0.85 * cover);
            }
        }
    }

    // Instrument shaft entering from the frame border.
    if (rng.uniform() < 0.7) {
        const Rgb metal = jitter({0.62, 0.64, 0.68}, rng, 0.05);
        const double ex = rng.uniform(0.0, width);
        const double ey = height;
        const double tx = rng.uniform(0.3, 0.7) * width;
        const double ty = rng.uniform(0.3, 0.6) * height;
        const double len = std::hypot(tx - ex, ty - ey);
        const double ux = (tx - ex) / len;
        const double uy = (ty - ey) / len;
        const double half_width = rng.uniform(0.03, 0.06) * m;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double along = (x - ex) * ux + (y - ey) * uy;
                if (along < -half_width || along > len) continue;
                const double across = std::abs(-(x - ex) * uy + (y - ey) * ux);
                const double cover = 1.0 - smoothstep(half_width - 0.8, half_width + 0.8, across);
                if (cover <= 0.0) continue;
                const double sheen = 0.7 + 0.3 * std::cos(across / half_width * 1.5);
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                px[i] = mix(px[i], {metal.r * sheen, metal.g * sheen, metal.b * sheen}, cover);
            }
        }
    }

    // Specular highlight.
    const double sx = rng.uniform(0.2, 0.8) * width;
    const double sy = rng.uniform(0.2, 0.8) * height;
    const double ss = rng.uniform(0.015, 0.035) * m;
    ImageF32 img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            const double d2 = (x - sx) * (x - sx) + (y - sy) * (y - sy);
            const double spec = 0.9 * std::exp(-d2 / (2.0 * ss * ss));
            const Rgb c = px[i];
            img.at(0, y, x) = static_cast<float>(std::clamp(c.r + (1.0 - c.r) * spec, 0.0, 1.0));
            img.at(1, y, x) = static_cast<float>(std::clamp(c.g + (1.0 - c.g) * spec, 0.0, 1.0));
            img.at(2, y, x) = static_cast<float>(std::clamp(c.b + (1.0 - c.b) * spec, 0.0, 1.0));
        }
    }
    return img;
}

}  // namespace lpiqa
