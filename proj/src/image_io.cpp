#include "lpiqa/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace lpiqa {

namespace {

using Kind = ImageIoError::Kind;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError(Kind::NotFound, "cannot open image: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageF32 from_interleaved(const unsigned char* rgb, int width, int height) {
    ImageF32 img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const unsigned char* p = rgb + (static_cast<std::size_t>(y) * width + x) * 3;
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(p[c]) / 255.0f;
        }
    }
    return img;
}

std::vector<unsigned char> to_interleaved(const ImageF32& img) {
    std::vector<unsigned char> rgb(img.plane_size() * 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            unsigned char* p = rgb.data() + (static_cast<std::size_t>(y) * img.width() + x) * 3;
            for (int c = 0; c < 3; ++c) p[c] = to_byte(img.at(c, y, x));
        }
    }
    return rgb;
}

ImageF32 decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw ImageIoError(Kind::Corrupt, "corrupt PNG " + name + ": " + image.message);
    }
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw ImageIoError(Kind::UnsupportedFormat, "16-bit PNG not supported: " + name);
    }
    image.format = PNG_FORMAT_RGB;
    if (image.width < 1 || image.height < 1) {
        png_image_free(&image);
        throw ImageIoError(Kind::Corrupt, "PNG has zero size: " + name);
    }
    std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageIoError(Kind::Corrupt, "corrupt PNG " + name + ": " + msg);
    }
    return from_interleaved(rgb.data(), static_cast<int>(image.width), static_cast<int>(image.height));
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
bool next_token(const std::vector<unsigned char>& b, std::size_t& pos, std::string& tok) {
    tok.clear();
    while (pos < b.size()) {
        if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (std::isspace(b[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok.push_back(static_cast<char>(b[pos++]));
    return !tok.empty();
}

ImageF32 decode_ppm(const std::vector<unsigned char>& b, const std::string& name) {
    std::size_t pos = 2;
    std::string tok;
    long dims[3];
    for (long& d : dims) {
        if (!next_token(b, pos, tok) || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 9) {
            throw ImageIoError(Kind::Corrupt, "malformed PPM header: " + name);
        }
        d = std::stol(tok);
    }
    if (dims[2] != 255) throw ImageIoError(Kind::UnsupportedFormat, "PPM maxval must be 255: " + name);
    if (dims[0] < 1 || dims[1] < 1) throw ImageIoError(Kind::Corrupt, "PPM has zero size: " + name);
    ++pos;  // single whitespace byte before the raster
    const std::size_t need = static_cast<std::size_t>(dims[0]) * dims[1] * 3;
    if (pos > b.size() || b.size() - pos < need) throw ImageIoError(Kind::Corrupt, "truncated PPM raster: " + name);
    return from_interleaved(b.data() + pos, static_cast<int>(dims[0]), static_cast<int>(dims[1]));
}

bool has_ppm_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".ppm";
}

}  // namespace

ImageF32 load_image(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw ImageIoError(Kind::NotFound, "image not found: " + path.string());
    }
    const auto bytes = read_file(path);
    static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(bytes, path.string());
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path.string());
    throw ImageIoError(Kind::UnsupportedFormat, "unsupported image format (expected PNG or P6 PPM): " + path.string());
}

void save_image(const ImageF32& img, const std::filesystem::path& path) {
    if (img.empty()) throw std::invalid_argument("save_image: empty image");
    const auto rgb = to_interleaved(img);
    if (has_ppm_extension(path)) {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
        out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
        if (!out) throw ImageIoError(Kind::WriteFailed, "failed writing " + path.string());
        return;
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
        throw ImageIoError(Kind::WriteFailed, "failed writing " + path.string() + ": " + image.message);
    }
}

}  // namespace lpiqa
