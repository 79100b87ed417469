#pragma once

#include <filesystem>
#include <string>

#include "lpiqa/image.hpp"

namespace lpiqa {

/// Raised by image loading/saving. `kind()` tells the failure modes apart.
class ImageIoError : public DataError {
public:
    enum class Kind { NotFound, UnsupportedFormat, Corrupt, WriteFailed };

    ImageIoError(Kind kind, const std::string& message) : DataError(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Reads an 8-bit PNG (gray, RGB or palette; alpha is dropped) or a binary
/// PPM (P6, maxval 255). Components are byte / 255.
ImageF32 load_image(const std::filesystem::path& path);

/// Writes 8-bit RGB with round-half-up quantization. `.ppm` paths are written
/// as P6, everything else as PNG. Parent directories are not created.
void save_image(const ImageF32& img, const std::filesystem::path& path);

}  // namespace lpiqa
