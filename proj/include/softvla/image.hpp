#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace softvla {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    bool operator==(const Rgb&) const = default;
};

// Interleaved 8-bit RGB, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, Rgb fill = {});

    bool empty() const { return width == 0 || height == 0; }
    Rgb at(int x, int y) const {
        const auto* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, Rgb c) {
        auto* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }

    bool operator==(const Image&) const = default;
};

struct CropRect {
    int x = 0;
    int y = 0;
    int size = 0;  // side of the square crop
};

// Centered square crop of the given frame size (480 x 480 out of 640 x 480).
CropRect centered_square_crop(int width, int height);

inline constexpr int kProcessedSize = 256;

// Crops a square, resizes bilinearly to 256 x 256 and optionally mirrors
// left-right. Throws DomainError when the crop is empty or out of bounds.
Image preprocess_image(const Image& raw, const CropRect& crop, bool flip_horizontal);

Image resize_bilinear(const Image& src, int width, int height);
Image flip_horizontal(const Image& src);

// Lossless PNG with fixed encoder settings, so equal images give equal bytes.
std::vector<std::uint8_t> encode_png(const Image& img);
// Throws IntegrityError on malformed input.
Image decode_png(std::span<const std::uint8_t> bytes);

}  // namespace softvla
