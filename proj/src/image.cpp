#include "softvla/image.hpp"

#include "softvla/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

namespace softvla {

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
    pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = fill.r;
        pixels[i + 1] = fill.g;
        pixels[i + 2] = fill.b;
    }
}

CropRect centered_square_crop(int width, int height) {
    const int side = std::min(width, height);
    return {(width - side) / 2, (height - side) / 2, side};
}

Image resize_bilinear(const Image& src, int width, int height) {
    Image out(width, height);
    const double sx = static_cast<double>(src.width) / width;
    const double sy = static_cast<double>(src.height) / height;
    // Pixel-center alignment; column taps are shared by every row.
    std::vector<std::size_t> col0(static_cast<std::size_t>(width)), col1(static_cast<std::size_t>(width));
    std::vector<double> wxs(static_cast<std::size_t>(width));
    for (int x = 0; x < width; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
        const int x0 = static_cast<int>(fx);
        col0[x] = static_cast<std::size_t>(x0) * 3;
        col1[x] = static_cast<std::size_t>(std::min(x0 + 1, src.width - 1)) * 3;
        wxs[x] = fx - x0;
    }
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        const auto* r0 = &src.pixels[static_cast<std::size_t>(y0) * src.width * 3];
        const auto* r1 = &src.pixels[static_cast<std::size_t>(y1) * src.width * 3];
        auto* q = &out.pixels[static_cast<std::size_t>(y) * width * 3];
        for (int x = 0; x < width; ++x, q += 3) {
            const auto* p00 = r0 + col0[x];
            const auto* p01 = r0 + col1[x];
            const auto* p10 = r1 + col0[x];
            const auto* p11 = r1 + col1[x];
            const double wx = wxs[x];
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] + (p01[c] - p00[c]) * wx;
                const double bottom = p10[c] + (p11[c] - p10[c]) * wx;
                const double v = top + (bottom - top) * wy;
                // v lies in [0, 255]; adding one half and truncating rounds half away from zero.
                q[c] = static_cast<std::uint8_t>(v + 0.5);
            }
        }
    }
    return out;
}

Image flip_horizontal(const Image& src) {
    Image out = src;
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            out.set(src.width - 1 - x, y, src.at(x, y));
        }
    }
    return out;
}

Image preprocess_image(const Image& raw, const CropRect& crop, bool flip) {
    if (crop.size <= 0 || crop.x < 0 || crop.y < 0 || crop.x + crop.size > raw.width ||
        crop.y + crop.size > raw.height) {
        throw DomainError("preprocess_image: crop rectangle is empty or out of bounds");
    }
    Image cropped(crop.size, crop.size);
    for (int y = 0; y < crop.size; ++y) {
        const auto* src = &raw.pixels[(static_cast<std::size_t>(crop.y + y) * raw.width + crop.x) * 3];
        std::memcpy(&cropped.pixels[static_cast<std::size_t>(y) * crop.size * 3], src,
                    static_cast<std::size_t>(crop.size) * 3);
    }
    Image out = resize_bilinear(cropped, kProcessedSize, kProcessedSize);
    return flip ? flip_horizontal(out) : out;
}

namespace {

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

struct ErrorSlot {
    char message[256] = {};
};

void read_from_span(png_structp png, png_bytep data, png_size_t length) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes.size()) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(data, cur->bytes.data() + cur->offset, length);
    cur->offset += length;
}

void error_handler(png_structp png, png_const_charp msg) {
    auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
    std::snprintf(slot->message, sizeof(slot->message), "%s", msg);
    png_longjmp(png, 1);
}

void warning_handler(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
    std::vector<std::uint8_t> out;
    out.reserve(img.pixels.size() / 2);
    ErrorSlot err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, error_handler, warning_handler);
    if (!png) {
        throw Error("png: cannot create write struct");
    }
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(std::string("png encode: ") + err.message);
    }
    png_set_write_fn(png, &out, write_to_vector, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 3);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_SUB);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(&img.pixels[static_cast<std::size_t>(y) * img.width * 3]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw IntegrityError("png: missing signature");
    }
    ErrorSlot err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, error_handler, warning_handler);
    if (!png) {
        throw Error("png: cannot create read struct");
    }
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{bytes, 0};
    Image img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IntegrityError(std::string("png decode: ") + err.message);
    }
    png_set_read_fn(png, &cursor, read_from_span);
    png_read_info(png, info);
    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    img = Image(static_cast<int>(w), static_cast<int>(h));
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = &img.pixels[static_cast<std::size_t>(y) * w * 3];
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace softvla
