#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "erseg/types.hpp"

namespace erseg {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngReader() {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) info = png_create_info_struct(png);
        if (!png || !info) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw IoError("libpng: failed to allocate read structs");
        }
    }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngWriter() {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) info = png_create_info_struct(png);
        if (!png || !info) {
            png_destroy_write_struct(&png, &info);
            throw IoError("libpng: failed to allocate write structs");
        }
    }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

/// Decoded raster: row-major interleaved samples normalized by bit depth.
struct RawPng {
    int h = 0, w = 0, channels = 0, bit_depth = 0;
    std::vector<uint16_t> samples;  // h*w*channels, interleaved

    uint16_t at(int y, int x, int c) const {
        return samples[(static_cast<size_t>(y) * w + x) * channels + c];
    }
};

inline RawPng read_raw_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open for reading: " + path);
    PngReader r;
    if (setjmp(png_jmpbuf(r.png))) throw IoError("corrupt or unreadable PNG: " + path);
    png_init_io(r.png, f.get());
    png_read_info(r.png, r.info);

    png_uint_32 w = 0, h = 0;
    int bit_depth = 0, color_type = 0;
    png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(r.png, r.info, PNG_INFO_tRNS)) {
        png_set_strip_alpha(r.png);
    }
    if (bit_depth == 16) png_set_swap(r.png);  // stored big-endian in the file
    png_read_update_info(r.png, r.info);

    png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
    const int channels = png_get_channels(r.png, r.info);
    if (channels != 1 && channels != 3) {
        throw IoError("unsupported channel count after decode: " + path);
    }
    if (bit_depth != 8 && bit_depth != 16) {
        throw IoError("unsupported bit depth after decode: " + path);
    }

    RawPng out;
    out.h = static_cast<int>(h);
    out.w = static_cast<int>(w);
    out.channels = channels;
    out.bit_depth = bit_depth;
    out.samples.resize(static_cast<size_t>(out.h) * out.w * channels);

    const size_t row_bytes = png_get_rowbytes(r.png, r.info);
    std::vector<png_byte> row(row_bytes);
    for (int y = 0; y < out.h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        if (bit_depth == 8) {
            for (int i = 0; i < out.w * channels; ++i) {
                out.samples[static_cast<size_t>(y) * out.w * channels + i] = row[static_cast<size_t>(i)];
            }
        } else {
            const auto* row16 = reinterpret_cast<const uint16_t*>(row.data());
            for (int i = 0; i < out.w * channels; ++i) {
                out.samples[static_cast<size_t>(y) * out.w * channels + i] = row16[i];
            }
        }
    }
    png_read_end(r.png, nullptr);
    return out;
}

}  // namespace detail

/// Image in [0,1]; grayscale files yield 1 channel, color files 3.
inline Image read_png_image(const std::string& path) {
    const detail::RawPng raw = detail::read_raw_png(path);
    const double denom = raw.bit_depth == 8 ? 255.0 : 65535.0;
    Image img(raw.h, raw.w, raw.channels);
    for (int y = 0; y < raw.h; ++y) {
        for (int x = 0; x < raw.w; ++x) {
            for (int c = 0; c < raw.channels; ++c) {
                img.at(y, x, c) = static_cast<double>(raw.at(y, x, c)) / denom;
            }
        }
    }
    return img;
}

/// Class-index mask from an 8-bit grayscale PNG (raw pixel value = class id).
inline LabelMask read_png_mask(const std::string& path) {
    const detail::RawPng raw = detail::read_raw_png(path);
    if (raw.channels != 1 || raw.bit_depth != 8) {
        throw IoError("mask must be 8-bit grayscale: " + path);
    }
    LabelMask m(raw.h, raw.w);
    for (int y = 0; y < raw.h; ++y) {
        for (int x = 0; x < raw.w; ++x) m.at(y, x) = raw.at(y, x, 0);
    }
    return m;
}

namespace detail {

inline void write_png_rows(const std::string& path, int h, int w, int color_type,
                           const std::vector<png_byte>& interleaved, int channels) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open for writing: " + path);
    PngWriter wr;
    if (setjmp(png_jmpbuf(wr.png))) throw IoError("PNG write failed: " + path);
    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    for (int y = 0; y < h; ++y) {
        png_write_row(wr.png, const_cast<png_bytep>(interleaved.data() +
                                                    static_cast<size_t>(y) * w * channels));
    }
    png_write_end(wr.png, nullptr);
}

inline png_byte quantize01(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<png_byte>(std::lround(c * 255.0));
}

}  // namespace detail

/// 8-bit grayscale output of a 1-channel [0,1] image.
inline void write_png_gray(const std::string& path, const Image& img) {
    if (img.c != 1) throw IoError("write_png_gray expects a 1-channel image");
    std::vector<png_byte> rows(static_cast<size_t>(img.h) * img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            rows[static_cast<size_t>(y) * img.w + x] = detail::quantize01(img.at(y, x, 0));
        }
    }
    detail::write_png_rows(path, img.h, img.w, PNG_COLOR_TYPE_GRAY, rows, 1);
}

/// 8-bit RGB output of a 3-channel [0,1] image.
inline void write_png_rgb(const std::string& path, const Image& img) {
    if (img.c != 3) throw IoError("write_png_rgb expects a 3-channel image");
    std::vector<png_byte> rows(static_cast<size_t>(img.h) * img.w * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                rows[(static_cast<size_t>(y) * img.w + x) * 3 + c] = detail::quantize01(img.at(y, x, c));
            }
        }
    }
    detail::write_png_rows(path, img.h, img.w, PNG_COLOR_TYPE_RGB, rows, 3);
}

/// Mask written with raw class indices as 8-bit gray values.
inline void write_png_mask(const std::string& path, const LabelMask& m) {
    std::vector<png_byte> rows(static_cast<size_t>(m.h) * m.w);
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            const int v = m.at(y, x);
            if (v < 0 || v > 255) throw IoError("mask class outside 8-bit range");
            rows[static_cast<size_t>(y) * m.w + x] = static_cast<png_byte>(v);
        }
    }
    detail::write_png_rows(path, m.h, m.w, PNG_COLOR_TYPE_GRAY, rows, 1);
}

}  // namespace erseg
