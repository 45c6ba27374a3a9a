#pragma once

#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "guideseg/common.hpp"
#include "guideseg/raster.hpp"
#include "guideseg/registry.hpp"

namespace guideseg {

// ---------------------------------------------------------------------------
// SGSM score-map container: "SGSM" | u32 version=1 | u32 C | u32 H | u32 W |
// C*H*W little-endian IEEE-754 floats, channel-major, row-major per channel.
// Header is 20 bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8 & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 16 & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 24 & 0xff));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path + "'");
    return bytes;
}

inline void spew(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on '" + path + "'");
}

} // namespace detail

inline constexpr std::uint32_t kSgsmVersion = 1;
inline constexpr size_t kSgsmHeaderSize = 20;

inline std::vector<std::uint8_t> encode_score_map(const ScoreMap& map) {
    if (map.channels <= 0 || map.height <= 0 || map.width <= 0)
        throw UsageError("score map with zero dimension cannot be written");
    std::vector<std::uint8_t> out;
    out.reserve(kSgsmHeaderSize + map.data.size() * 4);
    out.insert(out.end(), {'S', 'G', 'S', 'M'});
    detail::put_u32_le(out, kSgsmVersion);
    detail::put_u32_le(out, static_cast<std::uint32_t>(map.channels));
    detail::put_u32_le(out, static_cast<std::uint32_t>(map.height));
    detail::put_u32_le(out, static_cast<std::uint32_t>(map.width));
    for (float f : map.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32_le(out, bits);
    }
    return out;
}

inline void write_score_map(const ScoreMap& map, const std::string& path) {
    detail::spew(path, encode_score_map(map));
}

inline ScoreMap decode_score_map(const std::vector<std::uint8_t>& bytes,
                                 const std::string& origin = "score map") {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "SGSM", 4) != 0)
        throw FormatError(origin + ": bad magic at byte offset 0 (expected \"SGSM\")");
    if (bytes.size() < kSgsmHeaderSize)
        throw FormatError(origin + ": truncated header, file ends at byte offset " +
                          std::to_string(bytes.size()));
    const std::uint32_t version = detail::get_u32_le(bytes.data() + 4);
    if (version != kSgsmVersion)
        throw FormatError(origin + ": unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    const std::uint32_t c = detail::get_u32_le(bytes.data() + 8);
    const std::uint32_t h = detail::get_u32_le(bytes.data() + 12);
    const std::uint32_t w = detail::get_u32_le(bytes.data() + 16);
    if (c == 0) throw FormatError(origin + ": zero channel count at byte offset 8");
    if (h == 0) throw FormatError(origin + ": zero height at byte offset 12");
    if (w == 0) throw FormatError(origin + ": zero width at byte offset 16");
    const std::uint64_t count = static_cast<std::uint64_t>(c) * h * w;
    if (count > (1ull << 31))
        throw FormatError(origin + ": implausible payload of " + std::to_string(count) +
                          " floats declared in header");
    const std::uint64_t expected = kSgsmHeaderSize + count * 4;
    if (bytes.size() != expected)
        throw FormatError(origin + ": payload truncated or oversized, file ends at byte offset " +
                          std::to_string(bytes.size()) + " but header implies " +
                          std::to_string(expected));
    ScoreMap map(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    const std::uint8_t* p = bytes.data() + kSgsmHeaderSize;
    for (size_t i = 0; i < map.data.size(); ++i, p += 4) {
        std::uint32_t bits = detail::get_u32_le(p);
        std::memcpy(&map.data[i], &bits, 4);
    }
    return map;
}

inline ScoreMap read_score_map(const std::string& path) {
    return decode_score_map(detail::slurp(path), "'" + path + "'");
}

// ---------------------------------------------------------------------------
// PNG / PGM rasters via libpng. Label masks are 8-bit indexed PNG with the
// Pascal palette (PGM P5 accepted as fallback input); binary masks are 8-bit
// grayscale PNG with 0/255; images are plain RGB8.
// ---------------------------------------------------------------------------

namespace detail {

struct PngRead {
    FILE* f = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngRead() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (f) std::fclose(f);
    }
};

struct PngWrite {
    FILE* f = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWrite() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (f) std::fclose(f);
    }
};

// Opens a PNG, checks the signature and reads the header. Throws FormatError
// via longjmp on any libpng failure.
inline void png_open_for_read(PngRead& r, const std::string& path) {
    r.f = std::fopen(path.c_str(), "rb");
    if (!r.f) throw IoError("cannot open '" + path + "' for reading");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, r.f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw FormatError("'" + path + "': not a PNG file");
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw ResourceError("libpng: cannot allocate read struct");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw ResourceError("libpng: cannot allocate info struct");
    if (setjmp(png_jmpbuf(r.png)))
        throw FormatError("'" + path + "': corrupt PNG stream");
    png_init_io(r.png, r.f);
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);
}

inline bool looks_like_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0;
}

// Single-channel 8-bit read (palette indices kept as indices).
inline void read_png_indices(const std::string& path, int& h, int& w,
                             std::vector<std::uint8_t>& pixels) {
    PngRead r;
    png_open_for_read(r, path);
    if (setjmp(png_jmpbuf(r.png)))
        throw FormatError("'" + path + "': corrupt PNG stream");
    const int color = png_get_color_type(r.png, r.info);
    const int depth = png_get_bit_depth(r.png, r.info);
    if (depth == 16)
        throw FormatError("'" + path + "': 16-bit PNG not accepted for label data");
    if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY)
        throw FormatError("'" + path + "': multi-channel PNG not accepted for label data");
    if (depth < 8) png_set_packing(r.png); // one byte per pixel
    png_read_update_info(r.png, r.info);
    w = static_cast<int>(png_get_image_width(r.png, r.info));
    h = static_cast<int>(png_get_image_height(r.png, r.info));
    if (h <= 0 || w <= 0) throw FormatError("'" + path + "': empty PNG");
    pixels.assign(static_cast<size_t>(h) * w, 0);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = pixels.data() + static_cast<size_t>(y) * w;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
}

inline void write_png_single_channel(const std::string& path, int h, int w,
                                     const std::uint8_t* pixels, bool palette) {
    PngWrite wr;
    wr.f = std::fopen(path.c_str(), "wb");
    if (!wr.f) throw IoError("cannot open '" + path + "' for writing");
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wr.png) throw ResourceError("libpng: cannot allocate write struct");
    wr.info = png_create_info_struct(wr.png);
    if (!wr.info) throw ResourceError("libpng: cannot allocate info struct");
    if (setjmp(png_jmpbuf(wr.png)))
        throw IoError("'" + path + "': PNG write failure");
    png_init_io(wr.png, wr.f);
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 palette ? PNG_COLOR_TYPE_PALETTE : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> plte;
    if (palette) {
        const auto& pal = pascal_palette();
        plte.resize(256);
        for (int i = 0; i < 256; ++i) {
            plte[static_cast<size_t>(i)].red = pal[static_cast<size_t>(i)][0];
            plte[static_cast<size_t>(i)].green = pal[static_cast<size_t>(i)][1];
            plte[static_cast<size_t>(i)].blue = pal[static_cast<size_t>(i)][2];
        }
        png_set_PLTE(wr.png, wr.info, plte.data(), 256);
    }
    png_write_info(wr.png, wr.info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(pixels + static_cast<size_t>(y) * w);
    png_write_image(wr.png, rows.data());
    png_write_end(wr.png, nullptr);
}

inline LabelMask read_pgm_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string magic;
    in >> magic;
    if (magic != "P5") throw FormatError("'" + path + "': not a binary PGM (P5) file");
    auto next_int = [&](const char* what) {
        // skip whitespace and '#' comment lines
        for (;;) {
            int ch = in.peek();
            if (ch == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(ch)) {
                in.get();
            } else {
                break;
            }
        }
        long v = -1;
        in >> v;
        if (!in || v < 0) throw FormatError("'" + path + "': bad " + std::string(what) + " field");
        return v;
    };
    const long w = next_int("width");
    const long h = next_int("height");
    const long maxval = next_int("maxval");
    if (w <= 0 || h <= 0) throw FormatError("'" + path + "': zero dimension");
    if (maxval > 255) throw FormatError("'" + path + "': 16-bit PGM not accepted");
    in.get(); // single whitespace after maxval
    LabelMask mask(static_cast<int>(h), static_cast<int>(w));
    in.read(reinterpret_cast<char*>(mask.data.data()),
            static_cast<std::streamsize>(mask.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(mask.data.size()))
        throw FormatError("'" + path + "': truncated PGM payload");
    return mask;
}

} // namespace detail

inline LabelMask read_label_mask(const std::string& path, int num_classes = 20) {
    LabelMask mask;
    if (detail::looks_like_png(path)) {
        detail::read_png_indices(path, mask.height, mask.width, mask.data);
    } else {
        mask = detail::read_pgm_mask(path);
    }
    validate_label_mask(mask, num_classes, "'" + path + "'");
    return mask;
}

inline void write_label_mask(const LabelMask& mask, const std::string& path) {
    detail::write_png_single_channel(path, mask.height, mask.width, mask.data.data(),
                                     /*palette=*/true);
}

inline BinaryMask read_binary_mask(const std::string& path) {
    int h = 0, w = 0;
    std::vector<std::uint8_t> px;
    detail::read_png_indices(path, h, w, px);
    BinaryMask mask(h, w);
    for (size_t i = 0; i < px.size(); ++i) {
        if (px[i] == 0)
            mask.data[i] = 0;
        else if (px[i] == 255)
            mask.data[i] = 1;
        else
            throw FormatError("'" + path + "': binary mask pixel " + std::to_string(i) +
                              " has value " + std::to_string(px[i]) + ", expected 0 or 255");
    }
    return mask;
}

inline void write_binary_mask(const BinaryMask& mask, const std::string& path) {
    std::vector<std::uint8_t> px(mask.data.size());
    for (size_t i = 0; i < px.size(); ++i) px[i] = mask.data[i] ? 255 : 0;
    detail::write_png_single_channel(path, mask.height, mask.width, px.data(),
                                     /*palette=*/false);
}

inline RgbImage read_rgb_image(const std::string& path) {
    detail::PngRead r;
    detail::png_open_for_read(r, path);
    if (setjmp(png_jmpbuf(r.png)))
        throw FormatError("'" + path + "': corrupt PNG stream");
    // Normalize whatever comes in to RGB8.
    const int color = png_get_color_type(r.png, r.info);
    const int depth = png_get_bit_depth(r.png, r.info);
    if (depth == 16) png_set_strip_16(r.png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
        png_set_gray_to_rgb(r.png);
    }
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);
    const int w = static_cast<int>(png_get_image_width(r.png, r.info));
    const int h = static_cast<int>(png_get_image_height(r.png, r.info));
    if (png_get_channels(r.png, r.info) != 3)
        throw FormatError("'" + path + "': cannot normalize to RGB8");
    RgbImage img(h, w);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = img.data.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return img;
}

inline void write_rgb_image(const RgbImage& img, const std::string& path) {
    detail::PngWrite wr;
    wr.f = std::fopen(path.c_str(), "wb");
    if (!wr.f) throw IoError("cannot open '" + path + "' for writing");
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wr.png) throw ResourceError("libpng: cannot allocate write struct");
    wr.info = png_create_info_struct(wr.png);
    if (!wr.info) throw ResourceError("libpng: cannot allocate info struct");
    if (setjmp(png_jmpbuf(wr.png)))
        throw IoError("'" + path + "': PNG write failure");
    png_init_io(wr.png, wr.f);
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
            img.data.data() + static_cast<size_t>(y) * img.width * 3);
    png_write_image(wr.png, rows.data());
    png_write_end(wr.png, nullptr);
}

} // namespace guideseg
