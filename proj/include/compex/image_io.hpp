#pragma once
// Lossless image I/O: PNG (libpng simplified API) and binary PGM/PPM.
// Masks are single-channel images with 255 for members and 0 otherwise.

#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "compex/errors.hpp"
#include "compex/image.hpp"

namespace compex {

namespace detail {

inline std::string lower_ext(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext;
}

inline Image read_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + png.message);
    }
    const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
    png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const std::uint32_t channels = gray ? 1 : 3;
    std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, data.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return Image(png.width, png.height, channels, std::move(data));
}

inline void write_png(const std::filesystem::path& path, const Image& image) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = image.width();
    png.height = image.height();
    png.format = image.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.bytes().data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + png.message);
    }
}

inline std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

inline Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto magic = next_token(in);
    if (magic != "P5" && magic != "P6") throw IoError(path.string() + ": only binary P5/P6 is supported");
    std::uint32_t w = 0, h = 0, maxval = 0;
    try {
        w = static_cast<std::uint32_t>(std::stoul(next_token(in)));
        h = static_cast<std::uint32_t>(std::stoul(next_token(in)));
        maxval = static_cast<std::uint32_t>(std::stoul(next_token(in)));
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PNM header");
    }
    if (maxval != 255) throw IoError(path.string() + ": only 8-bit PNM is supported");
    const std::uint32_t channels = magic == "P5" ? 1 : 3;
    std::vector<std::uint8_t> data(std::size_t{w} * h * channels);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size())) throw IoError(path.string() + ": truncated");
    try {
        return Image(w, h, channels, std::move(data));
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

inline void write_pnm(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << (image.channels() == 1 ? "P5" : "P6") << '\n' << image.width() << ' ' << image.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.bytes().data()), static_cast<std::streamsize>(image.bytes().size()));
    if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace detail

inline Image read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such image " + path.string());
    const auto ext = detail::lower_ext(path);
    if (ext == ".png") return detail::read_png(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::read_pnm(path);
    throw IoError(path.string() + ": unsupported image format (use .png, .ppm, .pgm)");
}

inline void write_image(const std::filesystem::path& path, const Image& image) {
    const auto ext = detail::lower_ext(path);
    if (ext == ".png") return detail::write_png(path, image);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::write_pnm(path, image);
    throw IoError(path.string() + ": unsupported image format (use .png, .ppm, .pgm)");
}

inline Image mask_image(std::span<const PixelIndex> members, std::uint32_t width, std::uint32_t height) {
    Image out(width, height, 1, std::uint8_t{0});
    for (PixelIndex p : members) {
        if (p >= out.pixel_count()) throw BoundsError("mask member outside image");
        out.bytes()[p] = 255;
    }
    return out;
}

// Members are pixels with value >= 128 in the first channel.
inline PixelSet mask_members(const Image& mask) {
    PixelSet out;
    for (PixelIndex p = 0; p < mask.pixel_count(); ++p) {
        if (mask.pixel(p)[0] >= 128) out.push_back(p);
    }
    return out;
}

inline void write_mask(const std::filesystem::path& path, std::span<const PixelIndex> members, std::uint32_t width,
                       std::uint32_t height) {
    write_image(path, mask_image(members, width, height));
}

inline PixelSet read_mask(const std::filesystem::path& path) { return mask_members(read_image(path)); }

}  // namespace compex
