#pragma once
// Images, rectangles, 2x2 partitions and masking.
//
// Pixels are addressed (x, y) with x along the row; buffers are row-major and
// interleaved, one byte per channel. A pixel is "masked" when every channel
// equals the mask color.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "compex/errors.hpp"

namespace compex {

using PixelIndex = std::uint32_t;

// Sorted, duplicate-free row-major pixel indices.
using PixelSet = std::vector<PixelIndex>;

struct Rect {
    std::uint32_t x0 = 0;
    std::uint32_t y0 = 0;
    std::uint32_t w = 0;
    std::uint32_t h = 0;

    std::uint64_t area() const noexcept { return std::uint64_t{w} * h; }
    std::uint32_t x1() const noexcept { return x0 + w; }
    std::uint32_t y1() const noexcept { return y0 + h; }
    bool contains(std::uint32_t x, std::uint32_t y) const noexcept {
        return x >= x0 && x < x1() && y >= y0 && y < y1();
    }
    bool contains(const Rect& o) const noexcept {
        return o.x0 >= x0 && o.y0 >= y0 && o.x1() <= x1() && o.y1() <= y1();
    }
    bool intersects(const Rect& o) const noexcept {
        return x0 < o.x1() && o.x0 < x1() && y0 < o.y1() && o.y0 < y1();
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

inline std::string to_string(const Rect& r) {
    return "Rect(" + std::to_string(r.x0) + "," + std::to_string(r.y0) + "," +
           std::to_string(r.w) + "," + std::to_string(r.h) + ")";
}

// Per-channel masking value. A three-channel gray color (r == g == b) may mask
// single-channel images; a single-channel color broadcasts to every channel.
class MaskColor {
public:
    constexpr MaskColor() = default;
    static constexpr MaskColor gray(std::uint8_t v) { return MaskColor({v, v, v}, 1); }
    static constexpr MaskColor rgb(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        return MaskColor({r, g, b}, 3);
    }

    std::uint32_t channels() const noexcept { return channels_; }
    std::uint8_t operator[](std::uint32_t c) const noexcept { return channels_ == 1 ? value_[0] : value_[c]; }

    bool is_gray() const noexcept { return value_[0] == value_[1] && value_[1] == value_[2]; }
    bool compatible_with(std::uint32_t image_channels) const noexcept {
        return channels_ == 1 || image_channels == 3 || is_gray();
    }

    friend bool operator==(const MaskColor&, const MaskColor&) = default;

private:
    constexpr MaskColor(std::array<std::uint8_t, 3> v, std::uint32_t ch) : value_(v), channels_(ch) {}

    std::array<std::uint8_t, 3> value_{0, 0, 0};
    std::uint32_t channels_ = 3;
};

class Image {
public:
    Image() = default;

    Image(std::uint32_t width, std::uint32_t height, std::uint32_t channels, std::uint8_t fill = 0)
        : width_(width), height_(height), channels_(channels) {
        validate_shape();
        data_.assign(std::size_t{width} * height * channels, fill);
    }

    Image(std::uint32_t width, std::uint32_t height, std::uint32_t channels, std::vector<std::uint8_t> data)
        : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != std::size_t{width} * height * channels) {
            throw ConfigError("image buffer size does not match width*height*channels");
        }
    }

    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t height() const noexcept { return height_; }
    std::uint32_t channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return std::size_t{width_} * height_; }
    Rect bounds() const noexcept { return {0, 0, width_, height_}; }

    std::span<const std::uint8_t> bytes() const noexcept { return data_; }
    std::span<std::uint8_t> bytes() noexcept { return data_; }

    PixelIndex index(std::uint32_t x, std::uint32_t y) const noexcept { return y * width_ + x; }
    std::pair<std::uint32_t, std::uint32_t> coords(PixelIndex p) const noexcept {
        return {p % width_, p / width_};
    }

    std::uint8_t at(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) const {
        check(x, y, c);
        return data_[(std::size_t{index(x, y)}) * channels_ + c];
    }
    std::uint8_t& at(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) {
        check(x, y, c);
        return data_[(std::size_t{index(x, y)}) * channels_ + c];
    }

    std::span<const std::uint8_t> pixel(PixelIndex p) const noexcept {
        return std::span<const std::uint8_t>(data_).subspan(std::size_t{p} * channels_, channels_);
    }

    void set_pixel(PixelIndex p, const MaskColor& color) noexcept {
        auto* px = data_.data() + std::size_t{p} * channels_;
        for (std::uint32_t c = 0; c < channels_; ++c) px[c] = color[c];
    }

    void copy_pixel_from(const Image& src, PixelIndex p) noexcept {
        auto* dst = data_.data() + std::size_t{p} * channels_;
        const auto* s = src.data_.data() + std::size_t{p} * channels_;
        std::copy(s, s + channels_, dst);
    }

    bool pixel_equals(PixelIndex p, const MaskColor& color) const noexcept {
        const auto* px = data_.data() + std::size_t{p} * channels_;
        for (std::uint32_t c = 0; c < channels_; ++c) {
            if (px[c] != color[c]) return false;
        }
        return true;
    }

    bool same_shape(const Image& o) const noexcept {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    void validate_shape() const {
        if (width_ == 0 || height_ == 0) throw ConfigError("image dimensions must be positive");
        if (channels_ != 1 && channels_ != 3) throw ConfigError("image must have 1 or 3 channels");
    }
    void check(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
        if (x >= width_ || y >= height_ || c >= channels_) {
            throw BoundsError("pixel (" + std::to_string(x) + "," + std::to_string(y) + ") outside image");
        }
    }

    std::uint32_t width_ = 0;
    std::uint32_t height_ = 0;
    std::uint32_t channels_ = 0;
    std::vector<std::uint8_t> data_;
};

inline void check_color(const Image& image, const MaskColor& color) {
    if (!color.compatible_with(image.channels())) {
        throw ConfigError("mask color is not compatible with a single-channel image");
    }
}

inline void check_region(const Image& image, const Rect& r) {
    if (r.w == 0 || r.h == 0 || !image.bounds().contains(r)) {
        throw BoundsError(to_string(r) + " does not fit inside the " + std::to_string(image.width()) +
                          "x" + std::to_string(image.height()) + " image");
    }
}

// Fill `r` with `color` in place. No bounds checking.
inline void fill_rect(Image& image, const Rect& r, const MaskColor& color) {
    for (std::uint32_t y = r.y0; y < r.y1(); ++y) {
        for (std::uint32_t x = r.x0; x < r.x1(); ++x) image.set_pixel(image.index(x, y), color);
    }
}

inline Image apply_mask(const Image& image, std::span<const Rect> regions, const MaskColor& color) {
    check_color(image, color);
    for (const auto& r : regions) check_region(image, r);
    Image out = image;
    for (const auto& r : regions) fill_rect(out, r, color);
    return out;
}

inline Image apply_mask(const Image& image, std::initializer_list<Rect> regions, const MaskColor& color) {
    return apply_mask(image, std::span<const Rect>(regions.begin(), regions.size()), color);
}

// Keep the pixels in `keep`, mask everything else.
inline Image mask_outside(const Image& image, std::span<const PixelIndex> keep, const MaskColor& color) {
    check_color(image, color);
    Image out(image.width(), image.height(), image.channels());
    for (PixelIndex p = 0; p < image.pixel_count(); ++p) out.set_pixel(p, color);
    for (PixelIndex p : keep) {
        if (p >= image.pixel_count()) throw BoundsError("pixel index outside image");
        out.copy_pixel_from(image, p);
    }
    return out;
}

inline PixelSet rect_pixels(const Rect& r, std::uint32_t image_width) {
    PixelSet out;
    out.reserve(r.area());
    for (std::uint32_t y = r.y0; y < r.y1(); ++y) {
        for (std::uint32_t x = r.x0; x < r.x1(); ++x) out.push_back(y * image_width + x);
    }
    return out;
}

// Bitset over the parts of a partition.
class MaskSet {
public:
    constexpr MaskSet() = default;
    constexpr explicit MaskSet(std::uint32_t bits) : bits_(bits) {}

    constexpr std::uint32_t bits() const noexcept { return bits_; }
    constexpr bool contains(std::size_t part) const noexcept { return (bits_ >> part) & 1u; }
    constexpr MaskSet with(std::size_t part) const noexcept { return MaskSet(bits_ | (1u << part)); }
    constexpr bool empty() const noexcept { return bits_ == 0; }

    friend constexpr bool operator==(MaskSet, MaskSet) = default;
    friend constexpr auto operator<=>(MaskSet, MaskSet) = default;

private:
    std::uint32_t bits_ = 0;
};

// Number of masked parts.
constexpr std::uint32_t diff(MaskSet mask) noexcept { return static_cast<std::uint32_t>(std::popcount(mask.bits())); }

inline constexpr std::size_t kPartsPerPartition = 4;
inline constexpr std::uint32_t kMutantCount = 1u << kPartsPerPartition;

// 2x2 split of `parent`. Part order: top-left, top-right, bottom-left, bottom-right.
struct Partition {
    Rect parent;
    std::array<Rect, kPartsPerPartition> parts;

    std::vector<Rect> masked_regions(MaskSet m) const {
        std::vector<Rect> out;
        for (std::size_t j = 0; j < parts.size(); ++j) {
            if (m.contains(j)) out.push_back(parts[j]);
        }
        return out;
    }

    friend bool operator==(const Partition&, const Partition&) = default;
};

// Inclusive central band [ceil(0.3 n), floor(0.7 n)] of split offsets for an extent n >= 2.
constexpr std::pair<std::uint32_t, std::uint32_t> split_band(std::uint32_t extent) noexcept {
    const std::uint32_t lo = (3 * extent + 9) / 10;
    const std::uint32_t hi = (7 * extent) / 10;
    return {std::max<std::uint32_t>(lo, 1), std::min<std::uint32_t>(hi, extent - 1)};
}

template <class Rng>
std::uint32_t draw_below(Rng& rng, std::uint32_t n) {
    return static_cast<std::uint32_t>(static_cast<std::uint64_t>(rng() - Rng::min()) % n);
}

inline Partition split_at(const Rect& parent, std::uint32_t cx, std::uint32_t cy) {
    if (cx == 0 || cy == 0 || cx >= parent.w || cy >= parent.h) {
        throw DegenerateRegion("split point outside " + to_string(parent));
    }
    Partition p;
    p.parent = parent;
    p.parts[0] = {parent.x0, parent.y0, cx, cy};
    p.parts[1] = {parent.x0 + cx, parent.y0, parent.w - cx, cy};
    p.parts[2] = {parent.x0, parent.y0 + cy, cx, parent.h - cy};
    p.parts[3] = {parent.x0 + cx, parent.y0 + cy, parent.w - cx, parent.h - cy};
    return p;
}

// Jittered 2x2 split with the split point drawn from the central band on each axis.
// Draw order is x then y.
template <class Rng>
Partition sample_partition(const Rect& parent, Rng& rng) {
    if (parent.w < 2 || parent.h < 2) {
        throw DegenerateRegion(to_string(parent) + " is too small to split");
    }
    const auto [xlo, xhi] = split_band(parent.w);
    const auto [ylo, yhi] = split_band(parent.h);
    const std::uint32_t cx = xlo + draw_below(rng, xhi - xlo + 1);
    const std::uint32_t cy = ylo + draw_below(rng, yhi - ylo + 1);
    return split_at(parent, cx, cy);
}

// All 2^s maskings of the partition's parts, ordered by bitset value. Entry 0 is the input.
inline std::vector<std::pair<MaskSet, Image>> enumerate_mutants(const Image& image, const Partition& partition,
                                                                const MaskColor& color) {
    check_color(image, color);
    check_region(image, partition.parent);
    std::vector<std::pair<MaskSet, Image>> out;
    out.reserve(kMutantCount);
    for (std::uint32_t bits = 0; bits < kMutantCount; ++bits) {
        const MaskSet m(bits);
        Image mutant = image;
        for (std::size_t j = 0; j < partition.parts.size(); ++j) {
            if (m.contains(j)) fill_rect(mutant, partition.parts[j], color);
        }
        out.emplace_back(m, std::move(mutant));
    }
    return out;
}

}  // namespace compex
