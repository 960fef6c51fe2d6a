#pragma once
// Deterministic test classifiers with known causal structure.
//
//   monotone-threshold  positive iff at least `threshold` object pixels are unmasked
//   template            positive iff every region pixel equals its expected value
//   constant            always the same label
//
// Config files are JSON objects:
//
//   {
//     "kind": "monotone-threshold",
//     "width": 4, "height": 4, "channels": 1,        optional; pins the input shape
//     "mask_color": [0, 0, 0],                       optional; default black
//     "positive_label": "object",                    optional
//     "negative_label": "background",                optional
//     "object_pixels": [0, 1, 5],                    row-major indices, and/or
//     "object_rects": [[x, y, w, h], ...],
//     "threshold": 2
//   }
//
// Template configs replace object/threshold with "region_pixels"/"region_rects"
// and either "expected": [byte, ...] (region pixels in ascending index order,
// channels interleaved) or "template_image": "<path>" relative to the config
// file. Constant configs carry "label".

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "compex/classifier.hpp"
#include "compex/errors.hpp"
#include "compex/image.hpp"
#include "compex/image_io.hpp"

namespace compex {

inline constexpr const char* kDefaultPositive = "object";
inline constexpr const char* kDefaultNegative = "background";

class MonotoneThresholdClassifier final : public Classifier {
public:
    MonotoneThresholdClassifier(PixelSet object, std::uint32_t threshold, MaskColor mask_color = {},
                                std::string positive = kDefaultPositive, std::string negative = kDefaultNegative)
        : object_(normalize(std::move(object))), threshold_(threshold), mask_color_(mask_color),
          positive_(std::move(positive)), negative_(std::move(negative)) {
        if (object_.empty()) throw ConfigError("monotone-threshold classifier needs a nonempty object mask");
        if (threshold_ < 1 || threshold_ > object_.size()) {
            throw ConfigError("threshold must lie in [1, |object|]");
        }
    }

    std::size_t unmasked_object_pixels(const Image& image) const {
        std::size_t n = 0;
        for (PixelIndex p : object_) {
            if (p >= image.pixel_count()) throw ConfigError("object pixel outside image");
            if (!image.pixel_equals(p, mask_color_)) ++n;
        }
        return n;
    }

    Verdict classify(const Image& image) override {
        return {unmasked_object_pixels(image) >= threshold_ ? positive_ : negative_, std::nullopt};
    }

    const PixelSet& object() const noexcept { return object_; }
    std::uint32_t threshold() const noexcept { return threshold_; }

private:
    static PixelSet normalize(PixelSet s) {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
        return s;
    }

    PixelSet object_;
    std::uint32_t threshold_;
    MaskColor mask_color_;
    std::string positive_;
    std::string negative_;
};

class TemplateClassifier final : public Classifier {
public:
    // `expected` holds channels bytes per region pixel, in ascending pixel order.
    TemplateClassifier(PixelSet region, std::uint32_t channels, std::vector<std::uint8_t> expected,
                       MaskColor mask_color = {}, std::string positive = kDefaultPositive,
                       std::string negative = kDefaultNegative)
        : region_(std::move(region)), channels_(channels), expected_(std::move(expected)),
          positive_(std::move(positive)), negative_(std::move(negative)) {
        if (region_.empty()) throw ConfigError("template classifier needs a nonempty region");
        if (!std::is_sorted(region_.begin(), region_.end()) ||
            std::adjacent_find(region_.begin(), region_.end()) != region_.end()) {
            throw ConfigError("template region must be sorted and duplicate-free");
        }
        if (expected_.size() != region_.size() * channels_) {
            throw ConfigError("template expects one value per region pixel and channel");
        }
        for (std::size_t i = 0; i < region_.size(); ++i) {
            bool equal = true;
            for (std::uint32_t c = 0; c < channels_; ++c) equal &= expected_[i * channels_ + c] == mask_color[c];
            if (equal) throw ConfigError("template pixel value coincides with the mask color");
        }
    }

    // Template whose expected values are read from `reference` over `region`.
    static std::shared_ptr<TemplateClassifier> from_image(const Image& reference, PixelSet region,
                                                          MaskColor mask_color = {},
                                                          std::string positive = kDefaultPositive,
                                                          std::string negative = kDefaultNegative) {
        std::sort(region.begin(), region.end());
        region.erase(std::unique(region.begin(), region.end()), region.end());
        std::vector<std::uint8_t> expected;
        for (PixelIndex p : region) {
            if (p >= reference.pixel_count()) throw ConfigError("template region outside image");
            auto px = reference.pixel(p);
            expected.insert(expected.end(), px.begin(), px.end());
        }
        return std::make_shared<TemplateClassifier>(std::move(region), reference.channels(), std::move(expected),
                                                    mask_color, std::move(positive), std::move(negative));
    }

    bool matches(const Image& image) const {
        if (image.channels() != channels_) throw ConfigError("template channel count mismatch");
        for (std::size_t i = 0; i < region_.size(); ++i) {
            if (region_[i] >= image.pixel_count()) throw ConfigError("template region outside image");
            auto px = image.pixel(region_[i]);
            if (!std::equal(px.begin(), px.end(), expected_.begin() + static_cast<std::ptrdiff_t>(i * channels_))) {
                return false;
            }
        }
        return true;
    }

    Verdict classify(const Image& image) override { return {matches(image) ? positive_ : negative_, std::nullopt}; }

    const PixelSet& region() const noexcept { return region_; }

private:
    PixelSet region_;
    std::uint32_t channels_;
    std::vector<std::uint8_t> expected_;
    std::string positive_;
    std::string negative_;
};

class ConstantClassifier final : public Classifier {
public:
    explicit ConstantClassifier(std::string label = "constant") : label_(std::move(label)) {}
    Verdict classify(const Image&) override { return {label_, std::nullopt}; }

private:
    std::string label_;
};

// Parsed synthetic config.
struct SyntheticSpec {
    enum class Kind { MonotoneThreshold, Template, Constant };

    Kind kind = Kind::MonotoneThreshold;
    std::optional<ImageShape> shape;
    MaskColor mask_color;
    std::string positive_label = kDefaultPositive;
    std::string negative_label = kDefaultNegative;
    PixelSet pixels;  // object mask or template region
    std::uint32_t threshold = 1;
    std::uint32_t channels = 1;
    std::vector<std::uint8_t> expected;
    std::string constant_label = "constant";

    std::shared_ptr<Classifier> build() const {
        switch (kind) {
            case Kind::MonotoneThreshold:
                return std::make_shared<MonotoneThresholdClassifier>(pixels, threshold, mask_color, positive_label,
                                                                     negative_label);
            case Kind::Template:
                return std::make_shared<TemplateClassifier>(pixels, channels, expected, mask_color, positive_label,
                                                            negative_label);
            case Kind::Constant:
                return std::make_shared<ConstantClassifier>(constant_label);
        }
        throw ConfigError("unknown synthetic kind");
    }
};

inline MaskColor mask_color_from_json(const nlohmann::json& j) {
    if (!j.is_array() || (j.size() != 1 && j.size() != 3)) throw ConfigError("mask_color must be [v] or [r, g, b]");
    auto byte = [](const nlohmann::json& v) {
        if (!v.is_number_integer() || v.get<int>() < 0 || v.get<int>() > 255) {
            throw ConfigError("mask_color entries must be integers in [0, 255]");
        }
        return static_cast<std::uint8_t>(v.get<int>());
    };
    if (j.size() == 1) return MaskColor::gray(byte(j[0]));
    return MaskColor::rgb(byte(j[0]), byte(j[1]), byte(j[2]));
}

inline nlohmann::json mask_color_to_json(const MaskColor& c) {
    if (c.channels() == 1) return nlohmann::json::array({c[0]});
    return nlohmann::json::array({c[0], c[1], c[2]});
}

namespace detail {

inline PixelSet read_pixel_set(const nlohmann::json& cfg, const std::string& prefix,
                               const std::optional<ImageShape>& shape) {
    PixelSet out;
    if (auto it = cfg.find(prefix + "_pixels"); it != cfg.end()) {
        for (const auto& v : *it) out.push_back(v.get<PixelIndex>());
    }
    if (auto it = cfg.find(prefix + "_rects"); it != cfg.end()) {
        if (!shape) throw ConfigError(prefix + "_rects requires width/height/channels");
        for (const auto& r : *it) {
            if (!r.is_array() || r.size() != 4) throw ConfigError(prefix + "_rects entries are [x, y, w, h]");
            Rect rect{r[0].get<std::uint32_t>(), r[1].get<std::uint32_t>(), r[2].get<std::uint32_t>(),
                      r[3].get<std::uint32_t>()};
            if (rect.w == 0 || rect.h == 0 || rect.x1() > shape->width || rect.y1() > shape->height) {
                throw ConfigError(prefix + "_rects entry " + to_string(rect) + " outside image");
            }
            auto px = rect_pixels(rect, shape->width);
            out.insert(out.end(), px.begin(), px.end());
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (shape) {
        for (PixelIndex p : out) {
            if (p >= std::size_t{shape->width} * shape->height) throw ConfigError(prefix + " pixel outside image");
        }
    }
    return out;
}

}  // namespace detail

// `base_dir` resolves relative template_image paths.
inline SyntheticSpec parse_synthetic_spec(const nlohmann::json& cfg, const std::filesystem::path& base_dir = {}) {
    try {
        if (!cfg.is_object()) throw ConfigError("synthetic config must be a JSON object");
        SyntheticSpec spec;
        const auto kind = cfg.at("kind").get<std::string>();
        if (cfg.contains("width") || cfg.contains("height") || cfg.contains("channels")) {
            spec.shape = ImageShape{cfg.at("width").get<std::uint32_t>(), cfg.at("height").get<std::uint32_t>(),
                                    cfg.value("channels", 1u)};
        }
        if (cfg.contains("mask_color")) spec.mask_color = mask_color_from_json(cfg["mask_color"]);
        spec.positive_label = cfg.value("positive_label", std::string(kDefaultPositive));
        spec.negative_label = cfg.value("negative_label", std::string(kDefaultNegative));

        if (kind == "monotone-threshold") {
            spec.kind = SyntheticSpec::Kind::MonotoneThreshold;
            spec.pixels = detail::read_pixel_set(cfg, "object", spec.shape);
            spec.threshold = cfg.at("threshold").get<std::uint32_t>();
            if (spec.pixels.empty()) throw ConfigError("object mask is empty");
            if (spec.threshold < 1 || spec.threshold > spec.pixels.size()) {
                throw ConfigError("threshold must lie in [1, |object|]");
            }
        } else if (kind == "template") {
            spec.kind = SyntheticSpec::Kind::Template;
            spec.pixels = detail::read_pixel_set(cfg, "region", spec.shape);
            if (spec.pixels.empty()) throw ConfigError("template region is empty");
            if (cfg.contains("template_image")) {
                const Image ref = read_image(base_dir / cfg["template_image"].get<std::string>());
                if (spec.shape && *spec.shape != shape_of(ref)) {
                    throw ConfigError("template_image shape differs from width/height/channels");
                }
                spec.channels = ref.channels();
                for (PixelIndex p : spec.pixels) {
                    if (p >= ref.pixel_count()) throw ConfigError("region pixel outside template image");
                    auto px = ref.pixel(p);
                    spec.expected.insert(spec.expected.end(), px.begin(), px.end());
                }
            } else {
                spec.channels = spec.shape ? spec.shape->channels : 1;
                spec.expected = cfg.at("expected").get<std::vector<std::uint8_t>>();
            }
        } else if (kind == "constant") {
            spec.kind = SyntheticSpec::Kind::Constant;
            spec.constant_label = cfg.value("label", std::string("constant"));
        } else {
            throw ConfigError("unknown synthetic kind '" + kind + "'");
        }
        spec.build();  // validates the remaining invariants
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic config: ") + e.what());
    } catch (const IoError& e) {
        throw ConfigError(std::string("synthetic config: ") + e.what());
    }
}

inline SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open synthetic config " + path.string());
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("synthetic config " + path.string() + ": " + e.what());
    }
    return parse_synthetic_spec(cfg, path.parent_path());
}

inline nlohmann::json to_json(const SyntheticSpec& spec) {
    nlohmann::json j;
    switch (spec.kind) {
        case SyntheticSpec::Kind::MonotoneThreshold:
            j["kind"] = "monotone-threshold";
            j["object_pixels"] = spec.pixels;
            j["threshold"] = spec.threshold;
            break;
        case SyntheticSpec::Kind::Template:
            j["kind"] = "template";
            j["region_pixels"] = spec.pixels;
            j["expected"] = spec.expected;
            break;
        case SyntheticSpec::Kind::Constant:
            j["kind"] = "constant";
            j["label"] = spec.constant_label;
            break;
    }
    if (spec.shape) {
        j["width"] = spec.shape->width;
        j["height"] = spec.shape->height;
        j["channels"] = spec.shape->channels;
    }
    j["mask_color"] = mask_color_to_json(spec.mask_color);
    if (spec.kind != SyntheticSpec::Kind::Constant) {
        j["positive_label"] = spec.positive_label;
        j["negative_label"] = spec.negative_label;
    }
    return j;
}

}  // namespace compex
