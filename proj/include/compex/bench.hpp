#pragma once
// Occlusion benchmark ("photobomb") synthesis and explanation quality metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compex/classifier.hpp"
#include "compex/engine.hpp"
#include "compex/errors.hpp"
#include "compex/image.hpp"
#include "compex/rng.hpp"
#include "compex/synthetic.hpp"

namespace compex {

struct OcclusionSpec {
    enum class Shape { Rectangle, Disc, StripeSet };
    enum class Fill { Color, Texture, Original };

    Shape shape = Shape::Rectangle;

    // Explicit placement: one occluder per box. When empty, `count` boxes are
    // drawn inside `region` (whole image when unset) with extents in
    // [min_size, max_size], rejecting boxes that touch any `avoid` rect.
    std::vector<Rect> boxes;
    std::optional<Rect> region;
    std::uint32_t count = 1;
    std::uint32_t min_size = 4;
    std::uint32_t max_size = 12;
    std::vector<Rect> avoid;
    std::uint32_t margin = 0;

    Fill fill = Fill::Color;
    MaskColor color = MaskColor::rgb(255, 0, 255);
    MaskColor texture_alt = MaskColor::rgb(0, 255, 0);
    std::uint32_t texture_tile = 2;
    std::uint32_t stripe_width = 2;
};

struct BenchInstance {
    std::string id;
    Image original;
    Image occluded;
    PixelSet occlusion;                // pixels where occluded != original
    std::optional<PixelSet> object;    // ground-truth object mask, when known
    std::string label;                 // classifier label of the original image
};

namespace detail {

inline bool occluder_covers(const OcclusionSpec& spec, const Rect& box, std::uint32_t x, std::uint32_t y) {
    switch (spec.shape) {
        case OcclusionSpec::Shape::Rectangle:
            return true;
        case OcclusionSpec::Shape::Disc: {
            const double cx = box.x0 + box.w / 2.0, cy = box.y0 + box.h / 2.0;
            const double r = std::min(box.w, box.h) / 2.0;
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            return dx * dx + dy * dy <= r * r;
        }
        case OcclusionSpec::Shape::StripeSet:
            return ((y - box.y0) / std::max<std::uint32_t>(1, spec.stripe_width)) % 2 == 0;
    }
    return false;
}

inline Rect expand(const Rect& r, std::uint32_t m) {
    const std::uint32_t x0 = r.x0 >= m ? r.x0 - m : 0, y0 = r.y0 >= m ? r.y0 - m : 0;
    return {x0, y0, r.x1() + m - x0, r.y1() + m - y0};
}

template <class Rng>
std::vector<Rect> place_occluders(const OcclusionSpec& spec, const Image& image, Rng& rng) {
    const Rect bounds = image.bounds();
    if (!spec.boxes.empty()) {
        for (const auto& b : spec.boxes) {
            if (b.w == 0 || b.h == 0 || !bounds.contains(b)) {
                throw SpecError("occluder " + to_string(b) + " is outside the image");
            }
        }
        return spec.boxes;
    }
    const Rect area = spec.region.value_or(bounds);
    if (area.w == 0 || area.h == 0 || !bounds.contains(area)) throw SpecError("placement region outside the image");
    if (spec.min_size == 0 || spec.min_size > spec.max_size) throw SpecError("occluder sizes must satisfy 0 < min <= max");
    if (spec.min_size > area.w || spec.min_size > area.h) throw SpecError("occluders do not fit the placement region");

    std::vector<Rect> out;
    for (std::uint32_t i = 0; i < spec.count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const std::uint32_t wmax = std::min(spec.max_size, area.w), hmax = std::min(spec.max_size, area.h);
            const std::uint32_t w = spec.min_size + draw_below(rng, wmax - spec.min_size + 1);
            const std::uint32_t h = spec.min_size + draw_below(rng, hmax - spec.min_size + 1);
            const std::uint32_t x = area.x0 + draw_below(rng, area.w - w + 1);
            const std::uint32_t y = area.y0 + draw_below(rng, area.h - h + 1);
            const Rect box{x, y, w, h};
            const bool blocked = std::any_of(spec.avoid.begin(), spec.avoid.end(),
                                             [&](const Rect& a) { return expand(a, spec.margin).intersects(box); });
            if (!blocked) {
                out.push_back(box);
                placed = true;
            }
        }
        if (!placed) throw SpecError("could not place occluder " + std::to_string(i) + " clear of avoided regions");
    }
    return out;
}

}  // namespace detail

// Exact set of pixels whose bytes differ between the two images.
inline PixelSet difference_mask(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ConfigError("difference of differently shaped images");
    PixelSet out;
    for (PixelIndex p = 0; p < a.pixel_count(); ++p) {
        auto pa = a.pixel(p), pb = b.pixel(p);
        if (!std::equal(pa.begin(), pa.end(), pb.begin())) out.push_back(p);
    }
    return out;
}

template <class Rng>
BenchInstance generate_photobomb(const Image& image, const OcclusionSpec& spec, Rng& rng) {
    if (spec.fill != OcclusionSpec::Fill::Original) {
        if (!spec.color.compatible_with(image.channels()) || !spec.texture_alt.compatible_with(image.channels())) {
            throw SpecError("occluder fill color does not fit the image channels");
        }
    }
    const auto boxes = detail::place_occluders(spec, image, rng);
    BenchInstance inst;
    inst.original = image;
    inst.occluded = image;
    for (const auto& box : boxes) {
        for (std::uint32_t y = box.y0; y < box.y1(); ++y) {
            for (std::uint32_t x = box.x0; x < box.x1(); ++x) {
                if (!detail::occluder_covers(spec, box, x, y)) continue;
                const PixelIndex p = image.index(x, y);
                switch (spec.fill) {
                    case OcclusionSpec::Fill::Color:
                        inst.occluded.set_pixel(p, spec.color);
                        break;
                    case OcclusionSpec::Fill::Texture: {
                        const auto tile = std::max<std::uint32_t>(1, spec.texture_tile);
                        const bool alt = ((x - box.x0) / tile + (y - box.y0) / tile) % 2 == 1;
                        inst.occluded.set_pixel(p, alt ? spec.texture_alt : spec.color);
                        break;
                    }
                    case OcclusionSpec::Fill::Original:
                        break;
                }
            }
        }
    }
    inst.occlusion = difference_mask(inst.original, inst.occluded);
    return inst;
}

template <class Rng>
BenchInstance generate_photobomb(const Image& image, const OcclusionSpec& spec, Rng& rng, ClassifierHandle& handle) {
    auto inst = generate_photobomb(image, spec, rng);
    inst.label = handle.classify(image).label;
    return inst;
}

struct Intersection {
    std::size_t count = 0;
    double fraction = 0.0;  // of the explanation
};

inline Intersection intersection(PixelSet explanation, PixelSet occlusion) {
    std::sort(explanation.begin(), explanation.end());
    std::sort(occlusion.begin(), occlusion.end());
    explanation.erase(std::unique(explanation.begin(), explanation.end()), explanation.end());
    occlusion.erase(std::unique(occlusion.begin(), occlusion.end()), occlusion.end());
    PixelSet common;
    std::set_intersection(explanation.begin(), explanation.end(), occlusion.begin(), occlusion.end(),
                          std::back_inserter(common));
    Intersection out;
    out.count = common.size();
    out.fraction = explanation.empty() ? 0.0 : static_cast<double>(common.size()) / explanation.size();
    return out;
}

inline double iou(PixelSet a, PixelSet b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    if (a.empty() && b.empty()) throw UndefinedIou("IoU of two empty sets is undefined");
    PixelSet common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    const std::size_t uni = a.size() + b.size() - common.size();
    return static_cast<double>(common.size()) / static_cast<double>(uni);
}

// Uniformly random permutation. Scores fall strictly along the order so the
// result is a valid Ranking.
template <class Rng>
Ranking random_baseline_ranking(const Image& image, Rng& rng) {
    const std::size_t n = image.pixel_count();
    Ranking r;
    r.width = image.width();
    r.height = image.height();
    r.order.resize(n);
    std::iota(r.order.begin(), r.order.end(), PixelIndex{0});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = draw_below(rng, static_cast<std::uint32_t>(i));
        std::swap(r.order[i - 1], r.order[j]);
    }
    r.scores.assign(n, 0.0);
    for (std::size_t rank = 0; rank < n; ++rank) {
        r.scores[r.order[rank]] = static_cast<double>(n - rank) / static_cast<double>(n);
    }
    return r;
}

struct InstanceScore {
    std::string id;
    std::size_t explanation_size = 0;
    std::size_t total_pixels = 0;
    std::size_t intersection = 0;
    double intersection_fraction = 0.0;
    bool retained = false;
    std::optional<double> iou;

    double size_fraction() const noexcept {
        return total_pixels == 0 ? 0.0 : static_cast<double>(explanation_size) / static_cast<double>(total_pixels);
    }
};

inline InstanceScore score_instance(const BenchInstance& inst, const PixelSet& explanation, ClassifierHandle& handle,
                                    const MaskColor& color = {}) {
    InstanceScore s;
    s.id = inst.id;
    s.explanation_size = explanation.size();
    s.total_pixels = inst.occluded.pixel_count();
    const auto inter = intersection(explanation, inst.occlusion);
    s.intersection = inter.count;
    s.intersection_fraction = inter.fraction;
    s.retained = handle.classify(mask_outside(inst.occluded, explanation, color)).label == inst.label;
    if (inst.object && !(inst.object->empty() && explanation.empty())) s.iou = iou(explanation, *inst.object);
    return s;
}

enum class CurveAxis { Intersection, SizeFraction };

struct Curve {
    std::vector<std::pair<double, double>> points;  // x non-decreasing, y in [0, 1]
};

// y(x) = fraction of all instances with axis value <= x whose explanation
// retains the label. Sampled at every distinct axis value.
inline Curve retained_accuracy_curve(std::span<const InstanceScore> scores, CurveAxis axis) {
    if (scores.empty()) throw EmptyCorpus("retained-accuracy curve of an empty corpus");
    auto value = [&](const InstanceScore& s) {
        return axis == CurveAxis::Intersection ? static_cast<double>(s.intersection) : s.size_fraction();
    };
    std::vector<double> xs;
    for (const auto& s : scores) xs.push_back(value(s));
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    Curve c;
    for (double x : xs) {
        std::size_t hits = 0;
        for (const auto& s : scores) {
            if (value(s) <= x && s.retained) ++hits;
        }
        c.points.emplace_back(x, static_cast<double>(hits) / static_cast<double>(scores.size()));
    }
    return c;
}

inline Curve retained_accuracy_curve(std::span<const BenchInstance> corpus, std::span<const PixelSet> explanations,
                                     ClassifierHandle& handle, CurveAxis axis, const MaskColor& color = {}) {
    if (corpus.empty()) throw EmptyCorpus("retained-accuracy curve of an empty corpus");
    if (corpus.size() != explanations.size()) throw ConfigError("one explanation per instance is required");
    std::vector<InstanceScore> scores;
    for (std::size_t i = 0; i < corpus.size(); ++i) scores.push_back(score_instance(corpus[i], explanations[i], handle, color));
    return retained_accuracy_curve(scores, axis);
}

struct Aggregate {
    double zero_overlap_fraction = 0.0;
    double mean_size_fraction = 0.0;
    std::optional<double> mean_iou;
    double retained_fraction = 0.0;
};

inline Aggregate aggregate(std::span<const InstanceScore> scores) {
    if (scores.empty()) throw EmptyCorpus("aggregate of an empty corpus");
    Aggregate a;
    double iou_sum = 0.0;
    std::size_t iou_n = 0, zero = 0, kept = 0;
    for (const auto& s : scores) {
        zero += s.intersection == 0;
        kept += s.retained;
        a.mean_size_fraction += s.size_fraction();
        if (s.iou) {
            iou_sum += *s.iou;
            ++iou_n;
        }
    }
    const double n = static_cast<double>(scores.size());
    a.zero_overlap_fraction = zero / n;
    a.retained_fraction = kept / n;
    a.mean_size_fraction /= n;
    if (iou_n > 0) a.mean_iou = iou_sum / static_cast<double>(iou_n);
    return a;
}

inline nlohmann::json to_json(const Aggregate& a) {
    return {{"zero_overlap_fraction", a.zero_overlap_fraction},
            {"mean_size_fraction", a.mean_size_fraction},
            {"mean_iou", a.mean_iou ? nlohmann::json(*a.mean_iou) : nlohmann::json(nullptr)},
            {"retained_fraction", a.retained_fraction}};
}

// ---- occlusion spec files ------------------------------------------------

inline OcclusionSpec parse_occlusion_spec(const nlohmann::json& j) {
    try {
        OcclusionSpec s;
        const auto shape = j.value("shape", std::string("rectangle"));
        if (shape == "rectangle") s.shape = OcclusionSpec::Shape::Rectangle;
        else if (shape == "disc") s.shape = OcclusionSpec::Shape::Disc;
        else if (shape == "stripe-set") s.shape = OcclusionSpec::Shape::StripeSet;
        else throw SpecError("unknown occluder shape '" + shape + "'");

        auto rect = [](const nlohmann::json& r) {
            if (!r.is_array() || r.size() != 4) throw SpecError("rects are [x, y, w, h]");
            return Rect{r[0].get<std::uint32_t>(), r[1].get<std::uint32_t>(), r[2].get<std::uint32_t>(),
                        r[3].get<std::uint32_t>()};
        };
        if (j.contains("boxes")) {
            for (const auto& r : j["boxes"]) s.boxes.push_back(rect(r));
        }
        if (j.contains("region")) s.region = rect(j["region"]);
        if (j.contains("avoid")) {
            for (const auto& r : j["avoid"]) s.avoid.push_back(rect(r));
        }
        s.count = j.value("count", 1u);
        s.min_size = j.value("min_size", 4u);
        s.max_size = j.value("max_size", 12u);
        s.margin = j.value("margin", 0u);
        s.stripe_width = j.value("stripe_width", 2u);
        s.texture_tile = j.value("texture_tile", 2u);

        const auto fill = j.value("fill", std::string("color"));
        if (fill == "color") s.fill = OcclusionSpec::Fill::Color;
        else if (fill == "texture") s.fill = OcclusionSpec::Fill::Texture;
        else if (fill == "original") s.fill = OcclusionSpec::Fill::Original;
        else throw SpecError("unknown fill '" + fill + "'");
        if (j.contains("color")) s.color = mask_color_from_json(j["color"]);
        if (j.contains("texture_alt")) s.texture_alt = mask_color_from_json(j["texture_alt"]);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("occlusion spec: ") + e.what());
    } catch (const ConfigError& e) {
        throw SpecError(std::string("occlusion spec: ") + e.what());
    }
}

// ---- corpus manifests ----------------------------------------------------
//
// One JSON object per line:
//   {"id", "image", "occluded", "occlusion_mask", "label"}
// plus optional "object_mask" and "classifier" (synthetic config). Paths are
// relative to the manifest.

struct ManifestEntry {
    std::string id;
    std::string image;
    std::string occluded;
    std::string occlusion_mask;
    std::string label;
    std::optional<std::string> object_mask;
    std::optional<std::string> classifier;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline nlohmann::json to_json(const ManifestEntry& e) {
    nlohmann::json j{{"id", e.id},
                     {"image", e.image},
                     {"occluded", e.occluded},
                     {"occlusion_mask", e.occlusion_mask},
                     {"label", e.label}};
    if (e.object_mask) j["object_mask"] = *e.object_mask;
    if (e.classifier) j["classifier"] = *e.classifier;
    return j;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ManifestEntry e;
            e.id = j.at("id").get<std::string>();
            e.image = j.at("image").get<std::string>();
            e.occluded = j.at("occluded").get<std::string>();
            e.occlusion_mask = j.at("occlusion_mask").get<std::string>();
            e.label = j.at("label").get<std::string>();
            if (j.contains("object_mask")) e.object_mask = j["object_mask"].get<std::string>();
            if (j.contains("classifier")) e.classifier = j["classifier"].get<std::string>();
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw SpecError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    for (const auto& e : entries) out << to_json(e).dump() << '\n';
    if (!out) throw IoError("cannot write manifest " + path.string());
}

}  // namespace compex
