#pragma once
// Seeded synthetic corpora: tiny instances for the exhaustive oracle and
// photobomb instances with template classifiers for the occlusion benchmark.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "compex/bench.hpp"
#include "compex/image.hpp"
#include "compex/oracle.hpp"
#include "compex/rng.hpp"
#include "compex/synthetic.hpp"

namespace compex {

// Image with every channel value drawn from [1, 255] so no pixel equals a black mask.
template <class Rng>
Image random_image(std::uint32_t width, std::uint32_t height, std::uint32_t channels, Rng& rng) {
    Image img(width, height, channels);
    for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(1 + draw_below(rng, 255));
    return img;
}

// Half the time an axis-aligned rectangle, otherwise a scattered subset with
// each pixel kept with probability 2/5. Never empty.
template <class Rng>
PixelSet random_pixel_set(std::uint32_t width, std::uint32_t height, Rng& rng) {
    PixelSet out;
    if (draw_below(rng, 2) == 0) {
        const std::uint32_t w = 1 + draw_below(rng, width), h = 1 + draw_below(rng, height);
        const Rect r{draw_below(rng, width - w + 1), draw_below(rng, height - h + 1), w, h};
        return rect_pixels(r, width);
    }
    while (out.empty()) {
        for (PixelIndex p = 0; p < width * height; ++p) {
            if (draw_below(rng, 5) < 2) out.push_back(p);
        }
    }
    return out;
}

struct SyntheticInstance {
    std::string id;
    Image image;
    SyntheticSpec spec;
};

// Alternating monotone-threshold and template instances on single-channel images.
inline std::vector<SyntheticInstance> oracle_suite(std::size_t count, std::uint64_t seed, std::uint32_t width = 4,
                                                   std::uint32_t height = 4) {
    std::vector<SyntheticInstance> out;
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = make_stream(seed, i);
        SyntheticInstance inst;
        inst.id = "oracle-" + std::to_string(i);
        inst.image = random_image(width, height, 1, rng);
        inst.spec.shape = shape_of(inst.image);
        inst.spec.pixels = random_pixel_set(width, height, rng);
        if (i % 2 == 0) {
            inst.spec.kind = SyntheticSpec::Kind::MonotoneThreshold;
            inst.spec.threshold = 1 + draw_below(rng, static_cast<std::uint32_t>(inst.spec.pixels.size()));
        } else {
            inst.spec.kind = SyntheticSpec::Kind::Template;
            inst.spec.channels = 1;
            for (PixelIndex p : inst.spec.pixels) inst.spec.expected.push_back(inst.image.pixel(p)[0]);
        }
        out.push_back(std::move(inst));
    }
    return out;
}

inline std::vector<OracleInstance> to_oracle_instances(const std::vector<SyntheticInstance>& suite) {
    std::vector<OracleInstance> out;
    for (const auto& s : suite) out.push_back({s.id, s.image, s.spec.build()});
    return out;
}

struct PhotobombSuiteOptions {
    std::uint32_t width = 64;
    std::uint32_t height = 64;
    std::uint32_t channels = 3;
    std::uint32_t object_min = 8;
    std::uint32_t object_max = 16;
    OcclusionSpec occlusion = [] {
        OcclusionSpec s;
        s.count = 2;
        s.min_size = 6;
        s.max_size = 14;
        s.margin = 2;
        return s;
    }();
};

struct PhotobombCase {
    BenchInstance instance;
    SyntheticSpec classifier;  // template over the object, read from the original
    Rect object;
};

// Random background, one rectangular object the template classifier keys on,
// occluders placed clear of the object.
inline std::vector<PhotobombCase> photobomb_suite(std::size_t count, std::uint64_t seed,
                                                  const PhotobombSuiteOptions& opt = {}) {
    if (opt.object_min == 0 || opt.object_min > opt.object_max || opt.object_max > opt.width ||
        opt.object_max > opt.height) {
        throw SpecError("object size range does not fit the image");
    }
    std::vector<PhotobombCase> out;
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = make_stream(seed, i);
        Image base = random_image(opt.width, opt.height, opt.channels, rng);
        const std::uint32_t w = opt.object_min + draw_below(rng, opt.object_max - opt.object_min + 1);
        const std::uint32_t h = opt.object_min + draw_below(rng, opt.object_max - opt.object_min + 1);
        const Rect object{draw_below(rng, opt.width - w + 1), draw_below(rng, opt.height - h + 1), w, h};

        OcclusionSpec occ = opt.occlusion;
        occ.avoid.push_back(object);
        if (occ.boxes.empty() && i % 2 == 1 && occ.shape == OcclusionSpec::Shape::Rectangle) {
            occ.shape = OcclusionSpec::Shape::Disc;
        }

        PhotobombCase c;
        c.object = object;
        c.instance = generate_photobomb(base, occ, rng);
        c.instance.id = "pb-" + std::to_string(i);
        c.instance.object = rect_pixels(object, opt.width);

        c.classifier.kind = SyntheticSpec::Kind::Template;
        c.classifier.shape = shape_of(base);
        c.classifier.channels = base.channels();
        c.classifier.pixels = *c.instance.object;
        for (PixelIndex p : c.classifier.pixels) {
            auto px = base.pixel(p);
            c.classifier.expected.insert(c.classifier.expected.end(), px.begin(), px.end());
        }
        c.instance.label = c.classifier.positive_label;
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace compex
