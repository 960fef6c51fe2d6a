#pragma once
// Compositional causal explanation.
//
// For one 2x2 partition every masking of its four parts is classified, and a
// part's responsibility is 1/(k+1) for the smallest k such that some mutant
// with k other parts masked keeps the original label while additionally
// masking the part changes it. Parts with nonzero responsibility are split
// again until parts get small or all four parts tie. N independently sampled
// trees deposit r/|part| on every pixel of every leaf; pixels are ranked by the
// accumulated score and added greedily until the explanation alone (the rest
// masked) reproduces the original label.

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compex/classifier.hpp"
#include "compex/errors.hpp"
#include "compex/image.hpp"
#include "compex/parallel.hpp"
#include "compex/responsibility.hpp"
#include "compex/rng.hpp"

namespace compex {

struct EngineConfig {
    std::uint32_t parts = kPartsPerPartition;
    std::uint32_t iterations = 50;
    // Parts narrower or shorter than this fraction of the image stop refinement.
    double min_frac = 0.1;
    // Parts refine only when strictly above this.
    Responsibility refine_threshold = Responsibility::zero();
    MaskColor mask_color;
    std::uint64_t seed = 0;
    std::uint32_t greedy_step = 1;
    // Deepest refinement level evaluated; 0 evaluates the root partition only.
    std::optional<std::uint32_t> max_depth;
    // Every iteration reuses the stream of iteration 0, so all iterations sample
    // identical trees. Used to make invocation counts exactly linear in N.
    bool repeat_first_iteration = false;
    // Worker threads. Results never depend on it.
    std::size_t jobs = 1;

    void validate() const {
        if (parts != kPartsPerPartition) throw ConfigError("only 4 parts per partition are supported");
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (!(min_frac > 0.0 && min_frac <= 1.0)) throw ConfigError("min_frac must lie in (0, 1]");
        if (greedy_step < 1) throw ConfigError("greedy_step must be >= 1");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
    }
};

struct LevelStats {
    std::uint64_t nodes = 0;
    std::uint64_t mutants_submitted = 0;
    friend bool operator==(const LevelStats&, const LevelStats&) = default;
};

// Classifier invocations are counter deltas on the handle; per-level figures
// count partitions evaluated and mutants submitted (cache hits included).
struct EngineStats {
    std::uint64_t original_invocations = 0;
    std::uint64_t ranking_invocations = 0;
    std::uint64_t extraction_invocations = 0;
    std::vector<LevelStats> levels;

    std::uint64_t total_invocations() const noexcept {
        return original_invocations + ranking_invocations + extraction_invocations;
    }

    void add_level(std::uint32_t depth, std::uint64_t submitted) {
        if (levels.size() <= depth) levels.resize(depth + 1);
        levels[depth].nodes += 1;
        levels[depth].mutants_submitted += submitted;
    }

    void merge_levels(const EngineStats& o) {
        if (levels.size() < o.levels.size()) levels.resize(o.levels.size());
        for (std::size_t d = 0; d < o.levels.size(); ++d) {
            levels[d].nodes += o.levels[d].nodes;
            levels[d].mutants_submitted += o.levels[d].mutants_submitted;
        }
    }
};

// Pixels in descending score order; equal scores keep ascending row-major index.
struct Ranking {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<PixelIndex> order;
    std::vector<double> scores;  // indexed by pixel, not by rank

    friend bool operator==(const Ranking&, const Ranking&) = default;
};

struct Explanation {
    std::vector<PixelIndex> pixels;  // in addition order
    Verdict certificate;             // verdict on the image masked to `pixels`

    PixelSet sorted_pixels() const {
        PixelSet s(pixels.begin(), pixels.end());
        std::sort(s.begin(), s.end());
        return s;
    }
};

struct ExplainResult {
    Verdict original;
    Ranking ranking;
    Explanation explanation;
    EngineStats stats;
};

using MutantKeeps = std::array<bool, kMutantCount>;

// Core of the one-level computation. keeps[m] tells whether the mutant with
// mask set m is classified like the original; keeps[0] must be true.
inline std::array<Responsibility, kPartsPerPartition> responsibility_from_keeps(const MutantKeeps& keeps) {
    std::array<Responsibility, kPartsPerPartition> out{};
    for (std::size_t j = 0; j < kPartsPerPartition; ++j) {
        std::optional<std::uint32_t> best;
        for (std::uint32_t bits = 0; bits < kMutantCount; ++bits) {
            const MaskSet m(bits);
            if (m.contains(j) || !keeps[bits] || keeps[m.with(j).bits()]) continue;
            const auto k = diff(m);
            if (!best || k < *best) best = k;
        }
        out[j] = best ? Responsibility::from_witness(*best) : Responsibility::zero();
    }
    return out;
}

namespace detail {

// Mutants 1..15 (mask sets in ascending order); the empty masking is the
// original and is never resubmitted.
inline std::vector<Image> nontrivial_mutants(const Image& image, const Partition& partition, const MaskColor& color) {
    std::vector<Image> out;
    out.reserve(kMutantCount - 1);
    for (std::uint32_t bits = 1; bits < kMutantCount; ++bits) {
        Image mutant = image;
        for (std::size_t j = 0; j < kPartsPerPartition; ++j) {
            if (MaskSet(bits).contains(j)) fill_rect(mutant, partition.parts[j], color);
        }
        out.push_back(std::move(mutant));
    }
    return out;
}

}  // namespace detail

inline ResponsibilityMap superpixel_responsibility(const Image& image, const Partition& partition,
                                                   ClassifierHandle& handle, const MaskColor& color,
                                                   const Verdict& original, std::uint32_t depth = 0) {
    check_color(image, color);
    check_region(image, partition.parent);
    const auto mutants = detail::nontrivial_mutants(image, partition, color);
    const auto verdicts = handle.classify_batch(mutants);

    MutantKeeps keeps{};
    keeps[0] = true;
    for (std::uint32_t bits = 1; bits < kMutantCount; ++bits) keeps[bits] = verdicts[bits - 1].same_label(original);

    const auto rs = responsibility_from_keeps(keeps);
    ResponsibilityMap map;
    for (std::size_t j = 0; j < kPartsPerPartition; ++j) map.entries.push_back({partition.parts[j], rs[j], depth});
    return map;
}

inline ResponsibilityMap superpixel_responsibility(const Image& image, const Partition& partition,
                                                   ClassifierHandle& handle, const MaskColor& color) {
    const Verdict original = handle.classify(image);
    return superpixel_responsibility(image, partition, handle, color, original);
}

namespace detail {

inline bool too_small(const Rect& part, const Image& image, double min_frac) {
    return part.w < min_frac * image.width() || part.h < min_frac * image.height();
}

inline bool all_equal(const ResponsibilityMap& level) {
    return std::all_of(level.begin(), level.end(),
                       [&](const auto& e) { return e.value == level.entries.front().value; });
}

inline ResponsibilityMap refine(const Image& image, const Rect& region, ClassifierHandle& handle,
                                const EngineConfig& config, const Verdict& original, Rng& rng, std::uint32_t depth,
                                EngineStats* stats) {
    const Partition partition = sample_partition(region, rng);
    const std::uint64_t child_base = rng();

    ResponsibilityMap level = superpixel_responsibility(image, partition, handle, config.mask_color, original, depth);
    if (stats) stats->add_level(depth, kMutantCount - 1);

    const bool depth_capped = config.max_depth && depth >= *config.max_depth;
    const bool small = std::any_of(level.begin(), level.end(),
                                   [&](const auto& e) { return too_small(e.rect, image, config.min_frac); });
    if (depth_capped || small || all_equal(level)) return level;

    ResponsibilityMap out;
    for (std::size_t j = 0; j < level.entries.size(); ++j) {
        const auto& entry = level.entries[j];
        if (entry.value <= config.refine_threshold) {
            out.entries.push_back(entry);
            continue;
        }
        if (entry.rect.w < 2 || entry.rect.h < 2) {
            // Cannot be split further; keep this level's value.
            out.entries.push_back(entry);
            continue;
        }
        Rng child = make_stream(child_base, j);
        auto sub = refine(image, entry.rect, handle, config, original, child, depth + 1, stats);
        out.entries.insert(out.entries.end(), sub.entries.begin(), sub.entries.end());
    }
    return out;
}

}  // namespace detail

// Recursive refinement of `region`. The root split is drawn from `rng`; child
// splits use streams derived from it and the part index.
inline ResponsibilityMap compositional_responsibility(const Image& image, const Rect& region,
                                                      ClassifierHandle& handle, const EngineConfig& config, Rng& rng,
                                                      std::uint32_t depth = 0, EngineStats* stats = nullptr) {
    config.validate();
    check_region(image, region);
    const Verdict original = handle.classify(image);
    return detail::refine(image, region, handle, config, original, rng, depth, stats);
}

inline Ranking make_ranking(std::uint32_t width, std::uint32_t height, std::vector<double> scores) {
    Ranking r;
    r.width = width;
    r.height = height;
    r.scores = std::move(scores);
    r.order.resize(r.scores.size());
    std::iota(r.order.begin(), r.order.end(), PixelIndex{0});
    std::sort(r.order.begin(), r.order.end(), [&](PixelIndex a, PixelIndex b) {
        if (r.scores[a] != r.scores[b]) return r.scores[a] > r.scores[b];
        return a < b;
    });
    return r;
}

// Deposit r/|rect| onto every pixel of every entry, in entry order.
inline void deposit(std::vector<double>& scores, std::uint32_t width, const ResponsibilityMap& map) {
    for (const auto& e : map) {
        if (e.value.is_zero()) continue;
        const double share = e.value.value() / static_cast<double>(e.rect.area());
        for (std::uint32_t y = e.rect.y0; y < e.rect.y1(); ++y) {
            for (std::uint32_t x = e.rect.x0; x < e.rect.x1(); ++x) scores[std::size_t{y} * width + x] += share;
        }
    }
}

namespace detail {

inline Ranking rank_with_original(const Image& image, ClassifierHandle& handle, const EngineConfig& config,
                                  const Verdict& original, EngineStats* stats) {
    config.validate();
    check_color(image, config.mask_color);
    if (image.width() < 2 || image.height() < 2) {
        throw DegenerateRegion("image must be at least 2x2 to be partitioned");
    }
    const Rect full = image.bounds();
    std::vector<ResponsibilityMap> maps(config.iterations);
    std::vector<EngineStats> per_iteration(config.iterations);

    parallel_for(config.iterations, config.jobs, [&](std::size_t i) {
        Rng rng = make_stream(config.seed, config.repeat_first_iteration ? 0 : i);
        try {
            maps[i] = refine(image, full, handle, config, original, rng, 0, &per_iteration[i]);
        } catch (const BatchItemError& e) {
            throw GatewayError("iteration " + std::to_string(i) + ": " + e.what());
        } catch (const GatewayError& e) {
            throw GatewayError("iteration " + std::to_string(i) + ": " + e.what());
        }
    });

    std::vector<double> scores(image.pixel_count(), 0.0);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        deposit(scores, image.width(), maps[i]);
        if (stats) stats->merge_levels(per_iteration[i]);
    }
    return make_ranking(image.width(), image.height(), std::move(scores));
}

}  // namespace detail

inline Ranking rank_pixels(const Image& image, ClassifierHandle& handle, const EngineConfig& config,
                           EngineStats* stats = nullptr) {
    const Verdict original = handle.classify(image);
    return detail::rank_with_original(image, handle, config, original, stats);
}

// Greedy walk down the ranking. With greedy_step > 1 pixels are added in
// chunks and trailing pixels of the final chunk are dropped while the
// remainder stays sufficient.
inline Explanation extract_explanation(const Image& image, const Ranking& ranking, ClassifierHandle& handle,
                                       const EngineConfig& config, const Verdict& original) {
    config.validate();
    check_color(image, config.mask_color);
    if (ranking.width != image.width() || ranking.height != image.height() ||
        ranking.order.size() != image.pixel_count()) {
        throw ConfigError("ranking does not match image dimensions");
    }

    Image working(image.width(), image.height(), image.channels());
    for (PixelIndex p = 0; p < image.pixel_count(); ++p) working.set_pixel(p, config.mask_color);

    Explanation ex;
    const std::size_t n = ranking.order.size();
    std::size_t added = 0;
    while (added < n) {
        const std::size_t chunk_start = added;
        const std::size_t chunk_end = std::min(n, added + config.greedy_step);
        for (; added < chunk_end; ++added) {
            const PixelIndex p = ranking.order[added];
            working.copy_pixel_from(image, p);
            ex.pixels.push_back(p);
        }
        Verdict v = handle.classify(working);
        if (!v.same_label(original)) continue;

        ex.certificate = std::move(v);
        if (config.greedy_step > 1) {
            while (ex.pixels.size() > std::max<std::size_t>(chunk_start, 1)) {
                const PixelIndex last = ex.pixels.back();
                working.set_pixel(last, config.mask_color);
                Verdict trimmed = handle.classify(working);
                if (!trimmed.same_label(original)) {
                    working.copy_pixel_from(image, last);
                    break;
                }
                ex.pixels.pop_back();
                ex.certificate = std::move(trimmed);
            }
        }
        return ex;
    }
    // Every pixel is present, so `working` is the original image.
    throw GatewayError("classifier is not deterministic: the unmasked image changed label");
}

inline Explanation extract_explanation(const Image& image, const Ranking& ranking, ClassifierHandle& handle,
                                       const EngineConfig& config) {
    return extract_explanation(image, ranking, handle, config, handle.classify(image));
}

inline ExplainResult explain(const Image& image, ClassifierHandle& handle, const EngineConfig& config) {
    ExplainResult result;
    auto before = handle.invocation_count();
    result.original = handle.classify(image);
    auto after = handle.invocation_count();
    result.stats.original_invocations = after - before;

    before = after;
    result.ranking = detail::rank_with_original(image, handle, config, result.original, &result.stats);
    after = handle.invocation_count();
    result.stats.ranking_invocations = after - before;

    before = after;
    result.explanation = extract_explanation(image, result.ranking, handle, config, result.original);
    after = handle.invocation_count();
    result.stats.extraction_invocations = after - before;
    return result;
}

}  // namespace compex
