#pragma once
// Exhaustive ground truth over a small grid of masking units.
//
// All 2^u maskings are classified once into a verdict table; causes, smallest
// witnesses and minimal explanations are then pure table lookups. Subsets are
// enumerated by increasing size and, within a size, lexicographically by their
// ascending index lists, so every answer is deterministic.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compex/classifier.hpp"
#include "compex/engine.hpp"
#include "compex/errors.hpp"
#include "compex/image.hpp"
#include "compex/parallel.hpp"
#include "compex/responsibility.hpp"

namespace compex {

inline constexpr std::size_t kMaxOracleUnits = 20;

using UnitSet = std::vector<std::uint32_t>;

// Rectangles that tile the image exactly.
struct UnitGrid {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<Rect> units;

    std::size_t size() const noexcept { return units.size(); }

    static UnitGrid pixels(std::uint32_t width, std::uint32_t height) { return cells(width, height, width, height); }

    // cols x rows cells; extents differ by at most one pixel.
    static UnitGrid cells(std::uint32_t width, std::uint32_t height, std::uint32_t cols, std::uint32_t rows) {
        if (cols == 0 || rows == 0 || cols > width || rows > height) throw ConfigError("invalid unit grid");
        UnitGrid g{width, height, {}};
        for (std::uint32_t r = 0; r < rows; ++r) {
            const std::uint32_t y0 = r * height / rows, y1 = (r + 1) * height / rows;
            for (std::uint32_t c = 0; c < cols; ++c) {
                const std::uint32_t x0 = c * width / cols, x1 = (c + 1) * width / cols;
                g.units.push_back({x0, y0, x1 - x0, y1 - y0});
            }
        }
        return g;
    }

    void validate() const {
        if (units.size() > kMaxOracleUnits) {
            throw CapacityError(std::to_string(units.size()) + " units exceed the oracle cap of " +
                                std::to_string(kMaxOracleUnits));
        }
        if (units.empty()) throw ConfigError("unit grid is empty");
        std::vector<std::uint8_t> cover(std::size_t{width} * height, 0);
        for (const auto& u : units) {
            if (u.w == 0 || u.h == 0 || u.x1() > width || u.y1() > height) {
                throw ConfigError("unit " + to_string(u) + " outside the grid");
            }
            for (std::uint32_t y = u.y0; y < u.y1(); ++y) {
                for (std::uint32_t x = u.x0; x < u.x1(); ++x) ++cover[std::size_t{y} * width + x];
            }
        }
        for (auto c : cover) {
            if (c != 1) throw ConfigError("units do not tile the image exactly");
        }
    }
};

enum class Sc2Check {
    Exhaustive,        // every subset of the witness must keep the label
    MonotoneShortcut,  // only the witness itself is checked; sound for monotone classifiers
};

// keeps[m]: the image with units in bitset m masked keeps the original label.
class VerdictTable {
public:
    static VerdictTable build(const Image& image, ClassifierHandle& handle, const UnitGrid& grid,
                              const MaskColor& color, std::size_t jobs = 1) {
        grid.validate();
        if (grid.width != image.width() || grid.height != image.height()) {
            throw ConfigError("unit grid does not match image dimensions");
        }
        check_color(image, color);
        VerdictTable t;
        t.units_ = grid.size();
        t.original_ = handle.classify(image);
        const std::size_t total = std::size_t{1} << t.units_;
        t.keeps_.assign(total, 0);
        t.keeps_[0] = 1;

        constexpr std::size_t kChunk = 1024;
        const std::size_t chunks = (total + kChunk - 1) / kChunk;
        parallel_for(chunks, jobs, [&](std::size_t c) {
            const std::size_t lo = std::max<std::size_t>(1, c * kChunk);
            const std::size_t hi = std::min(total, (c + 1) * kChunk);
            if (lo >= hi) return;
            std::vector<Image> batch;
            batch.reserve(hi - lo);
            for (std::size_t m = lo; m < hi; ++m) {
                Image mutant = image;
                for (std::size_t u = 0; u < t.units_; ++u) {
                    if ((m >> u) & 1u) fill_rect(mutant, grid.units[u], color);
                }
                batch.push_back(std::move(mutant));
            }
            const auto verdicts = handle.classify_batch(batch);
            for (std::size_t m = lo; m < hi; ++m) t.keeps_[m] = verdicts[m - lo].same_label(t.original_);
        });

        // keeps_all[m] = every subset of m keeps the label.
        t.keeps_all_.assign(total, 0);
        for (std::size_t m = 0; m < total; ++m) {
            bool ok = t.keeps_[m];
            for (std::size_t u = 0; ok && u < t.units_; ++u) {
                if ((m >> u) & 1u) ok = t.keeps_all_[m & ~(std::size_t{1} << u)];
            }
            t.keeps_all_[m] = ok;
        }
        return t;
    }

    std::size_t units() const noexcept { return units_; }
    const Verdict& original() const noexcept { return original_; }
    bool keeps(std::size_t mask) const { return keeps_.at(mask); }
    bool keeps_all_subsets(std::size_t mask) const { return keeps_all_.at(mask); }

private:
    std::size_t units_ = 0;
    Verdict original_;
    std::vector<std::uint8_t> keeps_;
    std::vector<std::uint8_t> keeps_all_;
};

namespace detail {

inline std::size_t to_bits(const UnitSet& s) {
    std::size_t m = 0;
    for (auto u : s) m |= std::size_t{1} << u;
    return m;
}

// Calls visit(subset) for subsets of `pool` by size then lexicographic order,
// stopping when visit returns true. Returns the accepted subset.
template <class Visit>
std::optional<UnitSet> first_subset(const UnitSet& pool, Visit&& visit) {
    const std::size_t n = pool.size();
    for (std::size_t k = 0; k <= n; ++k) {
        std::vector<std::size_t> idx(k);
        for (std::size_t i = 0; i < k; ++i) idx[i] = i;
        for (;;) {
            UnitSet s(k);
            for (std::size_t i = 0; i < k; ++i) s[i] = pool[idx[i]];
            if (visit(s)) return s;
            std::size_t i = k;
            while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return std::nullopt;
}

}  // namespace detail

struct CauseResult {
    bool is_cause = false;
    std::optional<UnitSet> witness;  // smallest witness when is_cause
};

inline CauseResult is_cause(std::uint32_t unit, const VerdictTable& table, Sc2Check sc2 = Sc2Check::Exhaustive) {
    if (unit >= table.units()) throw BoundsError("unit index " + std::to_string(unit) + " out of range");
    UnitSet others;
    for (std::uint32_t u = 0; u < table.units(); ++u) {
        if (u != unit) others.push_back(u);
    }
    const std::size_t unit_bit = std::size_t{1} << unit;
    auto witness = detail::first_subset(others, [&](const UnitSet& w) {
        const std::size_t bits = detail::to_bits(w);
        const bool preserved = sc2 == Sc2Check::Exhaustive ? table.keeps_all_subsets(bits) : table.keeps(bits);
        return preserved && !table.keeps(bits | unit_bit);
    });
    if (!witness) return {};
    return {true, std::move(witness)};
}

inline CauseResult is_cause(std::uint32_t unit, const Image& image, ClassifierHandle& handle, const UnitGrid& grid,
                            const MaskColor& color) {
    grid.validate();
    if (unit >= grid.size()) throw BoundsError("unit index " + std::to_string(unit) + " out of range");
    return is_cause(unit, VerdictTable::build(image, handle, grid, color));
}

inline std::vector<Responsibility> exact_responsibility(const VerdictTable& table,
                                                        Sc2Check sc2 = Sc2Check::Exhaustive) {
    std::vector<Responsibility> out;
    out.reserve(table.units());
    for (std::uint32_t u = 0; u < table.units(); ++u) {
        const auto c = is_cause(u, table, sc2);
        out.push_back(c.is_cause ? Responsibility::from_witness(static_cast<std::uint32_t>(c.witness->size()))
                                 : Responsibility::zero());
    }
    return out;
}

inline std::vector<Responsibility> exact_responsibility(const Image& image, ClassifierHandle& handle,
                                                        const UnitGrid& grid, const MaskColor& color) {
    return exact_responsibility(VerdictTable::build(image, handle, grid, color));
}

// Smallest set of units that alone (everything else masked) keeps the label.
inline UnitSet minimal_explanation(const VerdictTable& table) {
    UnitSet all;
    for (std::uint32_t u = 0; u < table.units(); ++u) all.push_back(u);
    const std::size_t full = (std::size_t{1} << table.units()) - 1;
    auto s = detail::first_subset(all, [&](const UnitSet& keep) { return table.keeps(full & ~detail::to_bits(keep)); });
    return *s;  // the full set always qualifies
}

inline UnitSet minimal_explanation(const Image& image, ClassifierHandle& handle, const UnitGrid& grid,
                                   const MaskColor& color) {
    return minimal_explanation(VerdictTable::build(image, handle, grid, color));
}

struct OracleInstance {
    std::string id;
    Image image;
    std::shared_ptr<Classifier> classifier;
};

struct AgreementRow {
    std::string id;
    std::size_t units = 0;
    std::size_t oracle_size = 0;
    std::size_t engine_size = 0;
    bool equal = false;
    bool degenerate = false;  // the empty set is already sufficient
    std::vector<Responsibility> oracle_responsibilities;
    UnitSet oracle_explanation;
    PixelSet engine_explanation;
};

struct AgreementReport {
    std::vector<AgreementRow> rows;
    std::size_t non_degenerate = 0;
    std::size_t equal = 0;
    // Over non-degenerate instances; empty when there are none.
    std::optional<double> agreement_fraction;
    std::optional<double> mean_size_ratio;
};

// Compares the engine's explanation size with the exhaustive minimum. Each
// pixel is one unit, so images are limited to kMaxOracleUnits pixels.
inline AgreementReport oracle_agreement(const std::vector<OracleInstance>& corpus, const EngineConfig& config) {
    config.validate();
    AgreementReport report;
    double ratio_sum = 0.0;
    for (const auto& inst : corpus) {
        const auto grid = UnitGrid::pixels(inst.image.width(), inst.image.height());
        grid.validate();
        ClassifierHandle handle(inst.classifier);
        const auto table = VerdictTable::build(inst.image, handle, grid, config.mask_color, config.jobs);

        AgreementRow row;
        row.id = inst.id;
        row.units = grid.size();
        row.oracle_explanation = minimal_explanation(table);
        row.oracle_size = row.oracle_explanation.size();
        row.oracle_responsibilities = exact_responsibility(table);
        row.degenerate = row.oracle_size == 0;

        const auto result = explain(inst.image, handle, config);
        row.engine_explanation = result.explanation.sorted_pixels();
        row.engine_size = row.engine_explanation.size();
        row.equal = row.engine_size == row.oracle_size;

        if (!row.degenerate) {
            ++report.non_degenerate;
            if (row.equal) ++report.equal;
            ratio_sum += static_cast<double>(row.engine_size) / static_cast<double>(row.oracle_size);
        }
        report.rows.push_back(std::move(row));
    }
    if (report.non_degenerate > 0) {
        report.agreement_fraction = static_cast<double>(report.equal) / static_cast<double>(report.non_degenerate);
        report.mean_size_ratio = ratio_sum / static_cast<double>(report.non_degenerate);
    }
    return report;
}

inline nlohmann::json to_json(const AgreementReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json resp = nlohmann::json::array();
        for (const auto& x : r.oracle_responsibilities) resp.push_back(x.to_string());
        rows.push_back({{"id", r.id},
                        {"units", r.units},
                        {"oracle_size", r.oracle_size},
                        {"engine_size", r.engine_size},
                        {"equal", r.equal},
                        {"degenerate", r.degenerate},
                        {"oracle_explanation", r.oracle_explanation},
                        {"engine_explanation", r.engine_explanation},
                        {"oracle_responsibilities", resp}});
    }
    nlohmann::json j;
    j["instances"] = rows;
    j["instance_count"] = report.rows.size();
    j["non_degenerate"] = report.non_degenerate;
    j["equal"] = report.equal;
    j["agreement_fraction"] = report.agreement_fraction ? nlohmann::json(*report.agreement_fraction) : nlohmann::json(nullptr);
    j["mean_size_ratio"] = report.mean_size_ratio ? nlohmann::json(*report.mean_size_ratio) : nlohmann::json(nullptr);
    return j;
}

}  // namespace compex
