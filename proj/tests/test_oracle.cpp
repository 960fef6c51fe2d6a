#include <gtest/gtest.h>

#include "compex/compex.hpp"

using namespace compex;

namespace {

// Label looked up from the set of masked (zero) pixels of a 2x2 image. Lets a
// test state a non-monotone verdict table directly.
class TableClassifier final : public Classifier {
public:
    explicit TableClassifier(std::array<bool, 16> keeps) : keeps_(keeps) {}
    Verdict classify(const Image& image) override {
        std::uint32_t bits = 0;
        for (PixelIndex p = 0; p < 4; ++p) bits |= (image.pixel(p)[0] == 0 ? 1u : 0u) << p;
        return {keeps_[bits] ? "o" : "x", std::nullopt};
    }

private:
    std::array<bool, 16> keeps_;
};

std::size_t popcount_of(const UnitSet& s) { return s.size(); }

bool subset_keeps(const VerdictTable& t, const UnitSet& masked) {
    std::size_t bits = 0;
    for (auto u : masked) bits |= std::size_t{1} << u;
    return t.keeps(bits);
}

}  // namespace

TEST(Oracle, ThresholdResponsibilityClosedForm) {
    for (std::uint32_t c = 1; c <= 6; ++c) {
        for (std::uint32_t t = 1; t <= c; ++t) {
            // c object pixels at the start of a 4x2 image; the rest is background.
            Image img(4, 2, 1, 60);
            PixelSet obj(c);
            for (PixelIndex p = 0; p < c; ++p) obj[p] = p;
            ClassifierHandle h(std::make_shared<MonotoneThresholdClassifier>(obj, t));
            const auto rs = exact_responsibility(img, h, UnitGrid::pixels(4, 2), MaskColor::gray(0));
            for (PixelIndex u = 0; u < 8; ++u) {
                if (u < c) {
                    EXPECT_EQ(rs[u], Responsibility::from_witness(c - t)) << c << "," << t << " unit " << u;
                } else {
                    EXPECT_TRUE(rs[u].is_zero());
                }
            }
        }
    }
}

TEST(Oracle, CauseExamples) {
    Image img(2, 2, 1, 60);
    const PixelSet all{0, 1, 2, 3};
    {
        ClassifierHandle h(std::make_shared<MonotoneThresholdClassifier>(all, 4));
        const auto r = is_cause(2, img, h, UnitGrid::pixels(2, 2), MaskColor::gray(0));
        EXPECT_TRUE(r.is_cause);
        ASSERT_TRUE(r.witness);
        EXPECT_TRUE(r.witness->empty());
    }
    {
        ClassifierHandle h(std::make_shared<MonotoneThresholdClassifier>(all, 3));
        const auto r = is_cause(0, img, h, UnitGrid::pixels(2, 2), MaskColor::gray(0));
        EXPECT_TRUE(r.is_cause);
        EXPECT_EQ(r.witness, (UnitSet{1}));  // first in size-then-lexicographic order
    }
    {
        Image ref(2, 2, 1, 60);
        ClassifierHandle h(TemplateClassifier::from_image(ref, PixelSet{1}));
        const auto r = is_cause(0, ref, h, UnitGrid::pixels(2, 2), MaskColor::gray(0));
        EXPECT_FALSE(r.is_cause);
        EXPECT_FALSE(r.witness);
    }
}

TEST(Oracle, ConstantClassifierHasNoCausesAndEmptyExplanation) {
    Image img(3, 3, 1, 5);
    ClassifierHandle h(std::make_shared<ConstantClassifier>("x"));
    const auto table = VerdictTable::build(img, h, UnitGrid::pixels(3, 3), MaskColor::gray(0));
    for (const auto& r : exact_responsibility(table)) EXPECT_TRUE(r.is_zero());
    EXPECT_TRUE(minimal_explanation(table).empty());
}

TEST(Oracle, MinimalExplanationExamples) {
    Rng gen(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Image img = random_image(4, 4, 1, gen);
        const PixelSet region = random_pixel_set(4, 4, gen);
        ClassifierHandle tmpl(TemplateClassifier::from_image(img, region));
        const auto e = minimal_explanation(img, tmpl, UnitGrid::pixels(4, 4), MaskColor::gray(0));
        EXPECT_EQ(PixelSet(e.begin(), e.end()), region);

        const std::uint32_t t = 1 + draw_below(gen, static_cast<std::uint32_t>(region.size()));
        ClassifierHandle mono(std::make_shared<MonotoneThresholdClassifier>(region, t));
        const auto m = minimal_explanation(img, mono, UnitGrid::pixels(4, 4), MaskColor::gray(0));
        EXPECT_EQ(m.size(), t);
        for (auto u : m) EXPECT_TRUE(std::binary_search(region.begin(), region.end(), u));
    }
}

TEST(Oracle, WitnessesAreMinimalAndValid) {
    Rng gen(19);
    for (int trial = 0; trial < 40; ++trial) {
        const Image img = random_image(3, 3, 1, gen);
        const PixelSet obj = random_pixel_set(3, 3, gen);
        auto model = std::make_shared<MonotoneThresholdClassifier>(obj, 1 + draw_below(gen, static_cast<std::uint32_t>(obj.size())));
        ClassifierHandle h(model);
        const auto table = VerdictTable::build(img, h, UnitGrid::pixels(3, 3), MaskColor::gray(0));
        for (std::uint32_t u = 0; u < 9; ++u) {
            const auto r = is_cause(u, table);
            if (!r.is_cause) continue;
            const UnitSet& w = *r.witness;
            // Re-verify SC2 over every subset and SC3 directly.
            for (std::size_t sub = 0; sub < (std::size_t{1} << w.size()); ++sub) {
                UnitSet s;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    if ((sub >> i) & 1u) s.push_back(w[i]);
                }
                EXPECT_TRUE(subset_keeps(table, s));
            }
            UnitSet with = w;
            with.push_back(u);
            EXPECT_FALSE(subset_keeps(table, with));
            // No smaller witness: every set of size < |w| fails.
            for (std::size_t bits = 0; bits < 512; ++bits) {
                if ((bits >> u) & 1u || static_cast<std::size_t>(std::popcount(bits)) >= popcount_of(w)) continue;
                const bool valid = table.keeps_all_subsets(bits) && !table.keeps(bits | (std::size_t{1} << u));
                EXPECT_FALSE(valid);
            }
        }
    }
}

TEST(Oracle, MonotoneShortcutAgreesOnlyForMonotoneClassifiers) {
    Rng gen(23);
    for (int trial = 0; trial < 30; ++trial) {
        const Image img = random_image(3, 3, 1, gen);
        const PixelSet obj = random_pixel_set(3, 3, gen);
        ClassifierHandle h(std::make_shared<MonotoneThresholdClassifier>(obj, 1 + draw_below(gen, static_cast<std::uint32_t>(obj.size()))));
        const auto table = VerdictTable::build(img, h, UnitGrid::pixels(3, 3), MaskColor::gray(0));
        EXPECT_EQ(exact_responsibility(table, Sc2Check::Exhaustive), exact_responsibility(table, Sc2Check::MonotoneShortcut));
    }
    // Masking {1,2} keeps the label and adding unit 0 flips it, but masking
    // {1} alone flips, so the definition rejects {1,2} as a witness.
    std::array<bool, 16> keeps{};
    keeps.fill(true);
    keeps[0b0010] = false;
    keeps[0b0111] = false;
    Image img(2, 2, 1, 9);
    ClassifierHandle h(std::make_shared<TableClassifier>(keeps));
    const auto table = VerdictTable::build(img, h, UnitGrid::pixels(2, 2), MaskColor::gray(0));
    EXPECT_TRUE(exact_responsibility(table, Sc2Check::Exhaustive)[0].is_zero());
    EXPECT_EQ(exact_responsibility(table, Sc2Check::MonotoneShortcut)[0], Responsibility::from_witness(2));
}

TEST(Oracle, CapacityAndGridValidation) {
    ClassifierHandle h(std::make_shared<ConstantClassifier>("x"));
    EXPECT_THROW(VerdictTable::build(Image(7, 3, 1), h, UnitGrid::pixels(7, 3), MaskColor::gray(0)), CapacityError);
    EXPECT_NO_THROW(VerdictTable::build(Image(40, 40, 1), h, UnitGrid::cells(40, 40, 4, 4), MaskColor::gray(0)));
    UnitGrid gaps{2, 2, {Rect{0, 0, 1, 1}, Rect{1, 1, 1, 1}}};
    EXPECT_THROW(gaps.validate(), ConfigError);
    EXPECT_THROW(VerdictTable::build(Image(4, 4, 1), h, UnitGrid::pixels(2, 2), MaskColor::gray(0)), ConfigError);
}

TEST(Oracle, CoarseCellsActAsUnits) {
    // 8x8 image, 2x2 grid of 4x4 cells; the template sits in cell 3.
    Rng gen(1);
    const Image img = random_image(8, 8, 1, gen);
    ClassifierHandle h(TemplateClassifier::from_image(img, PixelSet{45, 54}));
    const auto grid = UnitGrid::cells(8, 8, 2, 2);
    EXPECT_EQ(minimal_explanation(img, h, grid, MaskColor::gray(0)), (UnitSet{3}));
    const auto rs = exact_responsibility(img, h, grid, MaskColor::gray(0));
    EXPECT_EQ(rs[3], Responsibility::from_witness(0));
    EXPECT_TRUE(rs[0].is_zero());
}

TEST(OracleAgreement, FullThresholdInstanceAgrees) {
    Rng gen(2);
    OracleInstance inst{"full", random_image(4, 4, 1, gen), nullptr};
    const PixelSet obj{1, 2, 5, 6, 9};
    inst.classifier = std::make_shared<MonotoneThresholdClassifier>(obj, 5);
    const auto report = oracle_agreement({inst}, EngineConfig{});
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_EQ(report.rows[0].oracle_size, 5u);
    EXPECT_EQ(report.rows[0].engine_size, 5u);
    EXPECT_EQ(report.agreement_fraction, 1.0);
}

TEST(OracleAgreement, ConstantInstanceIsDegenerate) {
    OracleInstance inst{"const", Image(4, 4, 1, 3), std::make_shared<ConstantClassifier>("x")};
    const auto report = oracle_agreement({inst}, EngineConfig{});
    EXPECT_TRUE(report.rows[0].degenerate);
    EXPECT_EQ(report.rows[0].engine_size, 1u);
    EXPECT_EQ(report.non_degenerate, 0u);
    EXPECT_FALSE(report.agreement_fraction);
    const auto j = to_json(report);
    EXPECT_TRUE(j["agreement_fraction"].is_null());
    EXPECT_EQ(j["instances"][0]["units"], 16);
}

TEST(OracleAgreement, EngineNeverBeatsTheOracle) {
    const auto corpus = to_oracle_instances(oracle_suite(30, 5));
    EngineConfig cfg;
    cfg.iterations = 5;
    const auto report = oracle_agreement(corpus, cfg);
    for (const auto& row : report.rows) EXPECT_GE(row.engine_size, row.oracle_size) << row.id;
}
