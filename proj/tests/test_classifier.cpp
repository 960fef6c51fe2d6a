#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "compex/compex.hpp"

using namespace compex;

namespace {

PixelSet all_pixels(std::uint32_t n) {
    PixelSet s(n);
    for (PixelIndex p = 0; p < n; ++p) s[p] = p;
    return s;
}

// Counts backend calls independently of the handle's own counter.
class CountingClassifier final : public Classifier {
public:
    explicit CountingClassifier(std::shared_ptr<Classifier> inner) : inner_(std::move(inner)) {}
    Verdict classify(const Image& image) override {
        ++calls;
        return inner_->classify(image);
    }
    std::atomic<int> calls{0};

private:
    std::shared_ptr<Classifier> inner_;
};

class FailingClassifier final : public Classifier {
public:
    explicit FailingClassifier(int fail_on) : fail_on_(fail_on) {}
    Verdict classify(const Image& image) override {
        if (image.at(0, 0) == fail_on_) throw std::runtime_error("backend exploded");
        return {"ok", std::nullopt};
    }

private:
    int fail_on_;
};

}  // namespace

TEST(MonotoneThreshold, CountsUnmaskedObjectPixels) {
    MonotoneThresholdClassifier c(all_pixels(16), 3);
    Image img(4, 4, 1, 200);
    EXPECT_EQ(c.classify(img).label, "object");
    Image masked = img;
    for (PixelIndex p = 0; p < 14; ++p) masked.set_pixel(p, MaskColor::gray(0));
    EXPECT_EQ(c.classify(masked).label, "background");
    masked.copy_pixel_from(img, 0);  // 3 unmasked again
    EXPECT_EQ(c.classify(masked).label, "object");
}

TEST(MonotoneThreshold, RejectsThresholdOutsideObject) {
    EXPECT_THROW(MonotoneThresholdClassifier(PixelSet{1, 2}, 0), ConfigError);
    EXPECT_THROW(MonotoneThresholdClassifier(PixelSet{1, 2}, 3), ConfigError);
    EXPECT_THROW(MonotoneThresholdClassifier(PixelSet{}, 1), ConfigError);
}

TEST(MonotoneThreshold, MaskingMoreNeverFlipsNegativeToPositive) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const Image img = random_image(5, 4, 1, rng);
        const PixelSet obj = random_pixel_set(5, 4, rng);
        MonotoneThresholdClassifier c(obj, 1 + draw_below(rng, static_cast<std::uint32_t>(obj.size())));
        Image cur = img;
        bool negative = false;
        for (int step = 0; step < 20; ++step) {
            cur.set_pixel(draw_below(rng, 20), MaskColor::gray(0));
            const bool pos = c.classify(cur).label == "object";
            if (negative) EXPECT_FALSE(pos);
            negative = negative || !pos;
        }
    }
}

TEST(Template, PositiveOnlyWhenRegionMatches) {
    Image ref(4, 4, 3);
    for (PixelIndex p = 0; p < 16; ++p) ref.set_pixel(p, MaskColor::rgb(10 + p, 20, 30));
    auto c = TemplateClassifier::from_image(ref, PixelSet{5, 6, 9});
    EXPECT_EQ(c->classify(ref).label, "object");
    Image other = ref;
    other.set_pixel(0, MaskColor::rgb(0, 0, 0));  // outside the region
    EXPECT_EQ(c->classify(other).label, "object");
    for (PixelIndex p : {5u, 6u, 9u}) {
        Image m = ref;
        m.set_pixel(p, MaskColor::rgb(0, 0, 0));
        EXPECT_EQ(c->classify(m).label, "background") << p;
    }
}

TEST(Template, RejectsExpectedValueEqualToMaskColor) {
    Image ref(2, 2, 1, 0);
    EXPECT_THROW(TemplateClassifier::from_image(ref, PixelSet{0}), ConfigError);
}

TEST(SyntheticConfig, ParsesMonotoneAndTemplateConfigs) {
    const auto mono = parse_synthetic_spec(nlohmann::json::parse(R"({
        "kind": "monotone-threshold", "width": 4, "height": 4, "channels": 1,
        "object_rects": [[0, 0, 2, 2]], "object_pixels": [15], "threshold": 2,
        "positive_label": "cat", "negative_label": "dog"})"),
                                          ".");
    EXPECT_EQ(mono.pixels, (PixelSet{0, 1, 4, 5, 15}));
    auto c = mono.build();
    Image img(4, 4, 1, 9);
    EXPECT_EQ(c->classify(img).label, "cat");
    EXPECT_EQ(c->classify(Image(4, 4, 1, 0)).label, "dog");

    const auto tmpl = parse_synthetic_spec(nlohmann::json::parse(R"({
        "kind": "template", "width": 2, "height": 1, "channels": 1,
        "region_pixels": [1], "expected": [77]})"),
                                          ".");
    auto t = tmpl.build();
    EXPECT_EQ(t->classify(Image(2, 1, 1, std::vector<std::uint8_t>{0, 77})).label, "object");
    EXPECT_EQ(t->classify(Image(2, 1, 1, std::vector<std::uint8_t>{77, 76})).label, "background");

    // Round trip through the serialized form.
    const auto again = parse_synthetic_spec(to_json(tmpl), ".");
    EXPECT_EQ(again.expected, tmpl.expected);
    EXPECT_EQ(again.pixels, tmpl.pixels);
}

TEST(SyntheticConfig, RejectsMalformedConfigs) {
    auto parse = [](const char* text) { return parse_synthetic_spec(nlohmann::json::parse(text), "."); };
    EXPECT_THROW(parse(R"({"kind": "nope"})"), ConfigError);
    EXPECT_THROW(parse(R"({"kind": "monotone-threshold", "width": 2, "height": 2, "object_pixels": [9], "threshold": 1})"),
                 ConfigError);
    EXPECT_THROW(parse(R"({"kind": "monotone-threshold", "width": 2, "height": 2, "object_pixels": [1], "threshold": 2})")
                     .build(),
                 ConfigError);
    EXPECT_THROW(parse(R"({"kind": "template", "width": 2, "height": 1, "region_pixels": [0, 1], "expected": [1]})"),
                 ConfigError);
}

TEST(Handle, FreshHandleCountsZeroAndCachesRepeats) {
    auto backend = std::make_shared<CountingClassifier>(std::make_shared<ConstantClassifier>("x"));
    ClassifierHandle h(backend);
    EXPECT_EQ(h.invocation_count(), 0u);
    Image img(3, 3, 1, 4);
    EXPECT_EQ(h.classify(img).label, "x");
    EXPECT_EQ(h.invocation_count(), 1u);
    EXPECT_EQ(h.classify(img).label, "x");
    EXPECT_EQ(h.invocation_count(), 1u);
    EXPECT_EQ(backend->calls.load(), 1);

    // Same bytes but a different shape is a different image.
    Image flat(9, 1, 1, 4);
    h.classify(flat);
    EXPECT_EQ(h.invocation_count(), 2u);
}

TEST(Handle, DeterministicAcrossRepeatedCalls) {
    auto model = std::make_shared<MonotoneThresholdClassifier>(all_pixels(16), 9);
    for (bool cache : {true, false}) {
        ClassifierHandle h(model, HandleOptions{cache, std::nullopt});
        Rng rng(1);
        const Image img = random_image(4, 4, 1, rng);
        const Verdict first = h.classify(img);
        for (int i = 0; i < 100; ++i) EXPECT_EQ(h.classify(img), first);
        EXPECT_EQ(h.invocation_count(), cache ? 1u : 101u);
    }
}

TEST(Handle, BatchDedupesAndMatchesElementwise) {
    auto model = std::make_shared<MonotoneThresholdClassifier>(all_pixels(4), 2);
    ClassifierHandle batch_handle(model);
    ClassifierHandle single_handle(model);
    EXPECT_TRUE(batch_handle.classify_batch(std::span<const Image>{}).empty());

    std::vector<Image> images;
    for (std::uint8_t v : {0, 5, 0, 5, 9}) images.emplace_back(2, 2, 1, v);
    images[4].set_pixel(0, MaskColor::gray(0));
    const auto verdicts = batch_handle.classify_batch(images);
    ASSERT_EQ(verdicts.size(), images.size());
    for (std::size_t i = 0; i < images.size(); ++i) EXPECT_EQ(verdicts[i], single_handle.classify(images[i]));
    EXPECT_EQ(batch_handle.invocation_count(), 3u);
}

TEST(Handle, FifteenMutantBatch) {
    auto model = std::make_shared<MonotoneThresholdClassifier>(all_pixels(16), 8);
    ClassifierHandle h(model);
    Image img(4, 4, 1, 100);
    const auto mutants = detail::nontrivial_mutants(img, split_at(img.bounds(), 2, 2), MaskColor::gray(0));
    ASSERT_EQ(mutants.size(), 15u);
    EXPECT_EQ(h.classify_batch(mutants).size(), 15u);
    EXPECT_EQ(h.invocation_count(), 15u);
}

TEST(Handle, ShapeMismatchIsConfigError) {
    HandleOptions opt;
    opt.expected_shape = ImageShape{4, 4, 1};
    ClassifierHandle h(std::make_shared<ConstantClassifier>("x"), opt);
    EXPECT_THROW(h.classify(Image(4, 4, 3)), ConfigError);
    EXPECT_NO_THROW(h.classify(Image(4, 4, 1)));
}

TEST(Handle, BackendFailureBecomesGatewayErrorWithIndex) {
    ClassifierHandle h(std::make_shared<FailingClassifier>(7));
    EXPECT_THROW(h.classify(Image(1, 1, 1, 7)), GatewayError);
    std::vector<Image> batch{Image(1, 1, 1, 1), Image(1, 1, 1, 2), Image(1, 1, 1, 7)};
    try {
        h.classify_batch(batch);
        FAIL() << "expected BatchItemError";
    } catch (const BatchItemError& e) {
        EXPECT_EQ(e.index, 2u);
    }
    // Failures are not cached.
    EXPECT_THROW(h.classify(Image(1, 1, 1, 7)), GatewayError);
}

TEST(Handle, ConcurrentCallersShareOneClassification) {
    auto backend = std::make_shared<CountingClassifier>(std::make_shared<ConstantClassifier>("x"));
    ClassifierHandle h(backend);
    std::vector<Image> images;
    for (int i = 0; i < 32; ++i) images.emplace_back(2, 2, 1, static_cast<std::uint8_t>(i));
    std::vector<std::jthread> workers;
    for (int t = 0; t < 8; ++t) {
        workers.emplace_back([&] {
            for (int round = 0; round < 20; ++round) {
                for (const auto& img : images) EXPECT_EQ(h.classify(img).label, "x");
            }
        });
    }
    workers.clear();
    EXPECT_EQ(h.invocation_count(), 32u);
    EXPECT_EQ(backend->calls.load(), 32);
}
