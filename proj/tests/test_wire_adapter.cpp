#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "compex/compex.hpp"

using namespace compex;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "compex_wire_test";
    fs::create_directories(dir);
    return dir / name;
}

// 4x4 gray monotone classifier over the left half, threshold 5.
fs::path write_config() {
    const auto path = scratch("mono.json");
    std::ofstream(path) << R"({"kind": "monotone-threshold", "width": 4, "height": 4, "channels": 1,
                              "object_rects": [[0, 0, 2, 4]], "threshold": 5})";
    return path;
}

std::string adapter_cmd(const std::string& extra = "") {
    return std::string("'") + COMPEX_ADAPTER_BIN + "' --config '" + write_config().string() + "' " + extra;
}

std::vector<Image> mutant_images() {
    std::vector<Image> out;
    Image base(4, 4, 1, 120);
    for (PixelIndex k = 0; k <= 8; ++k) {
        Image m = base;
        // Mask the first k object pixels (left half, row-major).
        PixelIndex masked = 0;
        for (PixelIndex p = 0; p < 16 && masked < k; ++p) {
            if (p % 4 < 2) {
                m.set_pixel(p, MaskColor::gray(0));
                ++masked;
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

TEST(Wire, Base64RoundTrip) {
    Rng rng(9);
    for (std::size_t n = 0; n < 70; ++n) {
        std::vector<std::uint8_t> bytes(n);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
        EXPECT_EQ(wire::base64_decode(wire::base64_encode(bytes)), bytes) << n;
    }
    EXPECT_EQ(wire::base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o'}), "Zm9v");
    EXPECT_THROW(wire::base64_decode("Zm9"), GatewayError);
}

TEST(Wire, RequestCarriesShapeAndPixels) {
    Image img(3, 2, 3);
    for (std::size_t i = 0; i < img.bytes().size(); ++i) img.bytes()[i] = static_cast<std::uint8_t>(i * 7);
    const std::string line = wire::encode_request(42, img);
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["id"], 42);
    EXPECT_EQ(j["width"], 3);
    EXPECT_EQ(j["height"], 2);
    EXPECT_EQ(j["channels"], 3);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    const auto req = wire::decode_request(line);
    EXPECT_EQ(req.id, 42u);
    EXPECT_EQ(req.image, img);
}

TEST(Wire, ResponseRoundTripAndValidation) {
    const auto r = wire::decode_response(wire::encode_response(7, Verdict{"cat", 0.25}));
    EXPECT_EQ(r.id, 7u);
    EXPECT_EQ(r.verdict.label, "cat");
    EXPECT_EQ(r.verdict.confidence, 0.25);
    EXPECT_FALSE(wire::decode_response(R"({"id": 1, "label": "x"})").verdict.confidence.has_value());
    EXPECT_THROW(wire::decode_response("{not json"), GatewayError);
    EXPECT_THROW(wire::decode_response(R"({"label": "x"})"), GatewayError);
    EXPECT_THROW(wire::decode_response(R"({"id": 1, "label": "x", "confidence": 1.5})"), GatewayError);
    EXPECT_THROW(wire::decode_request(R"({"id": 1, "width": 2, "height": 2, "channels": 1, "pixels": "AAA="})"),
                 GatewayError);
}

TEST(Adapter, MatchesInProcessClassifier) {
    auto remote = std::make_shared<SubprocessClassifier>(adapter_cmd());
    auto local = load_synthetic_spec(write_config()).build();
    for (const auto& img : mutant_images()) EXPECT_EQ(remote->classify(img).label, local->classify(img).label);
}

TEST(Adapter, OutOfOrderResponsesAreCorrelatedById) {
    auto remote = std::make_shared<SubprocessClassifier>(adapter_cmd("--window 4"));
    auto local = load_synthetic_spec(write_config()).build();
    ClassifierHandle h(remote);
    const auto images = mutant_images();
    const auto verdicts = h.classify_batch(images);
    ASSERT_EQ(verdicts.size(), images.size());
    for (std::size_t i = 0; i < images.size(); ++i) EXPECT_EQ(verdicts[i].label, local->classify(images[i]).label) << i;
    EXPECT_EQ(h.invocation_count(), images.size());
}

TEST(Adapter, MalformedLineAbortsTheSession) {
    ClassifierHandle h(std::make_shared<SubprocessClassifier>(adapter_cmd("--malformed-after 3")));
    const auto images = mutant_images();
    EXPECT_THROW(h.classify_batch(images), GatewayError);
    // The session stays broken.
    EXPECT_THROW(h.classify(Image(4, 4, 1, 1)), GatewayError);
}

TEST(Adapter, ChildExitIsAGatewayError) {
    ClassifierHandle h(std::make_shared<SubprocessClassifier>(adapter_cmd("--exit-after 2")));
    const auto images = mutant_images();
    try {
        h.classify_batch(images);
        FAIL() << "expected a gateway error";
    } catch (const BatchItemError& e) {
        EXPECT_EQ(e.index, 2u);
    }
}

TEST(Adapter, MissingBinaryIsAGatewayError) {
    ClassifierHandle h(std::make_shared<SubprocessClassifier>("/nonexistent/compex-model-adapter"));
    EXPECT_THROW(h.classify(Image(4, 4, 1, 1)), GatewayError);
}

TEST(Adapter, EngineRunMatchesInProcessRun) {
    EngineConfig cfg;
    cfg.iterations = 5;
    cfg.seed = 4;
    Image img(4, 4, 1, 120);
    ClassifierHandle remote(std::make_shared<SubprocessClassifier>(adapter_cmd("--window 3")));
    ClassifierHandle local(load_synthetic_spec(write_config()).build());
    const auto a = explain(img, remote, cfg);
    const auto b = explain(img, local, cfg);
    EXPECT_EQ(a.ranking.order, b.ranking.order);
    EXPECT_EQ(a.explanation.pixels, b.explanation.pixels);
    EXPECT_EQ(remote.invocation_count(), local.invocation_count());
}
