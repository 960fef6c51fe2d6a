#pragma once
// Model adapter wire format: newline-delimited JSON over a child's stdin/stdout.
//
//   request   {"id": 7, "width": 4, "height": 4, "channels": 1, "pixels": "<base64 row-major bytes>"}
//   response  {"id": 7, "label": "cat", "confidence": 0.93}      confidence optional
//
// Responses may be out of order; `id` correlates them.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "compex/classifier.hpp"
#include "compex/errors.hpp"
#include "compex/image.hpp"

namespace compex::wire {

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw GatewayError("base64 payload length is not a multiple of 4");
    std::vector<std::uint8_t> out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw GatewayError("invalid base64 payload");
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

inline std::string encode_request(std::uint64_t id, const Image& image) {
    nlohmann::json j;
    j["id"] = id;
    j["width"] = image.width();
    j["height"] = image.height();
    j["channels"] = image.channels();
    j["pixels"] = base64_encode(image.bytes());
    return j.dump();
}

struct Request {
    std::uint64_t id;
    Image image;
};

inline Request decode_request(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        auto bytes = base64_decode(j.at("pixels").get<std::string>());
        return {j.at("id").get<std::uint64_t>(),
                Image(j.at("width").get<std::uint32_t>(), j.at("height").get<std::uint32_t>(),
                      j.at("channels").get<std::uint32_t>(), std::move(bytes))};
    } catch (const nlohmann::json::exception& e) {
        throw GatewayError(std::string("malformed request: ") + e.what());
    } catch (const ConfigError& e) {
        throw GatewayError(std::string("malformed request: ") + e.what());
    }
}

inline std::string encode_response(std::uint64_t id, const Verdict& v) {
    nlohmann::json j;
    j["id"] = id;
    j["label"] = v.label;
    if (v.confidence) j["confidence"] = *v.confidence;
    return j.dump();
}

struct Response {
    std::uint64_t id;
    Verdict verdict;
};

inline Response decode_response(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        if (!j.is_object()) throw GatewayError("response is not a JSON object");
        Response r{j.at("id").get<std::uint64_t>(), {j.at("label").get<std::string>(), std::nullopt}};
        if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) {
            const double c = it->get<double>();
            if (!(c >= 0.0 && c <= 1.0)) throw GatewayError("confidence outside [0, 1]");
            r.verdict.confidence = c;
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw GatewayError("malformed response line '" + std::string(line.substr(0, 200)) + "': " + e.what());
    }
}

}  // namespace compex::wire
