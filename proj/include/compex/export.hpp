#pragma once
// Ranking CSV, heatmaps and JSON summaries.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compex/engine.hpp"
#include "compex/errors.hpp"
#include "compex/image.hpp"
#include "compex/synthetic.hpp"

namespace compex {

inline constexpr const char* kToolVersion = "0.3.0";

inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

// Header x,y,score,rank; rows in rank order, rank starting at 1.
inline std::string ranking_csv(const Ranking& r) {
    std::string out = "x,y,score,rank\n";
    out.reserve(out.size() + r.order.size() * 24);
    for (std::size_t i = 0; i < r.order.size(); ++i) {
        const PixelIndex p = r.order[i];
        out += std::to_string(p % r.width);
        out += ',';
        out += std::to_string(p / r.width);
        out += ',';
        out += format_double(r.scores[p]);
        out += ',';
        out += std::to_string(i + 1);
        out += '\n';
    }
    return out;
}

inline void write_ranking_csv(const std::filesystem::path& path, const Ranking& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << ranking_csv(r);
    if (!out) throw IoError("cannot write " + path.string());
}

// Rows are taken in file order; the file must list every pixel exactly once.
inline Ranking parse_ranking_csv(std::istream& in, std::uint32_t width, std::uint32_t height,
                                 const std::string& name = "ranking") {
    std::string line;
    if (!std::getline(in, line)) throw SpecError(name + ": empty ranking file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x,y,score,rank") throw SpecError(name + ": expected header x,y,score,rank");

    Ranking r;
    r.width = width;
    r.height = height;
    const std::size_t n = std::size_t{width} * height;
    r.scores.assign(n, 0.0);
    std::vector<std::uint8_t> seen(n, 0);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::array<std::string, 4> f;
        std::stringstream ss(line);
        for (auto& field : f) {
            if (!std::getline(ss, field, ',')) throw SpecError(name + ":" + std::to_string(lineno) + ": expected 4 fields");
        }
        std::uint32_t x = 0, y = 0;
        double score = 0.0;
        try {
            x = static_cast<std::uint32_t>(std::stoul(f[0]));
            y = static_cast<std::uint32_t>(std::stoul(f[1]));
            score = std::stod(f[2]);
        } catch (const std::exception&) {
            throw SpecError(name + ":" + std::to_string(lineno) + ": malformed row");
        }
        if (x >= width || y >= height) throw SpecError(name + ":" + std::to_string(lineno) + ": pixel outside image");
        const PixelIndex p = y * width + x;
        if (seen[p]++) throw SpecError(name + ":" + std::to_string(lineno) + ": duplicate pixel");
        r.order.push_back(p);
        r.scores[p] = score;
    }
    if (r.order.size() != n) throw SpecError(name + ": ranking does not cover every pixel");
    return r;
}

inline Ranking read_ranking_csv(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_ranking_csv(in, width, height, path.string());
}

// Score field min-max normalized and mapped through a blue-cyan-yellow-red ramp.
inline Image heatmap(const Ranking& r) {
    Image out(r.width, r.height, 3);
    if (r.scores.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(r.scores.begin(), r.scores.end());
    const double lo = *lo_it, span = *hi_it - *lo_it;
    constexpr std::array<std::array<double, 3>, 5> stops{{{0, 0, 128}, {0, 128, 255}, {0, 255, 255}, {255, 255, 0},
                                                          {255, 0, 0}}};
    for (PixelIndex p = 0; p < r.scores.size(); ++p) {
        const double t = span > 0 ? (r.scores[p] - lo) / span : 0.0;
        const std::uint8_t level = static_cast<std::uint8_t>(std::lround(t * 255.0));
        const double pos = level / 255.0 * (stops.size() - 1);
        const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(pos), stops.size() - 2);
        const double f = pos - static_cast<double>(i);
        auto px = out.bytes().subspan(std::size_t{p} * 3, 3);
        for (std::size_t c = 0; c < 3; ++c) {
            px[c] = static_cast<std::uint8_t>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
        }
    }
    return out;
}

inline nlohmann::json to_json(const EngineConfig& c) {
    return {{"parts", c.parts},
            {"partitions", c.iterations},
            {"min_frac", c.min_frac},
            {"refine_threshold", c.refine_threshold.to_string()},
            {"mask_color", mask_color_to_json(c.mask_color)},
            {"seed", c.seed},
            {"greedy_step", c.greedy_step},
            {"max_depth", c.max_depth ? nlohmann::json(*c.max_depth) : nlohmann::json(nullptr)},
            {"repeat_first_iteration", c.repeat_first_iteration}};
}

inline nlohmann::json to_json(const EngineStats& s) {
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t d = 0; d < s.levels.size(); ++d) {
        levels.push_back({{"depth", d}, {"nodes", s.levels[d].nodes}, {"mutants_submitted", s.levels[d].mutants_submitted}});
    }
    return {{"original", s.original_invocations},
            {"ranking", s.ranking_invocations},
            {"extraction", s.extraction_invocations},
            {"total", s.total_invocations()},
            {"levels", levels}};
}

inline nlohmann::json explanation_summary(const ExplainResult& r, const EngineConfig& config) {
    return {{"label", r.original.label},
            {"certificate_label", r.explanation.certificate.label},
            {"explanation_size", r.explanation.pixels.size()},
            {"total_pixels", r.ranking.order.size()},
            {"invocations", to_json(r.stats)},
            {"seed", config.seed},
            {"config", to_json(config)}};
}

// Wall-clock timestamps, or SOURCE_DATE_EPOCH when set so reruns are byte-identical.
inline std::string run_timestamp() {
    std::time_t t;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunManifest {
    std::string command;
    nlohmann::json config;
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json outputs = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string started;
    std::string finished;
    std::uint64_t invocations = 0;

    nlohmann::json to_json() const {
        return {{"tool", "compex"},
                {"version", kToolVersion},
                {"command", command},
                {"config", config},
                {"inputs", inputs},
                {"outputs", outputs},
                {"seed", seed},
                {"jobs", jobs},
                {"started", started},
                {"finished", finished},
                {"invocations", invocations}};
    }
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace compex
