#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "compex/image.hpp"

namespace compex {

// Degree of responsibility: exactly 0 or 1/(k+1) for a smallest witness of size k.
// Stored as k, so ordering and equality are exact integer comparisons.
class Responsibility {
public:
    constexpr Responsibility() = default;

    static constexpr Responsibility zero() noexcept { return {}; }
    static constexpr Responsibility from_witness(std::uint32_t k) noexcept {
        Responsibility r;
        r.witness_ = k;
        return r;
    }

    constexpr bool is_zero() const noexcept { return !witness_.has_value(); }
    // Smallest witness size; empty for the zero responsibility.
    constexpr std::optional<std::uint32_t> witness_size() const noexcept { return witness_; }
    // Denominator k+1, or 0 for the zero responsibility.
    constexpr std::uint64_t denominator() const noexcept { return witness_ ? std::uint64_t{*witness_} + 1 : 0; }

    double value() const noexcept { return witness_ ? 1.0 / static_cast<double>(*witness_ + 1.0) : 0.0; }

    std::string to_string() const {
        if (!witness_) return "0";
        if (*witness_ == 0) return "1";
        return "1/" + std::to_string(std::uint64_t{*witness_} + 1);
    }

    static Responsibility parse(const std::string& text) {
        if (text == "0") return zero();
        if (text == "1") return from_witness(0);
        if (text.rfind("1/", 0) == 0) {
            const auto den = std::stoull(text.substr(2));
            if (den >= 1) return from_witness(static_cast<std::uint32_t>(den - 1));
        }
        throw ConfigError("responsibility must be 0, 1 or 1/n, got '" + text + "'");
    }

    friend constexpr bool operator==(const Responsibility&, const Responsibility&) = default;
    friend constexpr std::strong_ordering operator<=>(const Responsibility& a, const Responsibility& b) noexcept {
        if (a.is_zero() || b.is_zero()) return b.is_zero() <=> a.is_zero();
        return *b.witness_ <=> *a.witness_;
    }

private:
    std::optional<std::uint32_t> witness_;
};

// Superpixel -> responsibility, in the order the engine produced it. Rects are pairwise disjoint.
struct ResponsibilityMap {
    struct Entry {
        Rect rect;
        Responsibility value;
        std::uint32_t depth = 0;
        friend bool operator==(const Entry&, const Entry&) = default;
    };

    std::vector<Entry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
    auto begin() const noexcept { return entries.begin(); }
    auto end() const noexcept { return entries.end(); }

    std::optional<Responsibility> at(const Rect& r) const {
        for (const auto& e : entries) {
            if (e.rect == r) return e.value;
        }
        return std::nullopt;
    }

    friend bool operator==(const ResponsibilityMap&, const ResponsibilityMap&) = default;
};

}  // namespace compex
