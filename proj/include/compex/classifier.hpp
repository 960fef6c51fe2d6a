#pragma once
// The black-box boundary. Everything upstream sees a classifier only through
// ClassifierHandle: image in, label out, with an exact-byte verdict cache and an
// invocation counter.

#include <atomic>
#include <cstdint>
#include <exception>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "compex/errors.hpp"
#include "compex/image.hpp"

namespace compex {

struct Verdict {
    std::string label;
    std::optional<double> confidence;

    // The engine only ever compares labels.
    bool same_label(const Verdict& o) const noexcept { return label == o.label; }
    friend bool operator==(const Verdict&, const Verdict&) = default;
};

// A model. Implementations must be deterministic and safe to call concurrently.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual Verdict classify(const Image& image) = 0;

    // Element-wise classify. Backends with per-call overhead override this.
    virtual std::vector<Verdict> classify_batch(std::span<const Image* const> images) {
        std::vector<Verdict> out;
        out.reserve(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) {
            try {
                out.push_back(classify(*images[i]));
            } catch (const BatchItemError&) {
                throw;
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                throw BatchItemError(i, e.what());
            }
        }
        return out;
    }
};

struct ImageShape {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 0;

    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

inline ImageShape shape_of(const Image& img) { return {img.width(), img.height(), img.channels()}; }

struct HandleOptions {
    bool cache = true;
    std::optional<ImageShape> expected_shape;
};

class ClassifierHandle {
public:
    explicit ClassifierHandle(std::shared_ptr<Classifier> model, HandleOptions options = {})
        : model_(std::move(model)), options_(options) {
        if (!model_) throw ConfigError("classifier handle needs a model");
    }

    ClassifierHandle(const ClassifierHandle&) = delete;
    ClassifierHandle& operator=(const ClassifierHandle&) = delete;

    Verdict classify(const Image& image) {
        check_shape(image);
        if (!options_.cache) return run_one(image);

        auto key = cache_key(image);
        std::promise<Verdict> promise;
        std::shared_future<Verdict> pending;
        {
            std::lock_guard lock(mu_);
            if (auto it = cache_.find(key); it != cache_.end()) {
                pending = it->second;
            } else {
                cache_.emplace(key, promise.get_future().share());
            }
        }
        if (pending.valid()) return pending.get();

        try {
            Verdict v = run_one(image);
            promise.set_value(v);
            return v;
        } catch (...) {
            promise.set_exception(std::current_exception());
            std::lock_guard lock(mu_);
            cache_.erase(key);
            throw;
        }
    }

    // Distinct uncached images go to the backend in a single batch call.
    std::vector<Verdict> classify_batch(std::span<const Image> images) {
        for (const auto& img : images) check_shape(img);
        if (images.empty()) return {};

        if (!options_.cache) {
            std::vector<const Image*> ptrs;
            ptrs.reserve(images.size());
            for (const auto& img : images) ptrs.push_back(&img);
            auto out = run_batch(ptrs);
            return out;
        }

        std::vector<std::shared_future<Verdict>> futures(images.size());
        std::vector<std::string> keys;
        std::vector<std::promise<Verdict>> promises;
        std::vector<const Image*> to_run;
        std::vector<std::size_t> caller_index;
        {
            std::lock_guard lock(mu_);
            for (std::size_t i = 0; i < images.size(); ++i) {
                auto key = cache_key(images[i]);
                if (auto it = cache_.find(key); it != cache_.end()) {
                    futures[i] = it->second;
                    continue;
                }
                auto& p = promises.emplace_back();
                futures[i] = p.get_future().share();
                cache_.emplace(key, futures[i]);
                keys.push_back(std::move(key));
                to_run.push_back(&images[i]);
                caller_index.push_back(i);
            }
        }

        if (!to_run.empty()) {
            try {
                auto verdicts = run_batch(to_run);
                for (std::size_t j = 0; j < verdicts.size(); ++j) promises[j].set_value(std::move(verdicts[j]));
            } catch (...) {
                auto err = std::current_exception();
                {
                    std::lock_guard lock(mu_);
                    for (const auto& k : keys) cache_.erase(k);
                }
                for (auto& p : promises) p.set_exception(err);
                try {
                    throw;
                } catch (const BatchItemError& e) {
                    throw BatchItemError(caller_index.at(std::min(e.index, caller_index.size() - 1)),
                                         strip_prefix(e.what()));
                }
            }
        }

        std::vector<Verdict> out;
        out.reserve(images.size());
        for (auto& f : futures) out.push_back(f.get());
        return out;
    }

    std::uint64_t invocation_count() const noexcept { return count_.load(); }
    bool caching() const noexcept { return options_.cache; }
    const HandleOptions& options() const noexcept { return options_; }

private:
    void check_shape(const Image& image) const {
        if (options_.expected_shape && *options_.expected_shape != shape_of(image)) {
            const auto& s = *options_.expected_shape;
            throw ConfigError("classifier expects " + std::to_string(s.width) + "x" + std::to_string(s.height) +
                              "x" + std::to_string(s.channels) + " images, got " + std::to_string(image.width()) +
                              "x" + std::to_string(image.height()) + "x" + std::to_string(image.channels()));
        }
    }

    Verdict run_one(const Image& image) {
        try {
            Verdict v = model_->classify(image);
            count_.fetch_add(1);
            return v;
        } catch (const GatewayError&) {
            throw;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw GatewayError(e.what());
        }
    }

    std::vector<Verdict> run_batch(std::span<const Image* const> images) {
        std::vector<Verdict> out;
        try {
            out = model_->classify_batch(images);
        } catch (const GatewayError&) {
            throw;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw GatewayError(e.what());
        }
        if (out.size() != images.size()) {
            throw GatewayError("backend returned " + std::to_string(out.size()) + " verdicts for " +
                               std::to_string(images.size()) + " images");
        }
        count_.fetch_add(out.size());
        return out;
    }

    static std::string strip_prefix(const std::string& what) {
        const auto pos = what.find(": ");
        return what.rfind("batch item ", 0) == 0 && pos != std::string::npos ? what.substr(pos + 2) : what;
    }

    static std::string cache_key(const Image& image) {
        std::string key;
        const auto bytes = image.bytes();
        key.reserve(12 + bytes.size());
        for (std::uint32_t v : {image.width(), image.height(), image.channels()}) {
            key.append(reinterpret_cast<const char*>(&v), sizeof v);
        }
        key.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        return key;
    }

    std::shared_ptr<Classifier> model_;
    HandleOptions options_;
    std::atomic<std::uint64_t> count_{0};
    std::mutex mu_;
    std::unordered_map<std::string, std::shared_future<Verdict>> cache_;
};

}  // namespace compex
