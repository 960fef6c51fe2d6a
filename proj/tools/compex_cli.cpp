// compex: compositional causal explanations for black-box image classifiers.
//
// Exit codes: 0 ok, 2 configuration/usage error, 3 classifier or adapter
// failure, 4 I/O error, 5 oracle unit cap exceeded.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "compex/compex.hpp"
#include "compex/suites.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kConfig = 2, kClassifier = 3, kIo = 4, kCapacity = 5 };

struct EngineFlags {
    std::uint32_t partitions = 50;
    std::uint64_t seed = 0;
    std::string mask_color = "0,0,0";
    double min_frac = 0.1;
    std::uint32_t greedy_step = 1;
    std::string refine_threshold = "0";
    std::optional<std::uint32_t> max_depth;
    std::size_t jobs = 1;

    void add_to(CLI::App& app) {
        app.add_option("--partitions,-N", partitions, "Number of sampled partitions")
            ->capture_default_str()
            ->check(CLI::PositiveNumber);
        app.add_option("--seed", seed, "Random seed")->capture_default_str();
        app.add_option("--mask-color", mask_color, "Masking color as R,G,B or a single gray value")
            ->capture_default_str();
        app.add_option("--min-frac", min_frac, "Stop refining parts smaller than this fraction of the image")
            ->capture_default_str()
            ->check(CLI::Range(0.0, 1.0));
        app.add_option("--greedy-step", greedy_step, "Pixels added per sufficiency test")
            ->capture_default_str()
            ->check(CLI::PositiveNumber);
        app.add_option("--refine-threshold", refine_threshold, "Refine parts with responsibility above this (0, 1 or 1/n)")
            ->capture_default_str();
        app.add_option("--max-depth", max_depth, "Deepest refinement level (0 = root partition only)");
        app.add_option("--jobs,-j", jobs, "Worker threads; results do not depend on it")
            ->capture_default_str()
            ->check(CLI::PositiveNumber);
    }

    compex::EngineConfig config() const {
        compex::EngineConfig c;
        c.iterations = partitions;
        c.seed = seed;
        c.mask_color = parse_color(mask_color);
        c.min_frac = min_frac;
        c.greedy_step = greedy_step;
        c.refine_threshold = compex::Responsibility::parse(refine_threshold);
        c.max_depth = max_depth;
        c.jobs = jobs;
        c.validate();
        return c;
    }

    static compex::MaskColor parse_color(const std::string& text) {
        std::vector<int> v;
        std::stringstream ss(text);
        std::string part;
        while (std::getline(ss, part, ',')) {
            try {
                std::size_t used = 0;
                v.push_back(std::stoi(part, &used));
                if (used != part.size()) throw std::invalid_argument(part);
            } catch (const std::exception&) {
                throw compex::ConfigError("--mask-color expects integers, got '" + text + "'");
            }
        }
        for (int c : v) {
            if (c < 0 || c > 255) throw compex::ConfigError("--mask-color channels must lie in [0, 255]");
        }
        if (v.size() == 1) return compex::MaskColor::gray(static_cast<std::uint8_t>(v[0]));
        if (v.size() == 3) {
            return compex::MaskColor::rgb(static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]),
                                          static_cast<std::uint8_t>(v[2]));
        }
        throw compex::ConfigError("--mask-color expects R,G,B or a single value");
    }
};

struct ClassifierFlags {
    std::string adapter_cmd;
    std::string synthetic_config;
    bool no_cache = false;

    void add_to(CLI::App& app, bool required) {
        auto* a = app.add_option("--adapter-cmd", adapter_cmd, "Model adapter command (wire protocol on stdin/stdout)")
                      ->envname("COMPEX_ADAPTER_CMD");
        auto* s = app.add_option("--synthetic-config", synthetic_config, "Synthetic classifier config (JSON)");
        a->excludes(s);
        if (required) app.require_option(1);
        app.add_flag("--no-cache", no_cache, "Disable the exact-byte verdict cache");
    }

    bool given() const { return !adapter_cmd.empty() || !synthetic_config.empty(); }

    std::shared_ptr<compex::Classifier> model() const {
        if (!synthetic_config.empty()) return compex::load_synthetic_spec(synthetic_config).build();
        if (!adapter_cmd.empty()) return std::make_shared<compex::SubprocessClassifier>(adapter_cmd);
        throw compex::ConfigError("a classifier is required: --synthetic-config or --adapter-cmd");
    }

    json describe() const {
        if (!synthetic_config.empty()) return {{"synthetic_config", synthetic_config}};
        return {{"adapter_cmd", adapter_cmd}};
    }

    compex::HandleOptions options() const {
        compex::HandleOptions o;
        o.cache = !no_cache;
        return o;
    }
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw compex::IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Maps exceptions to exit codes with a one-line diagnostic on stderr.
template <class Fn>
int guarded(const char* cmd, Fn&& fn) {
    try {
        return fn();
    } catch (const compex::CapacityError& e) {
        std::cerr << "compex " << cmd << ": " << e.what() << '\n';
        return kCapacity;
    } catch (const compex::GatewayError& e) {
        std::cerr << "compex " << cmd << ": classifier failure: " << e.what() << '\n';
        return kClassifier;
    } catch (const compex::IoError& e) {
        std::cerr << "compex " << cmd << ": " << e.what() << '\n';
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "compex " << cmd << ": " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {  // ConfigError, SpecError, EmptyCorpus, DegenerateRegion
        std::cerr << "compex " << cmd << ": " << e.what() << '\n';
        return kConfig;
    } catch (const std::out_of_range& e) {
        std::cerr << "compex " << cmd << ": " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "compex " << cmd << ": " << e.what() << '\n';
        return kClassifier;
    }
}

// ---- explain ---------------------------------------------------------------

struct ExplainArgs {
    std::string image;
    std::string out;
    EngineFlags engine;
    ClassifierFlags classifier;
};

int run_explain(const ExplainArgs& a) {
    const auto started = compex::run_timestamp();
    const auto config = a.engine.config();
    const compex::Image image = compex::read_image(a.image);
    compex::ClassifierHandle handle(a.classifier.model(), a.classifier.options());

    std::cerr << "compex explain: " << image.width() << "x" << image.height() << ", N=" << config.iterations
              << ", seed=" << config.seed << '\n';
    const auto result = compex::explain(image, handle, config);

    const fs::path out(a.out);
    ensure_dir(out);
    compex::write_ranking_csv(out / "ranking.csv", result.ranking);
    compex::write_mask(out / "explanation.png", result.explanation.sorted_pixels(), image.width(), image.height());
    compex::write_image(out / "heatmap.png", compex::heatmap(result.ranking));
    const json summary = compex::explanation_summary(result, config);
    compex::write_json(out / "summary.json", summary);

    compex::RunManifest m;
    m.command = "explain";
    m.config = compex::to_json(config);
    m.inputs = {{"image", a.image}, {"classifier", a.classifier.describe()}, {"cache", !a.classifier.no_cache}};
    m.outputs = {{"ranking", (out / "ranking.csv").string()},
                 {"explanation", (out / "explanation.png").string()},
                 {"heatmap", (out / "heatmap.png").string()},
                 {"summary", (out / "summary.json").string()}};
    m.seed = config.seed;
    m.jobs = config.jobs;
    m.started = started;
    m.finished = compex::run_timestamp();
    m.invocations = result.stats.total_invocations();
    compex::write_json(out / "manifest.json", m.to_json());

    std::cout << summary.dump() << '\n';
    return kOk;
}

// ---- rank: batch over a corpus manifest ------------------------------------

struct RankArgs {
    std::string manifest;
    std::string out;
    std::string baseline;
    EngineFlags engine;
    ClassifierFlags classifier;
};

std::shared_ptr<compex::Classifier> instance_model(const compex::ManifestEntry& e, const fs::path& base,
                                                   const ClassifierFlags& flags) {
    if (flags.given()) return flags.model();
    if (e.classifier) return compex::load_synthetic_spec(base / *e.classifier).build();
    throw compex::ConfigError("instance '" + e.id + "' names no classifier; pass --synthetic-config or --adapter-cmd");
}

int run_rank(const RankArgs& a) {
    const auto config = a.engine.config();
    const fs::path manifest(a.manifest);
    const auto entries = compex::read_manifest(manifest);
    if (entries.empty()) throw compex::EmptyCorpus("manifest " + a.manifest + " lists no instances");
    if (!a.baseline.empty() && a.baseline != "random") throw compex::ConfigError("--baseline must be 'random'");
    const fs::path base = manifest.parent_path();
    const fs::path out(a.out);
    ensure_dir(out);

    std::shared_ptr<compex::Classifier> shared = a.classifier.given() ? a.classifier.model() : nullptr;
    std::uint64_t invocations = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const compex::Image image = compex::read_image(base / e.occluded);
        compex::ClassifierHandle handle(shared ? shared : instance_model(e, base, a.classifier), a.classifier.options());
        compex::Ranking ranking;
        compex::Explanation explanation;
        if (a.baseline == "random") {
            compex::Rng rng = compex::make_stream(config.seed, i);
            ranking = compex::random_baseline_ranking(image, rng);
            explanation = compex::extract_explanation(image, ranking, handle, config);
        } else {
            auto result = compex::explain(image, handle, config);
            ranking = std::move(result.ranking);
            explanation = std::move(result.explanation);
        }
        invocations += handle.invocation_count();
        compex::write_ranking_csv(out / (e.id + ".csv"), ranking);
        compex::write_mask(out / (e.id + ".png"), explanation.sorted_pixels(), image.width(), image.height());
        std::cerr << "compex rank: " << e.id << " explanation " << explanation.pixels.size() << " px\n";
    }
    json summary{{"instances", entries.size()},
                 {"ranker", a.baseline.empty() ? "engine" : a.baseline},
                 {"invocations", invocations},
                 {"config", compex::to_json(config)}};
    compex::write_json(out / "rank_summary.json", summary);
    std::cout << summary.dump() << '\n';
    return kOk;
}

// ---- oracle ----------------------------------------------------------------

struct OracleArgs {
    std::string corpus;
    std::size_t builtin = 0;
    std::string out;
    EngineFlags engine;
};

// Corpus lines: {"id", "image", "classifier"} with paths relative to the corpus file.
std::vector<compex::OracleInstance> read_oracle_corpus(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw compex::IoError("cannot open corpus " + path.string());
    std::vector<compex::OracleInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            compex::OracleInstance inst;
            inst.id = j.at("id").get<std::string>();
            inst.image = compex::read_image(path.parent_path() / j.at("image").get<std::string>());
            inst.classifier =
                compex::load_synthetic_spec(path.parent_path() / j.at("classifier").get<std::string>()).build();
            out.push_back(std::move(inst));
        } catch (const json::exception& e) {
            throw compex::SpecError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

int run_oracle(const OracleArgs& a) {
    const auto config = a.engine.config();
    std::vector<compex::OracleInstance> corpus;
    if (!a.corpus.empty()) {
        corpus = read_oracle_corpus(a.corpus);
    } else {
        corpus = compex::to_oracle_instances(compex::oracle_suite(a.builtin, config.seed));
    }
    if (corpus.empty()) throw compex::EmptyCorpus("oracle corpus is empty");
    for (const auto& inst : corpus) {
        if (inst.image.pixel_count() > compex::kMaxOracleUnits) {
            throw compex::CapacityError("instance '" + inst.id + "' has " + std::to_string(inst.image.pixel_count()) +
                                        " pixels; the oracle handles at most " +
                                        std::to_string(compex::kMaxOracleUnits));
        }
    }
    const auto report = compex::oracle_agreement(corpus, config);
    json j = compex::to_json(report);
    j["config"] = compex::to_json(config);
    if (!a.out.empty()) {
        const fs::path out(a.out);
        if (out.has_parent_path()) ensure_dir(out.parent_path());
        compex::write_json(out, j);
    }
    json brief{{"instance_count", j["instance_count"]},
               {"non_degenerate", j["non_degenerate"]},
               {"agreement_fraction", j["agreement_fraction"]},
               {"mean_size_ratio", j["mean_size_ratio"]}};
    for (const auto& r : report.rows) {
        if (r.degenerate) std::cerr << "compex oracle: instance " << r.id << " is degenerate (empty set suffices)\n";
    }
    std::cout << brief.dump() << '\n';
    return kOk;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
    std::string spec;
    std::size_t count = 20;
    std::uint64_t seed = 0;
    std::string out;
};

// Spec file: occlusion fields (see OcclusionSpec) plus optional "width",
// "height", "channels", "object_min", "object_max" for the synthetic scenes.
int run_bench(const BenchArgs& a) {
    std::ifstream in(a.spec);
    if (!in) throw compex::IoError("cannot open occlusion spec " + a.spec);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw compex::SpecError(a.spec + ": " + e.what());
    }
    compex::PhotobombSuiteOptions opt;
    try {
        opt.occlusion = compex::parse_occlusion_spec(j);
        if (!j.contains("count")) opt.occlusion.count = 2;
        opt.width = j.value("width", opt.width);
        opt.height = j.value("height", opt.height);
        opt.channels = j.value("channels", opt.channels);
        opt.object_min = j.value("object_min", opt.object_min);
        opt.object_max = j.value("object_max", opt.object_max);
    } catch (const json::exception& e) {
        throw compex::SpecError(a.spec + ": " + e.what());
    }
    const auto suite = compex::photobomb_suite(a.count, a.seed, opt);

    const fs::path out(a.out);
    ensure_dir(out);
    std::vector<compex::ManifestEntry> entries;
    for (const auto& c : suite) {
        const auto& inst = c.instance;
        compex::ManifestEntry e;
        e.id = inst.id;
        e.image = inst.id + ".png";
        e.occluded = inst.id + ".occluded.png";
        e.occlusion_mask = inst.id + ".occlusion.png";
        e.object_mask = inst.id + ".object.png";
        e.classifier = inst.id + ".classifier.json";
        e.label = inst.label;
        compex::write_image(out / e.image, inst.original);
        compex::write_image(out / e.occluded, inst.occluded);
        compex::write_mask(out / e.occlusion_mask, inst.occlusion, inst.original.width(), inst.original.height());
        compex::write_mask(out / *e.object_mask, *inst.object, inst.original.width(), inst.original.height());
        compex::write_json(out / *e.classifier, compex::to_json(c.classifier));
        entries.push_back(std::move(e));
    }
    compex::write_manifest(out / "manifest.jsonl", entries);
    std::cout << json{{"instances", entries.size()}, {"manifest", (out / "manifest.jsonl").string()}}.dump() << '\n';
    return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string manifest;
    std::string rankings;
    std::string explanations;
    std::string out;
    std::string mask_color = "0,0,0";
    std::uint32_t greedy_step = 1;
    ClassifierFlags classifier;
};

int run_eval(const EvalArgs& a) {
    if (a.rankings.empty() && a.explanations.empty()) {
        throw compex::ConfigError("eval needs --rankings and/or --explanations");
    }
    const fs::path manifest(a.manifest);
    const auto entries = compex::read_manifest(manifest);
    if (entries.empty()) throw compex::EmptyCorpus("manifest " + a.manifest + " lists no instances");
    const fs::path base = manifest.parent_path();

    compex::EngineConfig config;
    config.mask_color = EngineFlags::parse_color(a.mask_color);
    config.greedy_step = a.greedy_step;
    std::shared_ptr<compex::Classifier> shared = a.classifier.given() ? a.classifier.model() : nullptr;

    std::vector<compex::InstanceScore> scores;
    for (const auto& e : entries) {
        compex::BenchInstance inst;
        inst.id = e.id;
        inst.occluded = compex::read_image(base / e.occluded);
        inst.original = inst.occluded;
        inst.label = e.label;
        inst.occlusion = compex::read_mask(base / e.occlusion_mask);
        if (e.object_mask) inst.object = compex::read_mask(base / *e.object_mask);
        compex::ClassifierHandle handle(shared ? shared : instance_model(e, base, a.classifier), a.classifier.options());

        compex::PixelSet explanation;
        const fs::path mask_path = fs::path(a.explanations) / (e.id + ".png");
        if (!a.explanations.empty() && fs::exists(mask_path)) {
            explanation = compex::read_mask(mask_path);
        } else if (!a.rankings.empty()) {
            const auto ranking = compex::read_ranking_csv(fs::path(a.rankings) / (e.id + ".csv"),
                                                          inst.occluded.width(), inst.occluded.height());
            explanation = compex::extract_explanation(inst.occluded, ranking, handle, config).sorted_pixels();
        } else {
            throw compex::IoError("no explanation for instance '" + e.id + "' under " + a.explanations);
        }
        scores.push_back(compex::score_instance(inst, explanation, handle, config.mask_color));
    }

    const fs::path out(a.out);
    ensure_dir(out);
    auto write_curve = [&](const fs::path& path, const compex::Curve& c) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw compex::IoError("cannot write " + path.string());
        f << "x,y\n";
        for (const auto& [x, y] : c.points) f << compex::format_double(x) << ',' << compex::format_double(y) << '\n';
    };
    write_curve(out / "intersection_curve.csv", compex::retained_accuracy_curve(scores, compex::CurveAxis::Intersection));
    write_curve(out / "size_curve.csv", compex::retained_accuracy_curve(scores, compex::CurveAxis::SizeFraction));

    {
        std::ofstream f(out / "instances.csv", std::ios::binary);
        if (!f) throw compex::IoError("cannot write instances.csv");
        f << "id,explanation_size,total_pixels,intersection,intersection_fraction,retained,iou\n";
        for (const auto& s : scores) {
            f << s.id << ',' << s.explanation_size << ',' << s.total_pixels << ',' << s.intersection << ','
              << compex::format_double(s.intersection_fraction) << ',' << (s.retained ? 1 : 0) << ','
              << (s.iou ? compex::format_double(*s.iou) : std::string()) << '\n';
        }
    }
    json agg = compex::to_json(compex::aggregate(scores));
    agg["instances"] = scores.size();
    compex::write_json(out / "aggregate.json", agg);
    std::cout << agg.dump() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compex: compositional causal explanations for black-box image classifiers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(compex::kToolVersion));

    ExplainArgs ex;
    auto* explain = app.add_subcommand("explain", "Rank the pixels of one image and extract an explanation");
    explain->add_option("--image", ex.image, "Input image (.png, .ppm, .pgm)")->required();
    explain->add_option("--out", ex.out, "Output directory")->required();
    ex.engine.add_to(*explain);
    ex.classifier.add_to(*explain, false);

    RankArgs rk;
    auto* rank = app.add_subcommand("rank", "Rank every occluded image of a corpus manifest");
    rank->add_option("--manifest", rk.manifest, "Corpus manifest (JSON lines)")->required();
    rank->add_option("--out", rk.out, "Output directory for <id>.csv rankings and <id>.png explanations")->required();
    rank->add_option("--baseline", rk.baseline, "Use a baseline ranker instead of the engine (random)");
    rk.engine.add_to(*rank);
    rk.classifier.add_to(*rank, false);

    OracleArgs orc;
    auto* oracle = app.add_subcommand("oracle", "Compare engine explanations with exhaustive minimal explanations");
    auto* corpus_opt = oracle->add_option("--corpus", orc.corpus, "Corpus: JSON lines {id, image, classifier}");
    auto* builtin_opt = oracle->add_option("--builtin", orc.builtin, "Use N seeded built-in 4x4 instances");
    corpus_opt->excludes(builtin_opt);
    oracle->add_option("--out", orc.out, "Report path (JSON)");
    orc.engine.add_to(*oracle);

    BenchArgs bn;
    auto* bench = app.add_subcommand("bench", "Generate a seeded photobomb benchmark corpus");
    bench->add_option("--spec", bn.spec, "Occlusion spec (JSON)")->required();
    bench->add_option("--count", bn.count, "Number of instances")->capture_default_str();
    bench->add_option("--seed", bn.seed, "Random seed")->capture_default_str();
    bench->add_option("--out", bn.out, "Output directory")->required();

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Score rankings or explanations against a corpus manifest");
    eval->add_option("--manifest", ev.manifest, "Corpus manifest (JSON lines)")->required();
    eval->add_option("--rankings", ev.rankings, "Directory of <id>.csv rankings");
    eval->add_option("--explanations", ev.explanations, "Directory of <id>.png explanation masks");
    eval->add_option("--out", ev.out, "Output directory")->required();
    eval->add_option("--mask-color", ev.mask_color, "Masking color as R,G,B")->capture_default_str();
    eval->add_option("--greedy-step", ev.greedy_step, "Pixels per sufficiency test when deriving explanations")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    ev.classifier.add_to(*eval, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    if (*explain) {
        if (!ex.classifier.given()) {
            std::cerr << "compex explain: a classifier is required: --synthetic-config or --adapter-cmd\n";
            return kConfig;
        }
        return guarded("explain", [&] { return run_explain(ex); });
    }
    if (*rank) return guarded("rank", [&] { return run_rank(rk); });
    if (*oracle) {
        if (orc.corpus.empty() && orc.builtin == 0) {
            std::cerr << "compex oracle: empty corpus; pass --corpus or --builtin N\n";
            return kConfig;
        }
        return guarded("oracle", [&] { return run_oracle(orc); });
    }
    if (*bench) return guarded("bench", [&] { return run_bench(bn); });
    if (*eval) return guarded("eval", [&] { return run_eval(ev); });
    return kConfig;
}
