// Reference model adapter: serves a synthetic classifier over the wire
// protocol on stdin/stdout. Also used by the tests to exercise out-of-order
// responses and protocol failures.

#include <algorithm>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "compex/synthetic.hpp"
#include "compex/wire.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Serve a synthetic classifier over the compex adapter protocol"};
    std::string config_path;
    std::size_t window = 1;
    long malformed_after = -1;
    long exit_after = -1;
    app.add_option("--config", config_path, "Synthetic classifier config (JSON)")->required();
    app.add_option("--window", window, "Buffer this many requests and answer them in reverse order")
        ->check(CLI::PositiveNumber);
    app.add_option("--malformed-after", malformed_after, "Emit a malformed line instead of response number N");
    app.add_option("--exit-after", exit_after, "Exit without answering after N responses");
    CLI11_PARSE(app, argc, argv);

    std::shared_ptr<compex::Classifier> model;
    try {
        model = compex::load_synthetic_spec(config_path).build();
    } catch (const std::exception& e) {
        std::cerr << "synthetic_adapter: " << e.what() << '\n';
        return 2;
    }

    std::ios::sync_with_stdio(false);
    long answered = 0;
    std::vector<std::pair<std::uint64_t, compex::Verdict>> held;
    auto flush = [&]() -> bool {
        std::reverse(held.begin(), held.end());
        for (const auto& [id, verdict] : held) {
            if (exit_after >= 0 && answered >= exit_after) return false;
            if (malformed_after >= 0 && answered == malformed_after) {
                std::cout << "{not json\n";
            } else {
                std::cout << compex::wire::encode_response(id, verdict) << '\n';
            }
            ++answered;
        }
        held.clear();
        std::cout.flush();
        return true;
    };

    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        try {
            auto req = compex::wire::decode_request(line);
            held.emplace_back(req.id, model->classify(req.image));
        } catch (const std::exception& e) {
            std::cerr << "synthetic_adapter: " << e.what() << '\n';
            return 3;
        }
        if (held.size() >= window && !flush()) return 0;
        // A partial window is answered as soon as the client stops sending.
        if (std::cin.rdbuf()->in_avail() == 0 && !held.empty() && !flush()) return 0;
    }
    flush();
    return 0;
}
