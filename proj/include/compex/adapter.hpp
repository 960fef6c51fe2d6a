#pragma once
// Classifier backed by a user-supplied child process speaking the wire format
// in compex/wire.hpp. The session is serialized: one batch in flight at a time.
// Any protocol violation or child exit poisons the session.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "compex/classifier.hpp"
#include "compex/errors.hpp"
#include "compex/wire.hpp"

namespace compex {

struct AdapterOptions {
    // Requests written before responses are drained. Bounded so neither pipe can fill.
    std::size_t window = 64;
    // Per-line read timeout; 0 waits forever.
    int timeout_ms = 120000;
};

class SubprocessClassifier final : public Classifier {
public:
    explicit SubprocessClassifier(std::string command, AdapterOptions options = {})
        : command_(std::move(command)), options_(options) {
        if (command_.empty()) throw ConfigError("empty adapter command");
        static std::once_flag sigpipe_once;
        std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

        int to_child[2];
        int from_child[2];
        if (::pipe2(to_child, O_CLOEXEC) != 0) throw GatewayError(std::string("pipe: ") + std::strerror(errno));
        if (::pipe2(from_child, O_CLOEXEC) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            throw GatewayError(std::string("pipe: ") + std::strerror(errno));
        }
        pid_ = ::fork();
        if (pid_ < 0) throw GatewayError(std::string("fork: ") + std::strerror(errno));
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
    }

    SubprocessClassifier(const SubprocessClassifier&) = delete;
    SubprocessClassifier& operator=(const SubprocessClassifier&) = delete;

    ~SubprocessClassifier() override { shutdown(); }

    Verdict classify(const Image& image) override {
        const Image* one[] = {&image};
        return classify_batch(one).front();
    }

    std::vector<Verdict> classify_batch(std::span<const Image* const> images) override {
        std::lock_guard lock(mu_);
        if (!broken_.empty()) throw GatewayError("adapter session is closed: " + broken_);
        std::vector<Verdict> out(images.size());
        for (std::size_t start = 0; start < images.size(); start += options_.window) {
            const std::size_t end = std::min(images.size(), start + options_.window);
            std::unordered_map<std::uint64_t, std::size_t> pending;
            std::size_t i = start;
            try {
                for (; i < end; ++i) {
                    const auto id = next_id_++;
                    pending.emplace(id, i);
                    write_line(wire::encode_request(id, *images[i]));
                }
                while (!pending.empty()) {
                    auto resp = wire::decode_response(read_line());
                    auto it = pending.find(resp.id);
                    if (it == pending.end()) {
                        throw GatewayError("response carries unknown id " + std::to_string(resp.id));
                    }
                    out[it->second] = std::move(resp.verdict);
                    pending.erase(it);
                }
            } catch (const GatewayError& e) {
                broken_ = e.what();
                std::size_t failing = i < end ? i : end;
                for (const auto& [id, idx] : pending) failing = std::min(failing, idx);
                throw BatchItemError(std::min(failing, images.size() - 1), e.what());
            }
        }
        return out;
    }

    pid_t pid() const noexcept { return pid_; }

private:
    void write_line(const std::string& line) {
        std::string buf = line;
        buf.push_back('\n');
        const char* p = buf.data();
        std::size_t left = buf.size();
        while (left > 0) {
            const auto n = ::write(write_fd_, p, left);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw GatewayError("adapter '" + command_ + "' stopped reading: " + std::strerror(errno) +
                                   exit_note());
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
    }

    std::string read_line() {
        for (;;) {
            if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            pollfd pfd{read_fd_, POLLIN, 0};
            const int ready = ::poll(&pfd, 1, options_.timeout_ms > 0 ? options_.timeout_ms : -1);
            if (ready < 0) {
                if (errno == EINTR) continue;
                throw GatewayError(std::string("poll: ") + std::strerror(errno));
            }
            if (ready == 0) throw GatewayError("adapter '" + command_ + "' timed out");
            char chunk[65536];
            const auto n = ::read(read_fd_, chunk, sizeof chunk);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw GatewayError(std::string("read: ") + std::strerror(errno));
            }
            if (n == 0) throw GatewayError("adapter '" + command_ + "' closed its output" + exit_note());
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    std::string exit_note() {
        if (pid_ <= 0) return {};
        int status = 0;
        for (int attempt = 0; attempt < 50; ++attempt) {
            const pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_) {
                pid_ = -1;
                if (WIFEXITED(status)) return " (exit status " + std::to_string(WEXITSTATUS(status)) + ")";
                if (WIFSIGNALED(status)) return " (killed by signal " + std::to_string(WTERMSIG(status)) + ")";
                return {};
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
        return {};
    }

    void shutdown() noexcept {
        if (write_fd_ >= 0) ::close(write_fd_);
        write_fd_ = -1;
        if (pid_ > 0) {
            int status = 0;
            bool reaped = false;
            for (int attempt = 0; attempt < 200 && !reaped; ++attempt) {
                reaped = ::waitpid(pid_, &status, WNOHANG) == pid_;
                if (!reaped) std::this_thread::sleep_for(std::chrono::milliseconds(5));
            }
            if (!reaped) {
                ::kill(pid_, SIGKILL);
                ::waitpid(pid_, &status, 0);
            }
            pid_ = -1;
        }
        if (read_fd_ >= 0) ::close(read_fd_);
        read_fd_ = -1;
    }

    std::string command_;
    AdapterOptions options_;
    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    std::string buffer_;
    std::uint64_t next_id_ = 0;
    std::string broken_;
    std::mutex mu_;
};

}  // namespace compex
