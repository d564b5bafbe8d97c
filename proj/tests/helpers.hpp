#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "rephrase/model_backend.hpp"

namespace test_helpers {

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path() / "rephrase_test_XXXXXX";
        std::string tmpl = base.string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Wraps a backend and records every request it serves, for prompt assertions.
class RecordingBackend : public rephrase::ChatBackend {
public:
    explicit RecordingBackend(rephrase::ChatBackend& inner) : inner_(inner) {}

    rephrase::CompletionResponse complete(const rephrase::CompletionRequest& request) override {
        {
            std::lock_guard<std::mutex> lock(mu_);
            requests_.push_back(request);
        }
        return inner_.complete(request);
    }
    std::string name() const override { return "recording"; }

    const std::vector<rephrase::CompletionRequest>& requests() const { return requests_; }

private:
    rephrase::ChatBackend& inner_;
    std::vector<rephrase::CompletionRequest> requests_;
    std::mutex mu_;
};

inline std::string verdict_block(const std::string& category, const std::string& justification) {
    return "===VERDICT===\ncategory: " + category + "\njustification: " + justification +
           "\n===END===\n";
}

} // namespace test_helpers
