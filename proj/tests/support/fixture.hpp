#pragma once

#include <topicdyn/pipeline.hpp>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace topicdyn::testing {

namespace fs = std::filesystem;

/// Directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "topicdyn") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const noexcept { return path_; }

private:
    fs::path path_;
};

inline fs::path fixture_source() { return fs::path(TOPICDYN_DATA_DIR) / "fixture"; }

/// Copies the fixture inputs into `dir` and returns its config path.
inline fs::path copy_fixture(const fs::path& dir) {
    fs::create_directories(dir);
    for (const char* f : {"corpus.jsonl", "config.json", "themes.ini"})
        fs::copy_file(fixture_source() / f, dir / f, fs::copy_options::overwrite_existing);
    return dir / "config.json";
}

inline std::map<std::string, std::string> all_outputs(const Manifest& m) {
    std::map<std::string, std::string> out;
    for (const auto& [_, s] : m.stages)
        out.insert(s.outputs.begin(), s.outputs.end());
    return out;
}

} // namespace topicdyn::testing
