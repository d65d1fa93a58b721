#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "edbench/core.hpp"

// Repository data files (variable registry, ICD tables); set by the build.
#ifndef EDBENCH_REPO_DATA
#error "EDBENCH_REPO_DATA must be defined by the build"
#endif

namespace testutil {

inline std::string repo_data(const std::string& name) {
    return std::string(EDBENCH_REPO_DATA) + "/" + name;
}

/// Self-deleting scratch directory under the system temp root.
class TempDir {
  public:
    explicit TempDir(const std::string& tag = "edbench_test") {
        auto base = std::filesystem::temp_directory_path();
        std::string tmpl = (base / (tag + ".XXXXXX")).string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (::mkdtemp(buf.data()) == nullptr) {
            throw std::runtime_error("mkdtemp failed for " + tmpl);
        }
        path_ = buf.data();
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const { return path_ + "/" + name; }

  private:
    std::string path_;
};

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace testutil
