#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace epg::test {

// Unique scratch file, removed on destruction.
class TempFile {
public:
    explicit TempFile(const std::string& suffix = ".bin") {
        static std::atomic<uint64_t> counter{0};
        path_ = (std::filesystem::temp_directory_path() /
                 ("epg_test_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++) + suffix))
                    .string();
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline const std::vector<uint64_t> kPropertySeeds = {1, 2, 3};

}  // namespace epg::test
