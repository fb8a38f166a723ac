#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "sra/backbone.hpp"
#include "sra/rng.hpp"
#include "sra/tensor.hpp"

namespace sra::test {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (auto& v : t.values()) v = scale * rng.normal();
    return t;
}

/// 8x8 single-channel geometry, 16 tokens; fast enough for gradient checks.
inline ModelConfig toy_model(int depth = 2, int dim = 8, int classes = 3) {
    ModelConfig c;
    c.input_height = 8;
    c.input_width = 8;
    c.depth = depth;
    c.hidden_dim = dim;
    c.num_heads = 2;
    c.num_classes = classes;
    c.frequency_dim = 16;
    return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "sra_test_";
        if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
        name += "_" + std::to_string(counter++);
        for (auto& c : name)
            if (c == '/') c = '_';
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

}  // namespace sra::test
