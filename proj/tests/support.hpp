#pragma once

#include "cavkit/bundle.hpp"
#include "cavkit/error.hpp"
#include "cavkit/tensor.hpp"

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <unistd.h>

namespace testing {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("cavkit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

// Error code thrown by fn, or nullopt when it returns normally.
template <typename Fn>
std::optional<cavkit::ErrorCode> error_of(Fn&& fn) {
    try {
        fn();
    } catch (const cavkit::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

inline bool same_bits(std::span<const float> a, std::span<const float> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

inline cavkit::Tensor random_tensor(std::vector<std::size_t> shape, std::uint32_t seed, float scale = 1.0f) {
    std::mt19937 gen(seed);
    std::normal_distribution<float> dist(0.0f, scale);
    cavkit::Tensor t(std::move(shape));
    for (auto& v : t.data()) v = dist(gen);
    return t;
}

// A small on-disk bundle: `n` samples, one layer of width `d`, classes A/B/C,
// concepts "c1" and "c2". Returns the manifest so tests can corrupt it.
inline cavkit::BundleManifest write_small_bundle(const fs::path& dir, std::size_t n = 6, std::size_t d = 4) {
    cavkit::BundleManifest m;
    m.layers = {"L"};
    m.classes = {"A", "B", "C"};
    for (std::size_t i = 0; i < n; ++i) m.sample_ids.push_back("x" + std::to_string(i));
    cavkit::write_tensor(random_tensor({n, d}, 1), dir / "acts.npy");
    m.activation_files["L"] = "acts.npy";
    for (std::size_t k = 0; k < 3; ++k) {
        const std::string file = "grad_" + m.classes[k] + ".npy";
        cavkit::write_tensor(random_tensor({n, d}, 10 + static_cast<std::uint32_t>(k)), dir / file);
        m.gradient_files["L"][m.classes[k]] = file;
    }
    using cavkit::ConceptLabel;
    for (std::size_t i = 0; i < n; ++i) {
        m.concept_labels["c1"].push_back(i % 2 ? ConceptLabel::present : ConceptLabel::absent);
        m.concept_labels["c2"].push_back(i % 3 == 0 ? ConceptLabel::unknown : ConceptLabel::present);
        m.class_labels.push_back(m.classes[i % 3]);
    }
    cavkit::write_manifest(m, dir / "bundle.json");
    return m;
}

} // namespace testing
