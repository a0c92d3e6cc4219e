#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cavkit {

/// Dense row-major float32 array with an explicit shape.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<float> data);
    explicit Tensor(std::vector<std::size_t> shape);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    /// Leading-axis length.
    std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_.front(); }
    /// Number of elements per leading-axis slice (the flattened feature width).
    std::size_t row_size() const noexcept;

    std::span<const float> row(std::size_t i) const;

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape) noexcept;
std::string shape_to_string(std::span<const std::size_t> shape);

// NPY v1.0 interchange. Writes '<f4' C-order; reads '<f4' and '<f8' (narrowed).
std::vector<char> encode_npy(const Tensor& t);
Tensor decode_npy(std::span<const char> bytes, const std::string& origin = "<memory>");

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

} // namespace cavkit
