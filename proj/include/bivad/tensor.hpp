#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bivad/error.hpp"

namespace bivad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. Value type; copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }
    static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return shape_.empty(); }

    T* ptr() noexcept { return data_.data(); }
    const T* ptr() const noexcept { return data_.data(); }
    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Row-major multi-index access, bounds-checked on rank only.
    T& at(std::initializer_list<std::size_t> index);
    const T& at(std::initializer_list<std::size_t> index) const;

    Tensor reshaped(Shape shape) const;
    void fill(T value);
    bool all_finite() const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<T> data_;
};

// Binary tensor format: "BVT1", u32 rank, rank x u32 extents, float32 payload,
// all little-endian.
void write_bvt(std::ostream& out, const Tensor<float>& tensor);
Tensor<float> read_bvt(std::istream& in);
void save_bvt(const std::filesystem::path& path, const Tensor<float>& tensor);
Tensor<float> load_bvt(const std::filesystem::path& path);

extern template class Tensor<float>;
extern template class Tensor<double>;

} // namespace bivad
