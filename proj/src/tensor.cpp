#include "bivad/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace bivad {

static_assert(std::endian::native == std::endian::little,
              "BVT1 I/O assumes a little-endian host");

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    for (auto extent : shape_)
        require(extent > 0, ErrorCode::invalid_argument,
                "tensor extents must be positive, got " + shape_str(shape_));
    data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto extent : shape_)
        require(extent > 0, ErrorCode::invalid_argument,
                "tensor extents must be positive, got " + shape_str(shape_));
    require(shape_numel(shape_) == data_.size(), ErrorCode::invalid_argument,
            "data length " + std::to_string(data_.size()) + " does not match shape " +
                shape_str(shape_));
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
    require(index.size() == shape_.size(), ErrorCode::invalid_argument,
            "index rank mismatch for shape " + shape_str(shape_));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
    return data_[offset(index)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    return data_[offset(index)];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    require(shape_numel(shape) == data_.size(), ErrorCode::invalid_argument,
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

namespace {

constexpr std::array<char, 4> kMagic = {'B', 'V', 'T', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail(ErrorCode::format_error, "truncated BVT1 header");
    return v;
}

} // namespace

void write_bvt(std::ostream& out, const Tensor<float>& tensor) {
    out.write(kMagic.data(), kMagic.size());
    write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto extent : tensor.shape()) write_u32(out, static_cast<std::uint32_t>(extent));
    out.write(reinterpret_cast<const char*>(tensor.ptr()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
    if (!out) fail(ErrorCode::io_error, "failed writing BVT1 tensor");
}

Tensor<float> read_bvt(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) fail(ErrorCode::format_error, "missing BVT1 magic");
    const auto rank = read_u32(in);
    if (rank == 0 || rank > 8) fail(ErrorCode::format_error, "implausible BVT1 rank");
    Shape shape(rank);
    for (auto& extent : shape) {
        extent = read_u32(in);
        if (extent == 0) fail(ErrorCode::format_error, "zero extent in BVT1 header");
    }
    std::vector<float> data(shape_numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) fail(ErrorCode::format_error, "truncated BVT1 payload");
    return Tensor<float>(std::move(shape), std::move(data));
}

void save_bvt(const std::filesystem::path& path, const Tensor<float>& tensor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    write_bvt(out, tensor);
}

Tensor<float> load_bvt(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
    return read_bvt(in);
}

} // namespace bivad
