#pragma once

#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace sra {

using Shape = std::vector<std::int64_t>;

/// Cache-line aligned storage. Vectorised kernels choose their peeling
/// from the buffer address, so a fixed alignment keeps results bit-stable
/// across allocations.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Value semantics; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty() && shape_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Same data viewed under another shape with equal element count.
    Tensor reshaped(Shape shape) const;
    void fill(double v);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Bitwise equality of shape and payload.
    bool bit_equal(const Tensor& other) const;

private:
    Shape shape_;
    AlignedVector data_;
};

/// Throws std::invalid_argument naming `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what);

bool all_finite(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Views the tensor as [numel/cols x cols].
MatrixMap as_matrix(Tensor& t, std::int64_t cols);
ConstMatrixMap as_matrix(const Tensor& t, std::int64_t cols);

}  // namespace sra
