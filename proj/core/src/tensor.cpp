#include "sra/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace sra {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_string(shape));
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
        throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

bool Tensor::bit_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
}

bool all_finite(const Tensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

MatrixMap as_matrix(Tensor& t, std::int64_t cols) {
    if (cols <= 0 || t.numel() % cols != 0)
        throw std::invalid_argument("as_matrix: " + shape_string(t.shape()) + " not divisible into " +
                                    std::to_string(cols) + " columns");
    return MatrixMap(t.data(), t.numel() / cols, cols);
}

ConstMatrixMap as_matrix(const Tensor& t, std::int64_t cols) {
    if (cols <= 0 || t.numel() % cols != 0)
        throw std::invalid_argument("as_matrix: " + shape_string(t.shape()) + " not divisible into " +
                                    std::to_string(cols) + " columns");
    return ConstMatrixMap(t.data(), t.numel() / cols, cols);
}

}  // namespace sra
