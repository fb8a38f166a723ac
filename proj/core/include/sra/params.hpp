#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <string>
#include <string_view>

#include "sra/tensor.hpp"

namespace sra {

class Rng;

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // same shape as value; accumulated by Tape::backward
};

/// Ordered, named parameter collection. Order of insertion is the
/// canonical order used by checkpoints, optimizers and EMA.
class ParamStore {
public:
    std::size_t add(std::string name, Tensor init);

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    Parameter& at(std::string_view name);
    const Parameter& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();
    std::int64_t numel() const;
    /// Same names, same order, same shapes.
    bool structurally_equal(const ParamStore& other) const;
    /// Throws std::invalid_argument describing the first difference.
    void require_structurally_equal(const ParamStore& other, std::string_view what) const;
    bool values_bit_equal(const ParamStore& other) const;
    double grad_norm() const;

private:
    std::deque<Parameter> params_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace sra
