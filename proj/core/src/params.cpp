#include "sra/params.hpp"

#include <cmath>
#include <stdexcept>

namespace sra {

std::size_t ParamStore::add(std::string name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
    const std::size_t idx = params_.size();
    Tensor grad(init.shape());
    index_.emplace(name, idx);
    params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
    return idx;
}

Parameter& ParamStore::at(std::string_view name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + std::string(name));
    return params_[it->second];
}

const Parameter& ParamStore::at(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + std::string(name));
    return params_[it->second];
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

void ParamStore::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
}

std::int64_t ParamStore::numel() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

bool ParamStore::structurally_equal(const ParamStore& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
        if (params_[i].name != other.params_[i].name || !params_[i].value.same_shape(other.params_[i].value))
            return false;
    return true;
}

void ParamStore::require_structurally_equal(const ParamStore& other, std::string_view what) const {
    if (size() != other.size())
        throw std::invalid_argument(std::string(what) + ": parameter count " + std::to_string(size()) + " vs " +
                                    std::to_string(other.size()));
    for (std::size_t i = 0; i < size(); ++i) {
        const auto& a = params_[i];
        const auto& b = other.params_[i];
        if (a.name != b.name)
            throw std::invalid_argument(std::string(what) + ": parameter " + std::to_string(i) + " is '" + a.name +
                                        "' vs '" + b.name + "'");
        if (!a.value.same_shape(b.value))
            throw std::invalid_argument(std::string(what) + ": parameter '" + a.name + "' has shape " +
                                        shape_string(a.value.shape()) + " vs " + shape_string(b.value.shape()));
    }
}

bool ParamStore::values_bit_equal(const ParamStore& other) const {
    if (!structurally_equal(other)) return false;
    for (std::size_t i = 0; i < size(); ++i)
        if (!params_[i].value.bit_equal(other.params_[i].value)) return false;
    return true;
}

double ParamStore::grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_)
        for (double g : p.grad.values()) s += g * g;
    return std::sqrt(s);
}

}  // namespace sra
