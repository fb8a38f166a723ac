#pragma once

#include <cstdint>
#include <vector>

#include "sra/params.hpp"

namespace sra {

struct AdamWConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Adaptive-moment optimizer with decoupled weight decay over one or more
/// parameter stores (e.g. backbone + projection head).
class AdamW {
public:
    AdamW(AdamWConfig config, const std::vector<const ParamStore*>& stores);

    const AdamWConfig& config() const { return config_; }
    std::int64_t steps() const { return steps_; }
    void set_steps(std::int64_t s) { steps_ = s; }

    /// Applies one update to `stores`, which must match the constructor's
    /// layout.
    void step(const std::vector<ParamStore*>& stores);

    std::vector<Tensor>& first_moments(std::size_t store) { return m_.at(store); }
    std::vector<Tensor>& second_moments(std::size_t store) { return v_.at(store); }
    const std::vector<Tensor>& first_moments(std::size_t store) const { return m_.at(store); }
    const std::vector<Tensor>& second_moments(std::size_t store) const { return v_.at(store); }
    std::size_t num_stores() const { return m_.size(); }

private:
    AdamWConfig config_;
    std::int64_t steps_ = 0;
    std::vector<std::vector<Tensor>> m_, v_;
};

/// Global L2 norm of all gradients.
double global_grad_norm(const std::vector<ParamStore*>& stores);

/// Rescales gradients so their global norm is at most max_norm. Returns the
/// norm before clipping. max_norm = +inf disables clipping.
double clip_grad_norm(const std::vector<ParamStore*>& stores, double max_norm);

}  // namespace sra
