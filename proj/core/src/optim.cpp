#include "sra/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sra {

AdamW::AdamW(AdamWConfig config, const std::vector<const ParamStore*>& stores) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("AdamW: learning rate must be positive");
    for (const auto* s : stores) {
        std::vector<Tensor> m, v;
        for (const auto& p : *s) {
            m.emplace_back(p.value.shape());
            v.emplace_back(p.value.shape());
        }
        m_.push_back(std::move(m));
        v_.push_back(std::move(v));
    }
}

void AdamW::step(const std::vector<ParamStore*>& stores) {
    if (stores.size() != m_.size()) throw std::invalid_argument("AdamW: parameter store count changed");
    ++steps_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    const double lr = config_.learning_rate;
    const double decay = 1.0 - lr * config_.weight_decay;
    for (std::size_t s = 0; s < stores.size(); ++s) {
        auto& store = *stores[s];
        if (store.size() != m_[s].size()) throw std::invalid_argument("AdamW: parameter layout changed");
        for (std::size_t i = 0; i < store.size(); ++i) {
            auto& p = store[i];
            auto& m = m_[s][i];
            auto& v = v_[s][i];
            if (!m.same_shape(p.value)) throw std::invalid_argument("AdamW: shape changed for " + p.name);
            for (std::int64_t j = 0; j < p.value.numel(); ++j) {
                const double g = p.grad[j];
                m[j] = b1 * m[j] + (1.0 - b1) * g;
                v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                if (config_.weight_decay != 0.0) p.value[j] *= decay;
                p.value[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
            }
        }
    }
}

double global_grad_norm(const std::vector<ParamStore*>& stores) {
    double s = 0.0;
    for (const auto* store : stores)
        for (const auto& p : *store)
            for (double g : p.grad.values()) s += g * g;
    return std::sqrt(s);
}

double clip_grad_norm(const std::vector<ParamStore*>& stores, double max_norm) {
    const double norm = global_grad_norm(stores);
    if (std::isinf(max_norm) || norm <= max_norm) return norm;
    const double k = max_norm / (norm + 1e-6);
    for (auto* store : stores)
        for (auto& p : *store)
            for (auto& g : p.grad.values()) g *= k;
    return norm;
}

}  // namespace sra
