#include "cinetab/optim.hpp"

#include <cmath>

namespace cinetab {

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.beta1 >= 0 && cfg_.beta1 < 1) || !(cfg_.beta2 >= 0 && cfg_.beta2 < 1))
        throw ConfigError("AdamW: betas must lie in [0,1)");
    if (cfg_.eps <= 0) throw ConfigError("AdamW: eps must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), T(0));
        v_.emplace_back(p.size(), T(0));
    }
}

template <typename T>
void AdamW<T>::step(T lr) {
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T eps = static_cast<T>(cfg_.eps);
    const T wd = static_cast<T>(cfg_.weight_decay);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& w = params_[pi].values_mut();
        const auto g = params_[pi].grad();
        const bool has_g = !g.empty();
        if (has_g && g.size() != w.size())
            throw DimensionError("AdamW: gradient/parameter shape mismatch");
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const T gi = has_g ? g[i] : T(0);
            m[i] = b1 * m[i] + (T(1) - b1) * gi;
            v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * w[i]);
        }
    }
}

template <typename T>
void AdamW<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double lr_at(const LrSchedule& s, double t) {
    if (s.total_epochs <= 0) throw ConfigError("LrSchedule: total_epochs must be positive");
    if (t < 0) throw ConfigError("LrSchedule: negative position");
    if (t >= s.total_epochs)
        throw ConfigError("LrSchedule: position beyond total_epochs");
    if (s.warmup_epochs > 0 && t < s.warmup_epochs) return s.base * (t / s.warmup_epochs);
    const double span = s.total_epochs - s.warmup_epochs;
    if (span <= 0) return s.base;
    const double r = (t - s.warmup_epochs) / span;
    const double lr = s.floor + (s.base - s.floor) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * r));
    return lr;
}

double lr_at(const LrSchedule& s, std::size_t epoch, std::size_t step_in_epoch,
             std::size_t steps_per_epoch) {
    const double frac =
        steps_per_epoch == 0 ? 0.0
                             : static_cast<double>(step_in_epoch) / static_cast<double>(steps_per_epoch);
    return lr_at(s, static_cast<double>(epoch) + frac);
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace cinetab
