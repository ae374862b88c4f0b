// Decoupled-weight-decay adaptive-moment optimizer and the warmup+cosine
// learning-rate schedule shared by all training stages.
#pragma once

#include <cstddef>
#include <vector>

#include "cinetab/tensor.hpp"

namespace cinetab {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// Owns first/second moment buffers for a fixed parameter list. step() reads
// each parameter's accumulated gradient (missing grad counts as zero) and
// updates the values in place; the step counter advances by one per call.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<Tensor<T>> params, AdamWConfig cfg = {});

    void step(T lr);
    void zero_grad();
    std::size_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    std::size_t t_ = 0;
    AdamWConfig cfg_;
};

struct LrSchedule {
    double base = 3e-3;
    double warmup_epochs = 10;
    double total_epochs = 100;
    double floor = 0.0;
};

// Linear ramp 0 -> base over the warmup, then cosine decay base -> floor.
// Position is continuous in epochs.
double lr_at(const LrSchedule& s, double t);
double lr_at(const LrSchedule& s, std::size_t epoch, std::size_t step_in_epoch,
             std::size_t steps_per_epoch);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace cinetab
