#pragma once

#include <cstdint>
#include <vector>

#include "rsrl/tensor.hpp"

namespace rsrl::num {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter first/second moment state, aligned with a ParamStore.
struct AdamState {
    AdamConfig cfg;
    long step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState init(const ParamStore& params, const AdamConfig& cfg = {});
};

// Standard Adam update with bias correction; increments state.step.
// Throws when any gradient is non-finite, naming the offending parameter.
void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace rsrl::num
