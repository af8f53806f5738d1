#include "rsrl/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rsrl::num {

AdamState AdamState::init(const ParamStore& params, const AdamConfig& cfg) {
    AdamState s;
    s.cfg = cfg;
    if (cfg.lr <= 0.0) throw std::invalid_argument("adam: lr must be positive");
    s.m.reserve(static_cast<std::size_t>(params.size()));
    s.v.reserve(static_cast<std::size_t>(params.size()));
    for (int i = 0; i < params.size(); ++i) {
        s.m.emplace_back(params.value(i).shape());
        s.v.emplace_back(params.value(i).shape());
    }
    return s;
}

void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (static_cast<int>(grads.size()) != params.size())
        throw std::invalid_argument("adam: gradient count does not match parameter count");
    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (int pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params.value(pi);
        const Tensor& g = grads[static_cast<std::size_t>(pi)];
        if (!p.same_shape(g))
            throw std::invalid_argument("adam: gradient shape " + g.shape_string() + " does not match " +
                                        params.name(pi) + " " + p.shape_string());
        if (!g.all_finite())
            throw std::runtime_error("adam: non-finite gradient for parameter " + params.name(pi));
        Tensor& m = state.m[static_cast<std::size_t>(pi)];
        Tensor& v = state.v[static_cast<std::size_t>(pi)];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
        }
    }
}

}  // namespace rsrl::num
