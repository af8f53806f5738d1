#include "rsrl/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace rsrl::num {

namespace {

double eval(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.leaf(t));
    Var loss = fn(tape, vars);
    if (tape.value(loss).size() != 1) throw std::invalid_argument("grad_check: fn must return a scalar");
    return tape.value(loss)[0];
}

}  // namespace

double grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be positive");

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (const auto& t : inputs) vars.push_back(tape.leaf(t));
        Var loss = fn(tape, vars);
        tape.backward(loss);
        for (Var v : vars) analytic.push_back(tape.grad(v));
    }

    double max_rel = 0.0;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        for (std::size_t i = 0; i < inputs[ti].size(); ++i) {
            const double orig = inputs[ti][i];
            inputs[ti][i] = orig + epsilon;
            const double up = eval(fn, inputs);
            inputs[ti][i] = orig - epsilon;
            const double down = eval(fn, inputs);
            inputs[ti][i] = orig;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = analytic[ti][i];
            const double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace rsrl::num
