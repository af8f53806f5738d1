#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rsrl/tensor.hpp"

namespace rsrl::num {

// Handle to a tensor recorded on a Tape.
struct Var {
    std::uint32_t id = 0;
};

// Reverse-mode tape. Operations append nodes in execution order, so the
// record is topologically sorted by construction; backward() walks it once
// in reverse. A tape is single-owner and built fresh per forward pass.
class Tape {
public:
    Var leaf(Tensor value);
    Var leaf(const Tensor& value, bool copy) = delete;  // pass by value

    const Tensor& value(Var v) const { return values_[v.id]; }
    const Tensor& grad(Var v) const { return grads_[v.id]; }

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every node.
    // `loss` must hold exactly one element.
    void backward(Var loss);

    // -- primitive operations ------------------------------------------
    Var dense(Var x, Var w, Var b);                    // [B,I]x[I,O]+[O] -> [B,O]
    Var conv1d(Var x, Var k, Var b, int stride);       // [B,Ci,L],[Co,Ci,K],[Co]
    Var conv1d_transpose(Var x, Var k, Var b, int stride, int output_padding);
                                                       // [B,Ci,L],[Ci,Co,K],[Co]
    Var relu(Var x);
    Var sigmoid(Var x);
    Var exp(Var x);
    Var square(Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, double c);
    Var add_scalar(Var x, double c);
    Var clamp(Var x, double lo, double hi);
    Var minimum(Var a, Var b);
    Var reshape(Var x, std::vector<int> shape);
    Var log_softmax_rows(Var x);                       // [B,C] -> [B,C]
    Var gather_rows(Var x, std::vector<int> index);    // [B,C],idx[B] -> [B]
    Var sum(Var x);                                    // -> scalar
    Var mean(Var x);                                   // -> scalar

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::function<void(Tape&)> back;  // empty for leaves
    };

    Var push(Tensor value, std::function<void(Tape&)> back);
    Tensor& grad_mut(Var v) { return grads_[v.id]; }
    void check_same_shape(const char* op, Var a, Var b) const;

    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

}  // namespace rsrl::num
