#include "rsrl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rsrl::num {

namespace {

void check_rank(const char* op, const Tensor& t, int rank) {
    if (t.rank() != rank)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                    " tensor, got " + t.shape_string());
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
    values_.push_back(std::move(value));
    grads_.emplace_back();
    nodes_.push_back(Node{std::move(back)});
    return Var{static_cast<std::uint32_t>(values_.size() - 1)};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), {}); }

void Tape::check_same_shape(const char* op, Var a, Var b) const {
    if (!values_[a.id].same_shape(values_[b.id]))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + values_[a.id].shape_string() +
                                    " vs " + values_[b.id].shape_string());
}

void Tape::backward(Var loss) {
    if (ran_backward_) throw std::logic_error("tape backward may run only once");
    ran_backward_ = true;
    if (values_[loss.id].size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got " + values_[loss.id].shape_string());
    for (std::size_t i = 0; i < values_.size(); ++i) grads_[i] = Tensor(values_[i].shape());
    grads_[loss.id][0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

Var Tape::dense(Var xv, Var wv, Var bv) {
    const Tensor& x = value(xv);
    const Tensor& w = value(wv);
    const Tensor& b = value(bv);
    check_rank("dense", x, 2);
    check_rank("dense", w, 2);
    check_rank("dense", b, 1);
    const int B = x.dim(0), I = x.dim(1), O = w.dim(1);
    if (w.dim(0) != I || b.dim(0) != O)
        throw std::invalid_argument("dense: x " + x.shape_string() + " incompatible with W " +
                                    w.shape_string() + ", b " + b.shape_string());

    Tensor y({B, O});
    {
        const double* xp = x.data();
        const double* wp = w.data();
        const double* bp = b.data();
        double* yp = y.data();
        for (int bi = 0; bi < B; ++bi) {
            double* yr = yp + static_cast<std::size_t>(bi) * O;
            for (int o = 0; o < O; ++o) yr[o] = bp[o];
            const double* xr = xp + static_cast<std::size_t>(bi) * I;
            for (int i = 0; i < I; ++i) {
                const double xi = xr[i];
                const double* wr = wp + static_cast<std::size_t>(i) * O;
                for (int o = 0; o < O; ++o) yr[o] += xi * wr[o];
            }
        }
    }
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, wv, bv, out, B, I, O](Tape& t) {
        const double* dy = t.grads_[out.id].data();
        const double* xp = t.values_[xv.id].data();
        const double* wp = t.values_[wv.id].data();
        double* dx = t.grads_[xv.id].data();
        double* dw = t.grads_[wv.id].data();
        double* db = t.grads_[bv.id].data();
        for (int bi = 0; bi < B; ++bi) {
            const double* dyr = dy + static_cast<std::size_t>(bi) * O;
            const double* xr = xp + static_cast<std::size_t>(bi) * I;
            double* dxr = dx + static_cast<std::size_t>(bi) * I;
            for (int o = 0; o < O; ++o) db[o] += dyr[o];
            for (int i = 0; i < I; ++i) {
                const double* wr = wp + static_cast<std::size_t>(i) * O;
                double* dwr = dw + static_cast<std::size_t>(i) * O;
                const double xi = xr[i];
                double acc = 0.0;
                for (int o = 0; o < O; ++o) {
                    acc += dyr[o] * wr[o];
                    dwr[o] += xi * dyr[o];
                }
                dxr[i] += acc;
            }
        }
    });
}

Var Tape::conv1d(Var xv, Var kv, Var bv, int stride) {
    const Tensor& x = value(xv);
    const Tensor& k = value(kv);
    const Tensor& b = value(bv);
    check_rank("conv1d", x, 3);
    check_rank("conv1d", k, 3);
    check_rank("conv1d", b, 1);
    const int B = x.dim(0), Ci = x.dim(1), L = x.dim(2);
    const int Co = k.dim(0), K = k.dim(2);
    if (k.dim(1) != Ci || b.dim(0) != Co)
        throw std::invalid_argument("conv1d: x " + x.shape_string() + " incompatible with kernels " +
                                    k.shape_string() + ", bias " + b.shape_string());
    if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1, got " + std::to_string(stride));
    if (K > L)
        throw std::invalid_argument("conv1d: kernel size " + std::to_string(K) +
                                    " exceeds input length " + std::to_string(L));
    const int Lo = (L - K) / stride + 1;

    Tensor y({B, Co, Lo});
    {
        const double* xp = x.data();
        const double* kp = k.data();
        const double* bp = b.data();
        double* yp = y.data();
        for (int bi = 0; bi < B; ++bi) {
            for (int co = 0; co < Co; ++co) {
                double* yr = yp + (static_cast<std::size_t>(bi) * Co + co) * Lo;
                for (int l = 0; l < Lo; ++l) yr[l] = bp[co];
                for (int ci = 0; ci < Ci; ++ci) {
                    const double* xr = xp + (static_cast<std::size_t>(bi) * Ci + ci) * L;
                    const double* kr = kp + (static_cast<std::size_t>(co) * Ci + ci) * K;
                    for (int kk = 0; kk < K; ++kk) {
                        const double w = kr[kk];
                        const double* xs = xr + kk;
                        for (int l = 0; l < Lo; ++l) yr[l] += w * xs[static_cast<std::size_t>(l) * stride];
                    }
                }
            }
        }
    }
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, kv, bv, out, B, Ci, L, Co, K, Lo, stride](Tape& t) {
        const double* dy = t.grads_[out.id].data();
        const double* xp = t.values_[xv.id].data();
        const double* kp = t.values_[kv.id].data();
        double* dx = t.grads_[xv.id].data();
        double* dk = t.grads_[kv.id].data();
        double* db = t.grads_[bv.id].data();
        for (int bi = 0; bi < B; ++bi) {
            for (int co = 0; co < Co; ++co) {
                const double* dyr = dy + (static_cast<std::size_t>(bi) * Co + co) * Lo;
                double acc = 0.0;
                for (int l = 0; l < Lo; ++l) acc += dyr[l];
                db[co] += acc;
                for (int ci = 0; ci < Ci; ++ci) {
                    const double* xr = xp + (static_cast<std::size_t>(bi) * Ci + ci) * L;
                    const double* kr = kp + (static_cast<std::size_t>(co) * Ci + ci) * K;
                    double* dxr = dx + (static_cast<std::size_t>(bi) * Ci + ci) * L;
                    double* dkr = dk + (static_cast<std::size_t>(co) * Ci + ci) * K;
                    for (int kk = 0; kk < K; ++kk) {
                        const double w = kr[kk];
                        double wacc = 0.0;
                        const double* xs = xr + kk;
                        double* dxs = dxr + kk;
                        for (int l = 0; l < Lo; ++l) {
                            const double g = dyr[l];
                            wacc += g * xs[static_cast<std::size_t>(l) * stride];
                            dxs[static_cast<std::size_t>(l) * stride] += g * w;
                        }
                        dkr[kk] += wacc;
                    }
                }
            }
        }
    });
}

Var Tape::conv1d_transpose(Var xv, Var kv, Var bv, int stride, int output_padding) {
    const Tensor& x = value(xv);
    const Tensor& k = value(kv);
    const Tensor& b = value(bv);
    check_rank("conv1d_transpose", x, 3);
    check_rank("conv1d_transpose", k, 3);
    check_rank("conv1d_transpose", b, 1);
    const int B = x.dim(0), Ci = x.dim(1), L = x.dim(2);
    const int Co = k.dim(1), K = k.dim(2);
    if (k.dim(0) != Ci || b.dim(0) != Co)
        throw std::invalid_argument("conv1d_transpose: x " + x.shape_string() + " incompatible with kernels " +
                                    k.shape_string() + ", bias " + b.shape_string());
    if (stride < 1 || output_padding < 0 || output_padding >= stride + K)
        throw std::invalid_argument("conv1d_transpose: bad stride/output_padding");
    const int Lo = (L - 1) * stride + K + output_padding;

    Tensor y({B, Co, Lo});
    {
        const double* xp = x.data();
        const double* kp = k.data();
        const double* bp = b.data();
        double* yp = y.data();
        for (int bi = 0; bi < B; ++bi) {
            for (int co = 0; co < Co; ++co) {
                double* yr = yp + (static_cast<std::size_t>(bi) * Co + co) * Lo;
                for (int l = 0; l < Lo; ++l) yr[l] = bp[co];
            }
            for (int ci = 0; ci < Ci; ++ci) {
                const double* xr = xp + (static_cast<std::size_t>(bi) * Ci + ci) * L;
                for (int co = 0; co < Co; ++co) {
                    const double* kr = kp + (static_cast<std::size_t>(ci) * Co + co) * K;
                    double* yr = yp + (static_cast<std::size_t>(bi) * Co + co) * Lo;
                    for (int kk = 0; kk < K; ++kk) {
                        const double w = kr[kk];
                        double* ys = yr + kk;
                        for (int l = 0; l < L; ++l) ys[static_cast<std::size_t>(l) * stride] += w * xr[l];
                    }
                }
            }
        }
    }
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, kv, bv, out, B, Ci, L, Co, K, Lo, stride](Tape& t) {
        const double* dy = t.grads_[out.id].data();
        const double* xp = t.values_[xv.id].data();
        const double* kp = t.values_[kv.id].data();
        double* dx = t.grads_[xv.id].data();
        double* dk = t.grads_[kv.id].data();
        double* db = t.grads_[bv.id].data();
        for (int bi = 0; bi < B; ++bi) {
            for (int co = 0; co < Co; ++co) {
                const double* dyr = dy + (static_cast<std::size_t>(bi) * Co + co) * Lo;
                double acc = 0.0;
                for (int l = 0; l < Lo; ++l) acc += dyr[l];
                db[co] += acc;
            }
            for (int ci = 0; ci < Ci; ++ci) {
                const double* xr = xp + (static_cast<std::size_t>(bi) * Ci + ci) * L;
                double* dxr = dx + (static_cast<std::size_t>(bi) * Ci + ci) * L;
                for (int co = 0; co < Co; ++co) {
                    const double* kr = kp + (static_cast<std::size_t>(ci) * Co + co) * K;
                    double* dkr = dk + (static_cast<std::size_t>(ci) * Co + co) * K;
                    const double* dyr = dy + (static_cast<std::size_t>(bi) * Co + co) * Lo;
                    for (int kk = 0; kk < K; ++kk) {
                        const double w = kr[kk];
                        const double* dys = dyr + kk;
                        double wacc = 0.0;
                        for (int l = 0; l < L; ++l) {
                            const double g = dys[static_cast<std::size_t>(l) * stride];
                            dxr[l] += g * w;
                            wacc += g * xr[l];
                        }
                        dkr[kk] += wacc;
                    }
                }
            }
        }
    });
}

Var Tape::relu(Var xv) {
    const Tensor& x = value(xv);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out](Tape& t) {
        const Tensor& x = t.values_[xv.id];
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] > 0.0) dx[i] += dy[i];  // derivative at exactly 0 is 0
    });
}

Var Tape::sigmoid(Var xv) {
    const Tensor& x = value(xv);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_sigmoid(x[i]);
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out](Tape& t) {
        const Tensor& y = t.values_[out.id];
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
    });
}

Var Tape::exp(Var xv) {
    const Tensor& x = value(xv);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(x[i]);
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out](Tape& t) {
        const Tensor& y = t.values_[out.id];
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i];
    });
}

Var Tape::square(Var xv) {
    const Tensor& x = value(xv);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * x[i];
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out](Tape& t) {
        const Tensor& x = t.values_[xv.id];
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] += 2.0 * x[i] * dy[i];
    });
}

Var Tape::add(Var av, Var bv) {
    check_same_shape("add", av, bv);
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [av, bv, out](Tape& t) {
        const Tensor& dy = t.grads_[out.id];
        Tensor& da = t.grads_[av.id];
        Tensor& db = t.grads_[bv.id];
        for (std::size_t i = 0; i < dy.size(); ++i) {
            da[i] += dy[i];
            db[i] += dy[i];
        }
    });
}

Var Tape::sub(Var av, Var bv) {
    check_same_shape("sub", av, bv);
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [av, bv, out](Tape& t) {
        const Tensor& dy = t.grads_[out.id];
        Tensor& da = t.grads_[av.id];
        Tensor& db = t.grads_[bv.id];
        for (std::size_t i = 0; i < dy.size(); ++i) {
            da[i] += dy[i];
            db[i] -= dy[i];
        }
    });
}

Var Tape::mul(Var av, Var bv) {
    check_same_shape("mul", av, bv);
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [av, bv, out](Tape& t) {
        const Tensor& a = t.values_[av.id];
        const Tensor& b = t.values_[bv.id];
        const Tensor& dy = t.grads_[out.id];
        Tensor& da = t.grads_[av.id];
        Tensor& db = t.grads_[bv.id];
        for (std::size_t i = 0; i < dy.size(); ++i) {
            da[i] += dy[i] * b[i];
            db[i] += dy[i] * a[i];
        }
    });
}

Var Tape::scale(Var xv, double c) {
    const Tensor& x = value(xv);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * c;
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out, c](Tape& t) {
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * c;
    });
}

Var Tape::add_scalar(Var xv, double c) {
    const Tensor& x = value(xv);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + c;
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out](Tape& t) {
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
}

Var Tape::clamp(Var xv, double lo, double hi) {
    const Tensor& x = value(xv);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::min(std::max(x[i], lo), hi);
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out, lo, hi](Tape& t) {
        const Tensor& x = t.values_[xv.id];
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] > lo && x[i] < hi) dx[i] += dy[i];
    });
}

Var Tape::minimum(Var av, Var bv) {
    check_same_shape("minimum", av, bv);
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] <= b[i] ? a[i] : b[i];
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [av, bv, out](Tape& t) {
        const Tensor& a = t.values_[av.id];
        const Tensor& b = t.values_[bv.id];
        const Tensor& dy = t.grads_[out.id];
        Tensor& da = t.grads_[av.id];
        Tensor& db = t.grads_[bv.id];
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] <= b[i]) da[i] += dy[i];
            else db[i] += dy[i];
        }
    });
}

Var Tape::reshape(Var xv, std::vector<int> shape) {
    const Tensor& x = value(xv);
    if (shape_numel(shape) != x.size())
        throw std::invalid_argument("reshape: cannot view " + x.shape_string() + " as " + shape_str(shape));
    Tensor y(std::move(shape), std::vector<double>(x.data(), x.data() + x.size()));
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out](Tape& t) {
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
}

Var Tape::log_softmax_rows(Var xv) {
    const Tensor& x = value(xv);
    check_rank("log_softmax_rows", x, 2);
    const int B = x.dim(0), C = x.dim(1);
    Tensor y(x.shape());
    for (int bi = 0; bi < B; ++bi) {
        const double* xr = x.data() + static_cast<std::size_t>(bi) * C;
        double* yr = y.data() + static_cast<std::size_t>(bi) * C;
        double m = xr[0];
        for (int c = 1; c < C; ++c) m = std::max(m, xr[c]);
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += std::exp(xr[c] - m);
        const double lse = m + std::log(s);
        for (int c = 0; c < C; ++c) yr[c] = xr[c] - lse;
    }
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out, B, C](Tape& t) {
        const Tensor& y = t.values_[out.id];
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (int bi = 0; bi < B; ++bi) {
            const double* yr = y.data() + static_cast<std::size_t>(bi) * C;
            const double* dyr = dy.data() + static_cast<std::size_t>(bi) * C;
            double* dxr = dx.data() + static_cast<std::size_t>(bi) * C;
            double s = 0.0;
            for (int c = 0; c < C; ++c) s += dyr[c];
            for (int c = 0; c < C; ++c) dxr[c] += dyr[c] - std::exp(yr[c]) * s;
        }
    });
}

Var Tape::gather_rows(Var xv, std::vector<int> index) {
    const Tensor& x = value(xv);
    check_rank("gather_rows", x, 2);
    const int B = x.dim(0), C = x.dim(1);
    if (static_cast<int>(index.size()) != B)
        throw std::invalid_argument("gather_rows: index length " + std::to_string(index.size()) +
                                    " != batch " + std::to_string(B));
    Tensor y({B});
    for (int bi = 0; bi < B; ++bi) {
        const int c = index[static_cast<std::size_t>(bi)];
        if (c < 0 || c >= C) throw std::invalid_argument("gather_rows: index out of range");
        y[static_cast<std::size_t>(bi)] = x[static_cast<std::size_t>(bi) * C + c];
    }
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(std::move(y), [xv, out, C, index = std::move(index)](Tape& t) {
        const Tensor& dy = t.grads_[out.id];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t bi = 0; bi < index.size(); ++bi)
            dx[bi * C + static_cast<std::size_t>(index[bi])] += dy[bi];
    });
}

Var Tape::sum(Var xv) {
    const Tensor& x = value(xv);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(Tensor::scalar(s), [xv, out](Tape& t) {
        const double g = t.grads_[out.id][0];
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
}

Var Tape::mean(Var xv) {
    const Tensor& x = value(xv);
    const double inv = 1.0 / static_cast<double>(x.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    const Var out{static_cast<std::uint32_t>(values_.size())};
    return push(Tensor::scalar(s * inv), [xv, out, inv](Tape& t) {
        const double g = t.grads_[out.id][0] * inv;
        Tensor& dx = t.grads_[xv.id];
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
}

}  // namespace rsrl::num
