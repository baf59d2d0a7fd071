#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rgbdvos/errors.hpp"

namespace rgbdvos {

// Dense double tensor, CHW layout for 3-d feature maps.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(count(shape_)), 0.0);
    }
    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::size_t>(count(shape_)) != data_.size())
            throw ShapeError("tensor data does not match shape");
    }

    static Tensor zeros(const std::vector<int>& shape) { return Tensor(shape); }
    static Tensor full(const std::vector<int>& shape, double v) {
        Tensor t(shape);
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int size() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

    // 3-d accessors assume CHW.
    double& at(int c, int y, int x) {
        return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    double at(int c, int y, int x) const {
        return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }

    double item() const {
        if (size() != 1) throw ShapeError("item() on non-scalar tensor");
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static int count(const std::vector<int>& shape) {
        int n = shape.empty() ? 0 : 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// ---------------------------------------------------------------------------
// Reverse-mode autodiff. A Var wraps a graph node holding the value tensor,
// its gradient, and a closure that scatters the node's gradient to parents.
// ---------------------------------------------------------------------------

struct Node {
    Tensor val;
    Tensor grad;  // allocated on demand, same shape as val
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor::zeros(val.shape());
        return grad;
    }
};

namespace detail {
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

// Scoped "no grad": ops built inside produce leaves without tape entries.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Var leaf(Tensor value, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->val = std::move(value);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }
    static Var param(Tensor value) { return leaf(std::move(value), true); }
    static Var constant(Tensor value) { return leaf(std::move(value), false); }
    static Var scalar(double v) { return constant(Tensor::scalar(v)); }

    bool defined() const { return n_ != nullptr; }
    const Tensor& value() const { return n_->val; }
    Tensor& value_mut() { return n_->val; }
    const Tensor& grad() const { return n_->ensure_grad(); }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    const std::vector<int>& shape() const { return n_->val.shape(); }
    double item() const { return n_->val.item(); }
    std::shared_ptr<Node> node() const { return n_; }

    void zero_grad() {
        if (n_ && !n_->grad.empty()) n_->grad = Tensor::zeros(n_->val.shape());
    }

    // Value copy detached from the tape.
    Var detach() const { return constant(n_->val); }

private:
    std::shared_ptr<Node> n_;
};

// Builds an op node; `backward` scatters node.grad into node.parents' grads.
inline Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    bool track = detail::grad_mode();
    if (track) {
        bool any = false;
        for (const auto& v : inputs) any = any || v.requires_grad();
        track = any;
    }
    auto n = std::make_shared<Node>();
    n->val = std::move(value);
    if (track) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (auto& v : inputs) n->parents.push_back(v.node());
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

// Runs reverse-mode accumulation from a scalar root.
inline void backward(const Var& root) {
    if (root.value().size() != 1) throw ShapeError("backward() requires a scalar root");
    // Iterative topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) {
            n->ensure_grad();
            n->backward(*n);
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

inline Var vadd(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node* p = n.parents[static_cast<std::size_t>(k)].get();
            if (!p->requires_grad) continue;
            Tensor& g = p->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

inline Var vsub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

inline Var vmul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb->val[i];
        }
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa->val[i];
        }
    });
}

inline Var vdiv(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "div");
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] / pb->val[i];
        }
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (int i = 0; i < g.size(); ++i)
                g[i] -= n.grad[i] * pa->val[i] / (pb->val[i] * pb->val[i]);
        }
    });
}

inline Var scale(const Var& a, double c) {
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] *= c;
    return make_op(std::move(out), {a}, [c](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * c;
    });
}

inline Var add_const(const Var& a, double c) {
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] += c;
    return make_op(std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

inline Var relu(const Var& a) {
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return make_op(std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int i = 0; i < g.size(); ++i)
            if (p->val[i] > 0.0) g[i] += n.grad[i];
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return make_op(std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.val[i] * (1.0 - n.val[i]);
    });
}

inline Var tanh_op(const Var& a) {
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return make_op(std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (1.0 - n.val[i] * n.val[i]);
    });
}

inline Var sum_all(const Var& a) {
    double s = 0.0;
    for (int i = 0; i < a.value().size(); ++i) s += a.value()[i];
    return make_op(Tensor::scalar(s), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[0];
    });
}

inline Var mean_all(const Var& a) {
    int cnt = a.value().size();
    if (cnt == 0) throw ShapeError("mean of empty tensor");
    double s = 0.0;
    for (int i = 0; i < cnt; ++i) s += a.value()[i];
    double inv = 1.0 / cnt;
    return make_op(Tensor::scalar(s * inv), {a}, [inv](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[0] * inv;
    });
}

// ---------------------------------------------------------------------------
// NN building blocks (CHW)
// ---------------------------------------------------------------------------

// Global average pooling: {C,H,W} -> {C}.
inline Var gap(const Var& x) {
    const Tensor& v = x.value();
    if (v.ndim() != 3) throw ShapeError("gap expects CHW");
    int C = v.dim(0), H = v.dim(1), W = v.dim(2);
    Tensor out({C});
    double inv = 1.0 / (H * W);
    for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (int i = 0; i < H * W; ++i) s += v[c * H * W + i];
        out[c] = s * inv;
    }
    return make_op(std::move(out), {x}, [C, H, W, inv](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int c = 0; c < C; ++c) {
            double gc = n.grad[c] * inv;
            for (int i = 0; i < H * W; ++i) g[c * H * W + i] += gc;
        }
    });
}

// Fully connected layer: x {Ci} -> {Co}.
inline Var linear(const Var& w, const Var& b, const Var& x) {
    const Tensor& wv = w.value();
    const Tensor& xv = x.value();
    if (wv.ndim() != 2 || xv.ndim() != 1) throw ShapeError("linear expects w{Co,Ci}, x{Ci}");
    int Co = wv.dim(0), Ci = wv.dim(1);
    if (xv.dim(0) != Ci || b.value().size() != Co) throw ShapeError("linear dims mismatch");
    Tensor out({Co});
    for (int o = 0; o < Co; ++o) {
        double s = b.value()[o];
        const double* wr = wv.data() + o * Ci;
        for (int i = 0; i < Ci; ++i) s += wr[i] * xv[i];
        out[o] = s;
    }
    return make_op(std::move(out), {w, b, x}, [Co, Ci](Node& n) {
        Node* pw = n.parents[0].get();
        Node* pb = n.parents[1].get();
        Node* px = n.parents[2].get();
        for (int o = 0; o < Co; ++o) {
            double go = n.grad[o];
            if (pb->requires_grad) pb->ensure_grad()[o] += go;
            for (int i = 0; i < Ci; ++i) {
                if (pw->requires_grad) pw->ensure_grad()[o * Ci + i] += go * px->val[i];
                if (px->requires_grad) px->ensure_grad()[i] += go * pw->val[o * Ci + i];
            }
        }
    });
}

// Per-channel broadcast multiply: x {C,H,W} * w {C}.
inline Var mul_channel(const Var& x, const Var& w) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 3 || w.value().ndim() != 1 || w.value().dim(0) != xv.dim(0))
        throw ShapeError("mul_channel expects x{C,H,W}, w{C}");
    int C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
    Tensor out = xv;
    for (int c = 0; c < C; ++c) {
        double wc = w.value()[c];
        for (int i = 0; i < HW; ++i) out[c * HW + i] *= wc;
    }
    return make_op(std::move(out), {x, w}, [C, HW](Node& n) {
        Node* px = n.parents[0].get();
        Node* pw = n.parents[1].get();
        for (int c = 0; c < C; ++c) {
            double wc = pw->val[c];
            double acc = 0.0;
            for (int i = 0; i < HW; ++i) {
                double g = n.grad[c * HW + i];
                if (px->requires_grad) px->ensure_grad()[c * HW + i] += g * wc;
                acc += g * px->val[c * HW + i];
            }
            if (pw->requires_grad) pw->ensure_grad()[c] += acc;
        }
    });
}

// 2-d convolution, zero padding. x {Ci,H,W}, w {Co,Ci,kh,kw}, b {Co}.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (xv.ndim() != 3 || wv.ndim() != 4) throw ShapeError("conv2d expects x{Ci,H,W}, w{Co,Ci,kh,kw}");
    int Ci = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int Co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != Ci) throw ShapeError("conv2d channel mismatch");
    if (b.value().size() != Co) throw ShapeError("conv2d bias mismatch");
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d output collapses");
    Tensor out({Co, Ho, Wo});
    for (int co = 0; co < Co; ++co) {
        double bias = b.value()[co];
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                double s = bias;
                int iy0 = oy * stride - pad;
                int ix0 = ox * stride - pad;
                for (int ci = 0; ci < Ci; ++ci) {
                    const double* xp = xv.data() + ci * H * W;
                    const double* wp = wv.data() + ((co * Ci + ci) * kh) * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = iy0 + ky;
                        if (iy < 0 || iy >= H) continue;
                        const double* xr = xp + iy * W;
                        const double* wr = wp + ky * kw;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ix0 + kx;
                            if (ix < 0 || ix >= W) continue;
                            s += wr[kx] * xr[ix];
                        }
                    }
                }
                out.at(co, oy, ox) = s;
            }
        }
    }
    return make_op(std::move(out), {x, w, b},
                   [Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad](Node& n) {
        Node* px = n.parents[0].get();
        Node* pw = n.parents[1].get();
        Node* pb = n.parents[2].get();
        for (int co = 0; co < Co; ++co) {
            for (int oy = 0; oy < Ho; ++oy) {
                for (int ox = 0; ox < Wo; ++ox) {
                    double g = n.grad.at(co, oy, ox);
                    if (g == 0.0) continue;
                    if (pb->requires_grad) pb->ensure_grad()[co] += g;
                    int iy0 = oy * stride - pad;
                    int ix0 = ox * stride - pad;
                    for (int ci = 0; ci < Ci; ++ci) {
                        for (int ky = 0; ky < kh; ++ky) {
                            int iy = iy0 + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                int ix = ix0 + kx;
                                if (ix < 0 || ix >= W) continue;
                                int wi = ((co * Ci + ci) * kh + ky) * kw + kx;
                                int xi = (ci * H + iy) * W + ix;
                                if (pw->requires_grad) pw->ensure_grad()[wi] += g * px->val[xi];
                                if (px->requires_grad) px->ensure_grad()[xi] += g * pw->val[wi];
                            }
                        }
                    }
                }
            }
        }
    });
}

// 2x2 average pooling, stride 2. Requires even spatial dims.
inline Var avg_pool2(const Var& x) {
    const Tensor& v = x.value();
    if (v.ndim() != 3) throw ShapeError("avg_pool2 expects CHW");
    int C = v.dim(0), H = v.dim(1), W = v.dim(2);
    if (H % 2 || W % 2) throw ShapeError("avg_pool2 needs even spatial dims");
    Tensor out({C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y)
            for (int xq = 0; xq < W / 2; ++xq)
                out.at(c, y, xq) = 0.25 * (v.at(c, 2 * y, 2 * xq) + v.at(c, 2 * y, 2 * xq + 1) +
                                           v.at(c, 2 * y + 1, 2 * xq) + v.at(c, 2 * y + 1, 2 * xq + 1));
    return make_op(std::move(out), {x}, [C, H, W](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H / 2; ++y)
                for (int xq = 0; xq < W / 2; ++xq) {
                    double gv = 0.25 * n.grad.at(c, y, xq);
                    g.at(c, 2 * y, 2 * xq) += gv;
                    g.at(c, 2 * y, 2 * xq + 1) += gv;
                    g.at(c, 2 * y + 1, 2 * xq) += gv;
                    g.at(c, 2 * y + 1, 2 * xq + 1) += gv;
                }
    });
}

inline Var upsample_nearest(const Var& x, int factor) {
    const Tensor& v = x.value();
    if (v.ndim() != 3) throw ShapeError("upsample expects CHW");
    if (factor < 1) throw ShapeError("upsample factor must be >= 1");
    int C = v.dim(0), H = v.dim(1), W = v.dim(2);
    Tensor out({C, H * factor, W * factor});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H * factor; ++y)
            for (int xq = 0; xq < W * factor; ++xq)
                out.at(c, y, xq) = v.at(c, y / factor, xq / factor);
    return make_op(std::move(out), {x}, [C, H, W, factor](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H * factor; ++y)
                for (int xq = 0; xq < W * factor; ++xq)
                    g.at(c, y / factor, xq / factor) += n.grad.at(c, y, xq);
    });
}

inline Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat of nothing");
    int H = xs[0].value().dim(1), W = xs[0].value().dim(2);
    int C = 0;
    for (const auto& x : xs) {
        if (x.value().ndim() != 3 || x.value().dim(1) != H || x.value().dim(2) != W)
            throw ShapeError("concat spatial mismatch");
        C += x.value().dim(0);
    }
    Tensor out({C, H, W});
    int off = 0;
    for (const auto& x : xs) {
        int n = x.value().size();
        std::copy(x.value().data(), x.value().data() + n, out.data() + off);
        off += n;
    }
    std::vector<int> sizes;
    for (const auto& x : xs) sizes.push_back(x.value().size());
    return make_op(std::move(out), xs, [sizes](Node& n) {
        int off = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            Node* p = n.parents[k].get();
            if (p->requires_grad) {
                Tensor& g = p->ensure_grad();
                for (int i = 0; i < sizes[k]; ++i) g[i] += n.grad[off + i];
            }
            off += sizes[k];
        }
    });
}

// Softmax over the channel dim per pixel: {K,H,W} -> {K,H,W}.
inline Var softmax_channels(const Var& x) {
    const Tensor& v = x.value();
    if (v.ndim() != 3) throw ShapeError("softmax_channels expects KHW");
    int K = v.dim(0), H = v.dim(1), W = v.dim(2);
    Tensor out({K, H, W});
    for (int y = 0; y < H; ++y) {
        for (int xq = 0; xq < W; ++xq) {
            double mx = v.at(0, y, xq);
            for (int k = 1; k < K; ++k) mx = std::max(mx, v.at(k, y, xq));
            double z = 0.0;
            for (int k = 0; k < K; ++k) {
                double e = std::exp(v.at(k, y, xq) - mx);
                out.at(k, y, xq) = e;
                z += e;
            }
            for (int k = 0; k < K; ++k) out.at(k, y, xq) /= z;
        }
    }
    return make_op(std::move(out), {x}, [K, H, W](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (int y = 0; y < H; ++y)
            for (int xq = 0; xq < W; ++xq) {
                double dot = 0.0;
                for (int k = 0; k < K; ++k) dot += n.grad.at(k, y, xq) * n.val.at(k, y, xq);
                for (int k = 0; k < K; ++k)
                    g.at(k, y, xq) += n.val.at(k, y, xq) * (n.grad.at(k, y, xq) - dot);
            }
    });
}

}  // namespace rgbdvos
