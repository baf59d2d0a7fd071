#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rgbdvos/tensor.hpp"

namespace rgbdvos {

using Rng = std::mt19937_64;

// Visits every learnable tensor with a stable dotted name.
using ParamVisitor = std::function<void(const std::string&, Var&)>;

namespace init {

inline Tensor he_normal(Rng& rng, const std::vector<int>& shape, int fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
    Tensor t(shape);
    for (int i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

}  // namespace init

// 2-d conv layer with owned parameters.
struct Conv2d {
    Var w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(Rng& rng, int in_ch, int out_ch, int k, int stride_, int pad_)
        : stride(stride_), pad(pad_) {
        w = Var::param(init::he_normal(rng, {out_ch, in_ch, k, k}, in_ch * k * k));
        b = Var::param(Tensor::zeros({out_ch}));
    }

    Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".w", w);
        fn(prefix + ".b", b);
    }
};

struct LinearLayer {
    Var w, b;

    LinearLayer() = default;
    LinearLayer(Rng& rng, int in_dim, int out_dim) {
        w = Var::param(init::he_normal(rng, {out_dim, in_dim}, in_dim));
        b = Var::param(Tensor::zeros({out_dim}));
    }

    Var operator()(const Var& x) const { return linear(w, b, x); }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        fn(prefix + ".w", w);
        fn(prefix + ".b", b);
    }
};

// Residual block: conv3x3(stride) -> relu -> conv3x3 -> (+ 1x1 skip) -> relu.
struct ResidualBlock {
    Conv2d conv1, conv2, skip;

    ResidualBlock() = default;
    ResidualBlock(Rng& rng, int in_ch, int out_ch, int stride)
        : conv1(rng, in_ch, out_ch, 3, stride, 1),
          conv2(rng, out_ch, out_ch, 3, 1, 1),
          skip(rng, in_ch, out_ch, 1, stride, 0) {}

    Var operator()(const Var& x) const {
        Var h = relu(conv1(x));
        h = conv2(h);
        return relu(vadd(h, skip(x)));
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        conv1.visit(prefix + ".conv1", fn);
        conv2.visit(prefix + ".conv2", fn);
        skip.visit(prefix + ".skip", fn);
    }
};

// Collects named parameters from any object exposing visit(prefix, fn).
template <typename M>
std::map<std::string, Var> named_params(M& module, const std::string& prefix) {
    std::map<std::string, Var> out;
    module.visit(prefix, [&out](const std::string& name, Var& v) { out.emplace(name, v); });
    return out;
}

template <typename M>
void zero_params(M& module) {
    module.visit("", [](const std::string&, Var& v) {
        Tensor& t = v.value_mut();
        for (int i = 0; i < t.size(); ++i) t[i] = 0.0;
    });
}

// Decoupled weight decay Adam. Iterates parameters in name order.
class AdamW {
public:
    struct Config {
        double lr = 1e-5;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-4;
    };

    explicit AdamW(std::map<std::string, Var> params, Config cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        for (auto& [name, v] : params_) {
            state_[name] = {Tensor::zeros(v.shape()), Tensor::zeros(v.shape())};
        }
    }

    void zero_grad() {
        for (auto& [name, v] : params_) v.zero_grad();
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (auto& [name, v] : params_) {
            auto& [m, s] = state_[name];
            Tensor& val = v.value_mut();
            const Tensor& g = v.grad();
            for (int i = 0; i < val.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                s[i] = cfg_.beta2 * s[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                double mhat = m[i] / bc1;
                double shat = s[i] / bc2;
                val[i] -= cfg_.lr * (mhat / (std::sqrt(shat) + cfg_.eps) +
                                     cfg_.weight_decay * val[i]);
            }
        }
    }

private:
    std::map<std::string, Var> params_;
    Config cfg_;
    std::map<std::string, std::pair<Tensor, Tensor>> state_;
    long t_ = 0;
};

}  // namespace rgbdvos
