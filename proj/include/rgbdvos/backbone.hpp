#pragma once

#include <string>

#include "rgbdvos/nn.hpp"
#include "rgbdvos/tensor.hpp"

namespace rgbdvos {

// Per-modality or fused feature maps at strides 4/8/16.
struct FeaturePyramid {
    Var f4, f8, f16;
};

struct BackboneConfig {
    int c4 = 16, c8 = 32, c16 = 64;
    std::uint64_t seed = 1;
    enum class WeightSource { random, file } source = WeightSource::random;
    std::string weight_file;
};

// Residual conv stack with the fixed 4/8/16 stride schedule. Any such stack
// satisfies the feature-extraction contract; this one is three blocks.
struct BackboneParams {
    Conv2d stem;            // stride 2
    ResidualBlock block4;   // stride 4
    ResidualBlock block8;   // stride 8
    ResidualBlock block16;  // stride 16
    BackboneConfig cfg;

    BackboneParams() = default;
    BackboneParams(Rng& rng, const BackboneConfig& c)
        : stem(rng, 3, c.c4, 3, 2, 1),
          block4(rng, c.c4, c.c4, 2),
          block8(rng, c.c4, c.c8, 2),
          block16(rng, c.c8, c.c16, 2),
          cfg(c) {}

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        stem.visit(prefix + ".stem", fn);
        block4.visit(prefix + ".block4", fn);
        block8.visit(prefix + ".block8", fn);
        block16.visit(prefix + ".block16", fn);
    }
};

// image: {3,H,W} in [0,1], H and W multiples of 16.
inline FeaturePyramid extract_features(const Var& image, const BackboneParams& p) {
    const Tensor& v = image.value();
    if (v.ndim() != 3 || v.dim(0) != 3) throw ShapeError("extract_features expects {3,H,W}");
    if (v.dim(1) % 16 != 0 || v.dim(2) % 16 != 0)
        throw ShapeError("input spatial dims must be multiples of 16, got " + shape_str(v.shape()));
    Var s = relu(p.stem(image));
    Var f4 = p.block4(s);
    Var f8 = p.block8(f4);
    Var f16 = p.block16(f8);
    return {f4, f8, f16};
}

}  // namespace rgbdvos
