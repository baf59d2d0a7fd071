#pragma once

#include <string>
#include <vector>

#include "rgbdvos/backbone.hpp"
#include "rgbdvos/nn.hpp"
#include "rgbdvos/tensor.hpp"

namespace rgbdvos {

// Channel-level gating weights of one selection-fusion call. For modality
// calls the two slots are RGB/depth; for hierarchy calls they are the
// previous-stage path and the current deep features.
struct ModalityWeights {
    std::vector<double> w_rgb, w_d;  // each entry in (0,1)
    int stage = 0;                   // 4, 8 or 16
    enum class Kind { modality, hierarchy } kind = Kind::modality;
};

// One selection-fusion block: shared squeeze projection, two sigmoid heads.
struct MsfParams {
    LinearLayer shared;  // C -> hidden
    LinearLayer head_a;  // hidden -> C
    LinearLayer head_b;  // hidden -> C
    int channels = 0;

    MsfParams() = default;
    MsfParams(Rng& rng, int c) : channels(c) {
        int hidden = std::max(c / 4, 4);
        shared = LinearLayer(rng, c, hidden);
        head_a = LinearLayer(rng, hidden, c);
        head_b = LinearLayer(rng, hidden, c);
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        shared.visit(prefix + ".shared", fn);
        head_a.visit(prefix + ".head_a", fn);
        head_b.visit(prefix + ".head_b", fn);
    }
};

struct FuseResult {
    Var fused;
    ModalityWeights weights;
};

// Global pooling of the summed maps, shared projection, per-stream sigmoid
// gates, channel-wise reweighting, and summation of the gated streams.
inline FuseResult select_fuse(const Var& f_a, const Var& f_b, const MsfParams& p, int stage = 0,
                              ModalityWeights::Kind kind = ModalityWeights::Kind::modality) {
    require_same_shape(f_a.value(), f_b.value(), "select_fuse");
    if (f_a.value().ndim() != 3 || f_a.value().dim(0) != p.channels)
        throw ShapeError("select_fuse channel mismatch");

    Var pooled = gap(vadd(f_a, f_b));
    Var global = p.shared(pooled);
    Var w_a = sigmoid(p.head_a(global));
    Var w_b = sigmoid(p.head_b(global));
    Var fused = vadd(mul_channel(f_a, w_a), mul_channel(f_b, w_b));

    ModalityWeights w;
    w.stage = stage;
    w.kind = kind;
    w.w_rgb.assign(w_a.value().data(), w_a.value().data() + w_a.value().size());
    w.w_d.assign(w_b.value().data(), w_b.value().data() + w_b.value().size());
    return {fused, w};
}

// Hierarchical wiring: per-stage modality fusion, then the previous stage's
// output (pooled and 1x1-projected) is fused into the current stage with the
// same block.
struct HmsfParams {
    MsfParams mod4, mod8, mod16;
    Conv2d down4to8;    // 1x1 c4->c8 after stride-2 pooling
    MsfParams hier8;
    Conv2d down8to16;   // 1x1 c8->c16 after stride-2 pooling
    MsfParams hier16;

    HmsfParams() = default;
    HmsfParams(Rng& rng, int c4, int c8, int c16)
        : mod4(rng, c4),
          mod8(rng, c8),
          mod16(rng, c16),
          down4to8(rng, c4, c8, 1, 1, 0),
          hier8(rng, c8),
          down8to16(rng, c8, c16, 1, 1, 0),
          hier16(rng, c16) {}

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        mod4.visit(prefix + ".mod4", fn);
        mod8.visit(prefix + ".mod8", fn);
        mod16.visit(prefix + ".mod16", fn);
        down4to8.visit(prefix + ".down4to8", fn);
        hier8.visit(prefix + ".hier8", fn);
        down8to16.visit(prefix + ".down8to16", fn);
        hier16.visit(prefix + ".hier16", fn);
    }
};

struct HmsfResult {
    FeaturePyramid fused;
    std::vector<ModalityWeights> weights;  // one entry per select_fuse call
};

inline HmsfResult hmsf(const FeaturePyramid& rgb, const FeaturePyramid& d, const HmsfParams& p) {
    using Kind = ModalityWeights::Kind;
    FuseResult deep4 = select_fuse(rgb.f4, d.f4, p.mod4, 4, Kind::modality);
    FuseResult deep8 = select_fuse(rgb.f8, d.f8, p.mod8, 8, Kind::modality);
    FuseResult deep16 = select_fuse(rgb.f16, d.f16, p.mod16, 16, Kind::modality);

    Var f4 = deep4.fused;
    Var h8 = p.down4to8(avg_pool2(f4));
    FuseResult fuse8 = select_fuse(h8, deep8.fused, p.hier8, 8, Kind::hierarchy);
    Var h16 = p.down8to16(avg_pool2(fuse8.fused));
    FuseResult fuse16 = select_fuse(h16, deep16.fused, p.hier16, 16, Kind::hierarchy);

    HmsfResult out;
    out.fused = {f4, fuse8.fused, fuse16.fused};
    out.weights = {deep4.weights, deep8.weights, deep16.weights, fuse8.weights, fuse16.weights};
    return out;
}

// The stage-16 modality call's weights drive pixel-wise image fusion.
inline const ModalityWeights& stage16_modality_weights(const std::vector<ModalityWeights>& ws) {
    for (const auto& w : ws)
        if (w.stage == 16 && w.kind == ModalityWeights::Kind::modality) return w;
    throw Error("no stage-16 modality weights present");
}

}  // namespace rgbdvos
