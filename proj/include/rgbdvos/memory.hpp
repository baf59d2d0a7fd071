#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "rgbdvos/fusion.hpp"
#include "rgbdvos/nn.hpp"
#include "rgbdvos/tensor.hpp"

namespace rgbdvos {

struct MemoryKey {
    Var k;  // {Ck, H/16, W/16}
};

struct MemoryValue {
    Var v;  // {Cv, H/16, W/16}
    int frame_index = 0;
    int object_id = 1;
};

struct MemoryConfig {
    int insert_every = 5;      // r
    int working_capacity = 10;  // T_max
    int prototype_count = 64;   // P
    int consolidation_knn = 8;  // k nearest removed positions per prototype
};

// One working-memory slot: key/value maps plus a per-position usage counter.
struct WorkingEntry {
    MemoryKey key;
    MemoryValue value;
    std::vector<long> usage;  // one counter per spatial position
};

// Consolidated long-term slot: a single key/value vector pair.
struct Prototype {
    std::vector<double> key;
    std::vector<double> value;
    long usage = 0;
};

// Sensory + working + long-term stores for one object. The pipeline owns one
// instance per object; nothing here is shared across objects.
struct MultiStoreMemory {
    int object_id = 1;
    Var sensory;  // {Ch, H/16, W/16}
    std::vector<WorkingEntry> working;
    std::vector<Prototype> longterm;
    MemoryConfig config;

    bool empty() const { return working.empty() && longterm.empty(); }
};

// ---------------------------------------------------------------------------
// Key projection
// ---------------------------------------------------------------------------

struct KeyProjection {
    Conv2d proj;  // 1x1, C16 -> Ck

    KeyProjection() = default;
    KeyProjection(Rng& rng, int c16, int ck) : proj(rng, c16, ck, 1, 1, 0) {}

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        proj.visit(prefix + ".proj", fn);
    }
};

inline MemoryKey encode_key(const Var& f16, const KeyProjection& p) {
    return {p.proj(f16)};
}

// ---------------------------------------------------------------------------
// Memory encoder: two 4-channel residual streams (image + mask), taps at
// strides 8 and 16, fused by two selection-fusion calls.
// ---------------------------------------------------------------------------

struct MemoryEncoderConfig {
    int e1 = 8, e2 = 16, e3 = 32;  // e3 is the value channel count Cv
    std::uint64_t seed = 1;
};

struct MemoryEncoderStream {
    Conv2d stem;            // stride 2
    ResidualBlock block4;   // stride 4
    ResidualBlock block8;   // stride 8, tap "_2"
    ResidualBlock block16;  // stride 16, tap "_3"

    MemoryEncoderStream() = default;
    MemoryEncoderStream(Rng& rng, const MemoryEncoderConfig& c)
        : stem(rng, 4, c.e1, 3, 2, 1),
          block4(rng, c.e1, c.e1, 2),
          block8(rng, c.e1, c.e2, 2),
          block16(rng, c.e2, c.e3, 2) {}

    std::pair<Var, Var> operator()(const Var& x) const {
        Var s = relu(stem(x));
        Var f4 = block4(s);
        Var f8 = block8(f4);
        Var f16 = block16(f8);
        return {f8, f16};
    }

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        stem.visit(prefix + ".stem", fn);
        block4.visit(prefix + ".block4", fn);
        block8.visit(prefix + ".block8", fn);
        block16.visit(prefix + ".block16", fn);
    }
};

struct MemoryEncoderParams {
    MemoryEncoderStream stream_rgb, stream_d;
    Conv2d proj_shallow;  // 1x1 e2->e3 after stride-2 pooling
    MsfParams msf_deep;   // fuses the two stride-16 taps
    MsfParams msf_final;  // fuses projected shallow sum with the deep fusion
    MemoryEncoderConfig cfg;

    MemoryEncoderParams() = default;
    MemoryEncoderParams(Rng& rng, const MemoryEncoderConfig& c)
        : stream_rgb(rng, c),
          stream_d(rng, c),
          proj_shallow(rng, c.e2, c.e3, 1, 1, 0),
          msf_deep(rng, c.e3),
          msf_final(rng, c.e3),
          cfg(c) {}

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        stream_rgb.visit(prefix + ".stream_rgb", fn);
        stream_d.visit(prefix + ".stream_d", fn);
        proj_shallow.visit(prefix + ".proj_shallow", fn);
        msf_deep.visit(prefix + ".msf_deep", fn);
        msf_final.visit(prefix + ".msf_final", fn);
    }
};

// mask: {1,H,W} with entries in {0,1}. Output value map has e3 channels at
// stride 16. The mask channel itself carries no gradient.
inline MemoryValue encode_memory(const Var& rgb, const Var& depth_pseudo3c, const Tensor& refined_mask,
                                 const MemoryEncoderParams& p, int frame_index, int object_id) {
    const Tensor& rv = rgb.value();
    if (rv.ndim() != 3 || rv.dim(0) != 3) throw ShapeError("encode_memory expects rgb {3,H,W}");
    require_same_shape(rv, depth_pseudo3c.value(), "encode_memory modalities");
    if (refined_mask.ndim() != 3 || refined_mask.dim(0) != 1 ||
        refined_mask.dim(1) != rv.dim(1) || refined_mask.dim(2) != rv.dim(2))
        throw ShapeError("encode_memory mask must be {1,H,W} matching the images");
    for (int i = 0; i < refined_mask.size(); ++i)
        if (refined_mask[i] != 0.0 && refined_mask[i] != 1.0)
            throw ShapeError("encode_memory mask must be binary");

    Var mask = Var::constant(refined_mask);
    auto [rgb2, rgb3] = p.stream_rgb(concat_channels({rgb, mask}));
    auto [d2, d3] = p.stream_d(concat_channels({depth_pseudo3c, mask}));

    Var shallow = p.proj_shallow(avg_pool2(vadd(rgb2, d2)));
    Var deep = select_fuse(rgb3, d3, p.msf_deep).fused;
    Var m = select_fuse(shallow, deep, p.msf_final).fused;
    return {m, frame_index, object_id};
}

// ---------------------------------------------------------------------------
// Readout: softmax attention over every stored key position
// ---------------------------------------------------------------------------

// Affinity is negative squared L2 between key vectors; output per query
// position is the affinity-softmax blend of stored values. Increments the
// usage counter of each query position's best match.
inline Var readout(const MemoryKey& query, MultiStoreMemory& mem) {
    if (mem.empty()) throw EmptyMemoryError();
    const Tensor& q = query.k.value();
    if (q.ndim() != 3) throw ShapeError("readout query must be {Ck,H,W}");
    const int ck = q.dim(0), hq = q.dim(1), wq = q.dim(2), np = hq * wq;

    // Candidate flattening: working entries first (entry order, then position
    // order), then long-term prototypes.
    struct Cand {
        int entry = -1;  // working entry index, -1 for prototypes
        int pos = 0;     // spatial position within the entry
        int proto = -1;  // prototype index
    };
    std::vector<Cand> cands;
    int cv = -1;
    for (std::size_t e = 0; e < mem.working.size(); ++e) {
        const Tensor& kt = mem.working[e].key.k.value();
        const Tensor& vt = mem.working[e].value.v.value();
        if (kt.dim(0) != ck || kt.dim(1) != hq || kt.dim(2) != wq)
            throw ShapeError("stored key incompatible with query");
        if (cv < 0) cv = vt.dim(0);
        for (int pos = 0; pos < np; ++pos) cands.push_back({static_cast<int>(e), pos, -1});
    }
    for (std::size_t i = 0; i < mem.longterm.size(); ++i) {
        if (static_cast<int>(mem.longterm[i].key.size()) != ck)
            throw ShapeError("prototype key incompatible with query");
        if (cv < 0) cv = static_cast<int>(mem.longterm[i].value.size());
        cands.push_back({-1, 0, static_cast<int>(i)});
    }
    const int nc = static_cast<int>(cands.size());

    auto cand_key = [&](int i, int c) -> double {
        const Cand& cd = cands[static_cast<std::size_t>(i)];
        if (cd.entry >= 0) return mem.working[static_cast<std::size_t>(cd.entry)].key.k.value()[c * np + cd.pos];
        return mem.longterm[static_cast<std::size_t>(cd.proto)].key[static_cast<std::size_t>(c)];
    };
    auto cand_val = [&](int i, int c) -> double {
        const Cand& cd = cands[static_cast<std::size_t>(i)];
        if (cd.entry >= 0) return mem.working[static_cast<std::size_t>(cd.entry)].value.v.value()[c * np + cd.pos];
        return mem.longterm[static_cast<std::size_t>(cd.proto)].value[static_cast<std::size_t>(c)];
    };

    // Softmax weights, one column per query position.
    Tensor weights({nc, np});
    Tensor out({cv, hq, wq});
    for (int j = 0; j < np; ++j) {
        double best = -1e300;
        std::vector<double> logit(static_cast<std::size_t>(nc));
        for (int i = 0; i < nc; ++i) {
            double d2 = 0.0;
            for (int c = 0; c < ck; ++c) {
                double diff = cand_key(i, c) - q[c * np + j];
                d2 += diff * diff;
            }
            logit[static_cast<std::size_t>(i)] = -d2;
            best = std::max(best, -d2);
        }
        double z = 0.0;
        int arg = 0;
        for (int i = 0; i < nc; ++i) {
            double e = std::exp(logit[static_cast<std::size_t>(i)] - best);
            weights[i * np + j] = e;
            z += e;
            if (logit[static_cast<std::size_t>(i)] > logit[static_cast<std::size_t>(arg)]) arg = i;
        }
        for (int i = 0; i < nc; ++i) weights[i * np + j] /= z;
        for (int c = 0; c < cv; ++c) {
            double s = 0.0;
            for (int i = 0; i < nc; ++i) s += weights[i * np + j] * cand_val(i, c);
            out[c * np + j] = s;
        }
        // Usage bookkeeping for the top-1 match.
        const Cand& top = cands[static_cast<std::size_t>(arg)];
        if (top.entry >= 0)
            ++mem.working[static_cast<std::size_t>(top.entry)].usage[static_cast<std::size_t>(top.pos)];
        else
            ++mem.longterm[static_cast<std::size_t>(top.proto)].usage;
    }

    // Autodiff wiring: parents are the query plus each working entry's key
    // and value. Prototypes are value-level constants.
    std::vector<Var> parents{query.k};
    for (auto& e : mem.working) {
        parents.push_back(e.key.k);
        parents.push_back(e.value.v);
    }
    // Snapshot prototype vectors for the backward closure.
    std::vector<std::vector<double>> proto_keys, proto_vals;
    for (const auto& pr : mem.longterm) {
        proto_keys.push_back(pr.key);
        proto_vals.push_back(pr.value);
    }
    auto cands_copy = cands;
    int n_working = static_cast<int>(mem.working.size());

    return make_op(std::move(out), std::move(parents),
                   [weights, cands_copy, proto_keys, proto_vals, nc, np, ck, cv, n_working](Node& n) {
        Node* pq = n.parents[0].get();
        auto key_node = [&](int entry) { return n.parents[static_cast<std::size_t>(1 + 2 * entry)].get(); };
        auto val_node = [&](int entry) { return n.parents[static_cast<std::size_t>(2 + 2 * entry)].get(); };
        auto ckey = [&](int i, int c) -> double {
            const auto& cd = cands_copy[static_cast<std::size_t>(i)];
            if (cd.entry >= 0) return key_node(cd.entry)->val[c * np + cd.pos];
            return proto_keys[static_cast<std::size_t>(cd.proto)][static_cast<std::size_t>(c)];
        };
        auto cval = [&](int i, int c) -> double {
            const auto& cd = cands_copy[static_cast<std::size_t>(i)];
            if (cd.entry >= 0) return val_node(cd.entry)->val[c * np + cd.pos];
            return proto_vals[static_cast<std::size_t>(cd.proto)][static_cast<std::size_t>(c)];
        };
        for (int j = 0; j < np; ++j) {
            // a_i = g_j . v_i ; s = sum_i w_ij a_i
            std::vector<double> a(static_cast<std::size_t>(nc));
            double s = 0.0;
            for (int i = 0; i < nc; ++i) {
                double dot = 0.0;
                for (int c = 0; c < cv; ++c) dot += n.grad[c * np + j] * cval(i, c);
                a[static_cast<std::size_t>(i)] = dot;
                s += weights[i * np + j] * dot;
            }
            for (int i = 0; i < nc; ++i) {
                double w = weights[i * np + j];
                const auto& cd = cands_copy[static_cast<std::size_t>(i)];
                // Value path.
                if (cd.entry >= 0 && val_node(cd.entry)->requires_grad) {
                    Tensor& gv = val_node(cd.entry)->ensure_grad();
                    for (int c = 0; c < cv; ++c) gv[c * np + cd.pos] += w * n.grad[c * np + j];
                }
                // Affinity path through the squared distance.
                double dlogit = w * (a[static_cast<std::size_t>(i)] - s);
                if (dlogit == 0.0) continue;
                for (int c = 0; c < ck; ++c) {
                    double diff2 = 2.0 * (ckey(i, c) - pq->val[c * np + j]);
                    if (pq->requires_grad) pq->ensure_grad()[c * np + j] += dlogit * diff2;
                    if (cd.entry >= 0 && key_node(cd.entry)->requires_grad)
                        key_node(cd.entry)->ensure_grad()[c * np + cd.pos] -= dlogit * diff2;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Insertion and consolidation
// ---------------------------------------------------------------------------

// Moves the oldest over-capacity entries into long-term prototypes: the P
// highest-usage removed positions survive, each valued by a softmax(-d^2)
// blend over its k nearest removed neighbours.
inline void consolidate(MultiStoreMemory& mem) {
    const int t_max = mem.config.working_capacity;
    if (static_cast<int>(mem.working.size()) <= t_max) return;
    const int n_remove = static_cast<int>(mem.working.size()) - t_max + 1;

    struct Removed {
        std::vector<double> key, value;
        long usage = 0;
    };
    std::vector<Removed> removed;
    for (int e = 0; e < n_remove; ++e) {
        const WorkingEntry& we = mem.working[static_cast<std::size_t>(e)];
        const Tensor& kt = we.key.k.value();
        const Tensor& vt = we.value.v.value();
        int ck = kt.dim(0), np = kt.dim(1) * kt.dim(2);
        int cv = vt.dim(0);
        for (int pos = 0; pos < np; ++pos) {
            Removed r;
            r.key.resize(static_cast<std::size_t>(ck));
            r.value.resize(static_cast<std::size_t>(cv));
            for (int c = 0; c < ck; ++c) r.key[static_cast<std::size_t>(c)] = kt[c * np + pos];
            for (int c = 0; c < cv; ++c) r.value[static_cast<std::size_t>(c)] = vt[c * np + pos];
            r.usage = we.usage[static_cast<std::size_t>(pos)];
            removed.push_back(std::move(r));
        }
    }
    const int total = static_cast<int>(removed.size());
    const int p_eff = std::min(mem.config.prototype_count, total);

    // Highest usage first; ties toward the lowest flat index.
    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return removed[static_cast<std::size_t>(a)].usage > removed[static_cast<std::size_t>(b)].usage;
    });

    const int knn = mem.config.consolidation_knn;
    for (int rank = 0; rank < p_eff; ++rank) {
        int p = order[static_cast<std::size_t>(rank)];
        const auto& anchor = removed[static_cast<std::size_t>(p)];
        // k nearest removed positions by key distance (self included).
        std::vector<std::pair<double, int>> d2(static_cast<std::size_t>(total));
        for (int qi = 0; qi < total; ++qi) {
            double d = 0.0;
            const auto& other = removed[static_cast<std::size_t>(qi)];
            for (std::size_t c = 0; c < anchor.key.size(); ++c) {
                double diff = anchor.key[c] - other.key[c];
                d += diff * diff;
            }
            d2[static_cast<std::size_t>(qi)] = {d, qi};
        }
        int kk = std::min(knn, total);
        std::partial_sort(d2.begin(), d2.begin() + kk, d2.end());
        double mx = -d2[0].first;
        double z = 0.0;
        std::vector<double> w(static_cast<std::size_t>(kk));
        for (int i = 0; i < kk; ++i) {
            w[static_cast<std::size_t>(i)] = std::exp(-d2[static_cast<std::size_t>(i)].first - mx);
            z += w[static_cast<std::size_t>(i)];
        }
        Prototype proto;
        proto.key = anchor.key;
        proto.usage = anchor.usage;
        proto.value.assign(anchor.value.size(), 0.0);
        for (int i = 0; i < kk; ++i) {
            const auto& src = removed[static_cast<std::size_t>(d2[static_cast<std::size_t>(i)].second)];
            double wi = w[static_cast<std::size_t>(i)] / z;
            for (std::size_t c = 0; c < proto.value.size(); ++c) proto.value[c] += wi * src.value[c];
        }
        mem.longterm.push_back(std::move(proto));
    }

    mem.working.erase(mem.working.begin(), mem.working.begin() + n_remove);
}

// Appends a key/value pair; consolidates when capacity is exceeded. The
// caller gates calls to every r-th frame (frame 0 always inserted).
inline void insert_working(MultiStoreMemory& mem, MemoryKey key, MemoryValue value) {
    const Tensor& kt = key.k.value();
    WorkingEntry e;
    e.usage.assign(static_cast<std::size_t>(kt.dim(1) * kt.dim(2)), 0);
    e.key = std::move(key);
    e.value = std::move(value);
    mem.working.push_back(std::move(e));
    if (static_cast<int>(mem.working.size()) > mem.config.working_capacity) consolidate(mem);
}

// ---------------------------------------------------------------------------
// Sensory store: gated recurrent update at stride 16
// ---------------------------------------------------------------------------

struct SensoryParams {
    Conv2d conv_z;  // 3x3, (Ch + Cx) -> Ch
    Conv2d conv_h;
    int hidden_channels = 0;

    SensoryParams() = default;
    SensoryParams(Rng& rng, int hidden_ch, int input_ch)
        : conv_z(rng, hidden_ch + input_ch, hidden_ch, 3, 1, 1),
          conv_h(rng, hidden_ch + input_ch, hidden_ch, 3, 1, 1),
          hidden_channels(hidden_ch) {}

    void visit(const std::string& prefix, const ParamVisitor& fn) {
        conv_z.visit(prefix + ".conv_z", fn);
        conv_h.visit(prefix + ".conv_h", fn);
    }
};

// h <- (1-z) . h + z . tanh(conv([h,x])), z = sigmoid(conv([h,x])),
// x = concat(fused stride-16 features, decoder hidden features).
inline void update_sensory(MultiStoreMemory& mem, const Var& fused_f16, const Var& decoded_hidden,
                           const SensoryParams& p) {
    if (!mem.sensory.defined()) throw ShapeError("sensory state not initialized");
    Var x = concat_channels({fused_f16, decoded_hidden});
    Var hx = concat_channels({mem.sensory, x});
    Var z = sigmoid(p.conv_z(hx));
    Var h_cand = tanh_op(p.conv_h(hx));
    Var one_minus_z = add_const(scale(z, -1.0), 1.0);
    mem.sensory = vadd(vmul(one_minus_z, mem.sensory), vmul(z, h_cand));
}

inline void reset_sensory(MultiStoreMemory& mem, int channels, int h16, int w16) {
    mem.sensory = Var::constant(Tensor::zeros({channels, h16, w16}));
}

}  // namespace rgbdvos
