#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "erseg/autograd.hpp"
#include "erseg/rng.hpp"
#include "erseg/tensor.hpp"
#include "erseg/types.hpp"

namespace erseg {

/// Encoder/decoder layout: `levels` resolution stages with channel widths
/// base_width * 2^l, double 3x3 conv blocks (instance norm + leaky ReLU),
/// 2x2 max-pool downsampling and nearest-upsample + 3x3 conv upsampling.
/// A shared trunk feeds two 1x1 heads: segmentation (k_tot channels) and
/// reconstruction (in_channels, sigmoid-bounded).
struct UNetArch {
    int levels = 4;
    int base_width = 16;
    int in_channels = 1;
    int k_tot = 2;
    double leaky_slope = 0.01;

    int width(int level) const { return base_width << level; }

    void validate() const {
        if (levels < 2) throw std::invalid_argument("UNetArch: levels must be >= 2");
        if (base_width < 1) throw std::invalid_argument("UNetArch: base_width must be >= 1");
        if (in_channels < 1) throw std::invalid_argument("UNetArch: in_channels must be >= 1");
        if (k_tot < 2) throw std::invalid_argument("UNetArch: k_tot must be >= 2");
    }

    bool operator==(const UNetArch&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor t;
};

/// Ordered, named parameter collection. Order is the construction order and
/// is identical for student/teacher, so elementwise walks line up.
struct NetworkParams {
    UNetArch arch;
    std::vector<NamedTensor> tensors;

    const Tensor& find(const std::string& name) const {
        for (const auto& nt : tensors) {
            if (nt.name == name) return nt.t;
        }
        throw std::invalid_argument("NetworkParams: no tensor named " + name);
    }

    Tensor& find(const std::string& name) {
        return const_cast<Tensor&>(std::as_const(*this).find(name));
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& nt : tensors) n += nt.t.numel();
        return n;
    }
};

namespace detail {

inline Tensor he_conv(int cout, int cin, int kh, int kw, Rng& rng) {
    Tensor w({cout, cin, kh, kw});
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * kh * kw));
    for (double& v : w.v) v = rng.normal() * std;
    return w;
}

/// conv + instance-norm parameters for one 3x3 block.
inline void push_block(std::vector<NamedTensor>& out, const std::string& prefix, int cin, int cout,
                       Rng& rng) {
    out.push_back({prefix + ".w", he_conv(cout, cin, 3, 3, rng)});
    out.push_back({prefix + ".b", Tensor({cout})});
    out.push_back({prefix + ".gamma", Tensor({cout}, 1.0)});
    out.push_back({prefix + ".beta", Tensor({cout})});
}

}  // namespace detail

inline NetworkParams build_network(const UNetArch& arch, Rng& rng) {
    arch.validate();
    NetworkParams p;
    p.arch = arch;
    auto& t = p.tensors;
    for (int l = 0; l < arch.levels; ++l) {
        const int cin = (l == 0) ? arch.in_channels : arch.width(l - 1);
        const int cout = arch.width(l);
        detail::push_block(t, "enc" + std::to_string(l) + ".conv1", cin, cout, rng);
        detail::push_block(t, "enc" + std::to_string(l) + ".conv2", cout, cout, rng);
    }
    for (int l = arch.levels - 2; l >= 0; --l) {
        const int chi = arch.width(l + 1);
        const int clo = arch.width(l);
        const std::string d = "dec" + std::to_string(l);
        t.push_back({d + ".up.w", detail::he_conv(clo, chi, 3, 3, rng)});
        t.push_back({d + ".up.b", Tensor({clo})});
        detail::push_block(t, d + ".conv1", 2 * clo, clo, rng);
        detail::push_block(t, d + ".conv2", clo, clo, rng);
    }
    t.push_back({"seg_head.w", detail::he_conv(arch.k_tot, arch.base_width, 1, 1, rng)});
    t.push_back({"seg_head.b", Tensor({arch.k_tot})});
    t.push_back({"recon_head.w", detail::he_conv(arch.in_channels, arch.base_width, 1, 1, rng)});
    t.push_back({"recon_head.b", Tensor({arch.in_channels})});
    return p;
}

/// Network parameters bound into a graph as leaves, one node per tensor, in
/// the same order as NetworkParams::tensors.
struct BoundNet {
    UNetArch arch;
    std::vector<std::pair<std::string, int>> ids;
    std::unordered_map<std::string, int> by_name;

    int id(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::invalid_argument("BoundNet: no tensor named " + name);
        return it->second;
    }
};

inline BoundNet bind(ag::Graph& g, const NetworkParams& p, bool requires_grad) {
    BoundNet b;
    b.arch = p.arch;
    b.ids.reserve(p.tensors.size());
    for (const auto& nt : p.tensors) {
        const int id = g.leaf(nt.t, requires_grad);
        b.ids.emplace_back(nt.name, id);
        b.by_name.emplace(nt.name, id);
    }
    return b;
}

namespace detail {

inline int double_conv(ag::Graph& g, const BoundNet& net, const std::string& prefix, int x) {
    const double slope = net.arch.leaky_slope;
    for (const char* stage : {".conv1", ".conv2"}) {
        const std::string s = prefix + stage;
        x = g.conv2d(x, net.id(s + ".w"), net.id(s + ".b"), 1);
        x = g.instnorm(x, net.id(s + ".gamma"), net.id(s + ".beta"));
        x = g.leaky_relu(x, slope);
    }
    return x;
}

}  // namespace detail

/// Encoder + decoder; returns the full-resolution base_width-channel feature
/// node both heads read from.
inline int forward_trunk(ag::Graph& g, const BoundNet& net, int input) {
    const Tensor& x = g.val(input);
    if (x.rank() != 3 || x.dim(0) != net.arch.in_channels) {
        throw std::invalid_argument("forward_trunk: expected {" +
                                    std::to_string(net.arch.in_channels) + ",H,W} input");
    }
    const int down_factor = 1 << (net.arch.levels - 1);
    if (x.dim(1) % down_factor != 0 || x.dim(2) % down_factor != 0) {
        throw std::invalid_argument("forward_trunk: spatial dims must be divisible by " +
                                    std::to_string(down_factor));
    }
    std::vector<int> skips;
    int cur = input;
    for (int l = 0; l < net.arch.levels; ++l) {
        cur = detail::double_conv(g, net, "enc" + std::to_string(l), cur);
        if (l < net.arch.levels - 1) {
            skips.push_back(cur);
            cur = g.maxpool2(cur);
        }
    }
    for (int l = net.arch.levels - 2; l >= 0; --l) {
        const std::string d = "dec" + std::to_string(l);
        cur = g.upsample2(cur);
        cur = g.conv2d(cur, net.id(d + ".up.w"), net.id(d + ".up.b"), 1);
        cur = g.concat_ch(skips[static_cast<size_t>(l)], cur);
        cur = detail::double_conv(g, net, d, cur);
    }
    return cur;
}

inline int forward_seg_logits(ag::Graph& g, const BoundNet& net, int trunk) {
    return g.conv2d(trunk, net.id("seg_head.w"), net.id("seg_head.b"), 0);
}

/// Softmax over channels: per-pixel class probabilities.
inline int forward_seg_probs(ag::Graph& g, const BoundNet& net, int trunk) {
    return g.softmax_ch(forward_seg_logits(g, net, trunk));
}

/// Sigmoid-bounded reconstruction in [0,1], same channel count as the input.
inline int forward_recon_node(ag::Graph& g, const BoundNet& net, int trunk) {
    return g.sigmoid(g.conv2d(trunk, net.id("recon_head.w"), net.id("recon_head.b"), 0));
}

/// Inference-only segmentation forward.
inline ProbMap infer_seg(const NetworkParams& p, const Image& img) {
    ag::Graph g;
    const BoundNet net = bind(g, p, false);
    const int trunk = forward_trunk(g, net, g.constant(img.to_tensor()));
    return ProbMap::from_tensor(g.val(forward_seg_probs(g, net, trunk)));
}

/// Inference-only reconstruction forward.
inline Image infer_recon(const NetworkParams& p, const Image& sketch_img) {
    ag::Graph g;
    const BoundNet net = bind(g, p, false);
    const int trunk = forward_trunk(g, net, g.constant(sketch_img.to_tensor()));
    return Image::from_tensor(g.val(forward_recon_node(g, net, trunk)));
}

/// Per-pixel channel argmax; ties resolve to the lowest class index.
inline LabelMask argmax_labels(const ProbMap& p) {
    LabelMask out(p.h, p.w);
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
            int best = 0;
            double bv = p.at(0, y, x);
            for (int c = 1; c < p.k; ++c) {
                if (p.at(c, y, x) > bv) {
                    bv = p.at(c, y, x);
                    best = c;
                }
            }
            out.at(y, x) = best;
        }
    }
    return out;
}

/// Teacher <- lambda * teacher + (1 - lambda) * student, elementwise over
/// every named tensor.
inline void ema_update(NetworkParams& teacher, const NetworkParams& student, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("ema_update: lambda outside [0,1]");
    if (teacher.tensors.size() != student.tensors.size()) {
        throw std::invalid_argument("ema_update: parameter count mismatch");
    }
    for (size_t i = 0; i < teacher.tensors.size(); ++i) {
        NamedTensor& t = teacher.tensors[i];
        const NamedTensor& s = student.tensors[i];
        if (t.name != s.name) throw std::invalid_argument("ema_update: name mismatch at " + t.name);
        require_same_shape(t.t, s.t, "ema_update " + t.name);
        for (int64_t j = 0; j < t.t.numel(); ++j) {
            t.t[j] = lambda * t.t[j] + (1.0 - lambda) * s.t[j];
        }
    }
}

/// SGD with momentum and weight decay (velocity form):
///   v <- momentum*v + (g + wd*theta);  theta <- theta - lr*v.
struct SgdState {
    std::vector<NamedTensor> velocity;

    static SgdState init(const NetworkParams& p) {
        SgdState s;
        s.velocity.reserve(p.tensors.size());
        for (const auto& nt : p.tensors) s.velocity.push_back({nt.name, Tensor(nt.t.shape)});
        return s;
    }
};

/// One descent step. `grads` must align index-for-index with params.tensors
/// (the order BoundNet::ids preserves).
inline void sgd_step(NetworkParams& params, SgdState& st, const std::vector<Tensor>& grads,
                     double lr, double momentum, double weight_decay) {
    if (grads.size() != params.tensors.size() || st.velocity.size() != params.tensors.size()) {
        throw std::invalid_argument("sgd_step: state/gradient count mismatch");
    }
    for (size_t i = 0; i < params.tensors.size(); ++i) {
        Tensor& th = params.tensors[i].t;
        Tensor& v = st.velocity[i].t;
        const Tensor& gr = grads[i];
        require_same_shape(th, gr, "sgd_step " + params.tensors[i].name);
        for (int64_t j = 0; j < th.numel(); ++j) {
            v[j] = momentum * v[j] + (gr[j] + weight_decay * th[j]);
            th[j] -= lr * v[j];
        }
    }
}

}  // namespace erseg
