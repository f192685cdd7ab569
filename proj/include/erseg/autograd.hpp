#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "erseg/tensor.hpp"

namespace erseg::ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

/// Reverse-mode tape. Nodes are appended in topological order; backward walks
/// the tape once from the loss node. One Graph instance spans one training
/// step and is discarded afterwards. Not thread-safe; one graph per thread.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, int)>;

    int leaf(Tensor value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    int constant(Tensor value) { return leaf(std::move(value), false); }

    int make_node(Tensor value, const std::vector<int>& parents, BackwardFn backward) {
        bool rg = false;
        for (int p : parents) rg = rg || nodes_[static_cast<size_t>(p)].requires_grad;
        nodes_.push_back(Node{std::move(value), Tensor{}, rg, rg ? std::move(backward) : nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    bool has_grad(int id) const { return !nodes_[static_cast<size_t>(id)].grad.v.empty(); }

    /// Gradient buffer, allocated to zeros on first touch.
    Tensor& grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.v.empty()) n.grad = Tensor(n.value.shape);
        return n.grad;
    }

    /// Gradient as a value; zeros if backward never reached this node.
    Tensor grad_or_zeros(int id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.v.empty()) return Tensor(n.value.shape);
        return n.grad;
    }

    void backward(int loss_id) {
        if (val(loss_id).numel() != 1) {
            throw std::logic_error("backward: loss must be a scalar node");
        }
        grad(loss_id).v[0] = 1.0;
        for (int id = loss_id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.requires_grad && n.backward && !n.grad.v.empty()) n.backward(*this, id);
        }
    }

    size_t size() const { return nodes_.size(); }

    // ---- elementwise ----------------------------------------------------

    int add(int a, int b) {
        require_same_shape(val(a), val(b), "add");
        Tensor out = val(a);
        out += val(b);
        return make_node(std::move(out), {a, b}, [a, b](Graph& g, int id) {
            const Tensor& go = g.grad(id);
            for (int p : {a, b}) {
                if (!g.requires_grad(p)) continue;
                g.grad(p) += go;
            }
        });
    }

    int sub(int a, int b) {
        require_same_shape(val(a), val(b), "sub");
        Tensor out = val(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] -= val(b)[i];
        return make_node(std::move(out), {a, b}, [a, b](Graph& g, int id) {
            const Tensor& go = g.grad(id);
            if (g.requires_grad(a)) g.grad(a) += go;
            if (g.requires_grad(b)) {
                Tensor& gb = g.grad(b);
                for (int64_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
            }
        });
    }

    int mul(int a, int b) {
        require_same_shape(val(a), val(b), "mul");
        Tensor out = val(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= val(b)[i];
        return make_node(std::move(out), {a, b}, [a, b](Graph& g, int id) {
            const Tensor& go = g.grad(id);
            if (g.requires_grad(a)) {
                Tensor& ga = g.grad(a);
                const Tensor& vb = g.val(b);
                for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * vb[i];
            }
            if (g.requires_grad(b)) {
                Tensor& gb = g.grad(b);
                const Tensor& va = g.val(a);
                for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * va[i];
            }
        });
    }

    int div(int a, int b) {
        require_same_shape(val(a), val(b), "div");
        Tensor out = val(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] /= val(b)[i];
        return make_node(std::move(out), {a, b}, [a, b](Graph& g, int id) {
            const Tensor& go = g.grad(id);
            const Tensor& va = g.val(a);
            const Tensor& vb = g.val(b);
            if (g.requires_grad(a)) {
                Tensor& ga = g.grad(a);
                for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] / vb[i];
            }
            if (g.requires_grad(b)) {
                Tensor& gb = g.grad(b);
                for (int64_t i = 0; i < go.numel(); ++i) {
                    gb[i] -= go[i] * va[i] / (vb[i] * vb[i]);
                }
            }
        });
    }

    int scale(int a, double s) {
        Tensor out = val(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
        return make_node(std::move(out), {a}, [a, s](Graph& g, int id) {
            const Tensor& go = g.grad(id);
            if (!g.requires_grad(a)) return;
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * s;
        });
    }

    int add_scalar(int a, double s) {
        Tensor out = val(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
        return make_node(std::move(out), {a}, [a](Graph& g, int id) {
            if (g.requires_grad(a)) g.grad(a) += g.grad(id);
        });
    }

    int mul_const(int a, const Tensor& t) {
        require_same_shape(val(a), t, "mul_const");
        Tensor out = val(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= t[i];
        auto tc = std::make_shared<Tensor>(t);
        return make_node(std::move(out), {a}, [a, tc](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const Tensor& go = g.grad(id);
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * (*tc)[i];
        });
    }

    int add_const(int a, const Tensor& t) {
        require_same_shape(val(a), t, "add_const");
        Tensor out = val(a);
        out += t;
        return make_node(std::move(out), {a}, [a](Graph& g, int id) {
            if (g.requires_grad(a)) g.grad(a) += g.grad(id);
        });
    }

    /// {C,H,W} * {H,W}, mask broadcast across channels. Mask is a constant.
    int mul_mask_hw(int a, const Tensor& mask) {
        const Tensor& x = val(a);
        if (x.rank() != 3 || mask.rank() != 2 || x.dim(1) != mask.dim(0) ||
            x.dim(2) != mask.dim(1)) {
            throw std::invalid_argument("mul_mask_hw: shape mismatch");
        }
        const int c = x.dim(0);
        const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
        Tensor out = x;
        for (int ch = 0; ch < c; ++ch) {
            for (int64_t i = 0; i < hw; ++i) out[ch * hw + i] *= mask[i];
        }
        auto mc = std::make_shared<Tensor>(mask);
        return make_node(std::move(out), {a}, [a, c, hw, mc](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const Tensor& go = g.grad(id);
            Tensor& ga = g.grad(a);
            for (int ch = 0; ch < c; ++ch) {
                for (int64_t i = 0; i < hw; ++i) ga[ch * hw + i] += go[ch * hw + i] * (*mc)[i];
            }
        });
    }

    int leaky_relu(int a, double slope) {
        Tensor out = val(a);
        for (int64_t i = 0; i < out.numel(); ++i) {
            if (out[i] < 0.0) out[i] *= slope;
        }
        return make_node(std::move(out), {a}, [a, slope](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const Tensor& go = g.grad(id);
            const Tensor& x = g.val(a);
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < go.numel(); ++i) {
                ga[i] += go[i] * (x[i] > 0.0 ? 1.0 : slope);
            }
        });
    }

    int sigmoid(int a) {
        Tensor out = val(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
        return make_node(std::move(out), {a}, [a](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const Tensor& go = g.grad(id);
            const Tensor& y = g.val(id);
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
        });
    }

    /// Softmax over channel dim of {K,H,W}.
    int softmax_ch(int a) {
        const Tensor& x = val(a);
        const int k = x.dim(0);
        const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
        Tensor out(x.shape);
        for (int64_t i = 0; i < hw; ++i) {
            double m = x[i];
            for (int c = 1; c < k; ++c) m = std::max(m, x[c * hw + i]);
            double z = 0.0;
            for (int c = 0; c < k; ++c) {
                const double e = std::exp(x[c * hw + i] - m);
                out[c * hw + i] = e;
                z += e;
            }
            for (int c = 0; c < k; ++c) out[c * hw + i] /= z;
        }
        return make_node(std::move(out), {a}, [a, k, hw](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const Tensor& go = g.grad(id);
            const Tensor& p = g.val(id);
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < hw; ++i) {
                double dot = 0.0;
                for (int c = 0; c < k; ++c) dot += go[c * hw + i] * p[c * hw + i];
                for (int c = 0; c < k; ++c) {
                    ga[c * hw + i] += p[c * hw + i] * (go[c * hw + i] - dot);
                }
            }
        });
    }

    // ---- structural -----------------------------------------------------

    int concat_ch(int a, int b) {
        const Tensor& xa = val(a);
        const Tensor& xb = val(b);
        if (xa.rank() != 3 || xb.rank() != 3 || xa.dim(1) != xb.dim(1) ||
            xa.dim(2) != xb.dim(2)) {
            throw std::invalid_argument("concat_ch: spatial shape mismatch");
        }
        Tensor out({xa.dim(0) + xb.dim(0), xa.dim(1), xa.dim(2)});
        std::copy(xa.v.begin(), xa.v.end(), out.v.begin());
        std::copy(xb.v.begin(), xb.v.end(), out.v.begin() + xa.numel());
        const int64_t na = xa.numel();
        return make_node(std::move(out), {a, b}, [a, b, na](Graph& g, int id) {
            const Tensor& go = g.grad(id);
            if (g.requires_grad(a)) {
                Tensor& ga = g.grad(a);
                for (int64_t i = 0; i < na; ++i) ga[i] += go[i];
            }
            if (g.requires_grad(b)) {
                Tensor& gb = g.grad(b);
                for (int64_t i = 0; i < go.numel() - na; ++i) gb[i] += go[na + i];
            }
        });
    }

    /// 2x2 max pooling, stride 2. H and W must be even.
    int maxpool2(int a) {
        const Tensor& x = val(a);
        const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
        if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("maxpool2: odd spatial size");
        Tensor out({c, h / 2, w / 2});
        auto argmax = std::make_shared<std::vector<int64_t>>(out.v.size());
        int64_t o = 0;
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; y += 2) {
                for (int xx = 0; xx < w; xx += 2) {
                    int64_t base = (static_cast<int64_t>(ch) * h + y) * w + xx;
                    int64_t best = base;
                    double bv = x[base];
                    const int64_t cand[3] = {base + 1, base + w, base + w + 1};
                    for (int64_t idx : cand) {
                        if (x[idx] > bv) {
                            bv = x[idx];
                            best = idx;
                        }
                    }
                    out[o] = bv;
                    (*argmax)[static_cast<size_t>(o)] = best;
                    ++o;
                }
            }
        }
        return make_node(std::move(out), {a}, [a, argmax](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const Tensor& go = g.grad(id);
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < go.numel(); ++i) {
                ga[(*argmax)[static_cast<size_t>(i)]] += go[i];
            }
        });
    }

    /// 2x nearest-neighbor upsampling.
    int upsample2(int a) {
        const Tensor& x = val(a);
        const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
        Tensor out({c, 2 * h, 2 * w});
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < 2 * h; ++y) {
                for (int xx = 0; xx < 2 * w; ++xx) {
                    out.at3(ch, y, xx) = x.at3(ch, y / 2, xx / 2);
                }
            }
        }
        return make_node(std::move(out), {a}, [a, c, h, w](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const Tensor& go = g.grad(id);
            Tensor& ga = g.grad(a);
            for (int ch = 0; ch < c; ++ch) {
                for (int y = 0; y < 2 * h; ++y) {
                    for (int xx = 0; xx < 2 * w; ++xx) {
                        ga.at3(ch, y / 2, xx / 2) += go.at3(ch, y, xx);
                    }
                }
            }
        });
    }

    // ---- convolution ----------------------------------------------------

    /// 2D convolution, stride 1. x {Cin,H,W}, w {Cout,Cin,Kh,Kw}, b {Cout}.
    /// im2col + GEMM; the column buffer is rebuilt in backward instead of
    /// cached, which keeps graph memory proportional to activations.
    int conv2d(int x, int w, int b, int pad) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        const Tensor& bv = val(b);
        const int cin = xv.dim(0), h = xv.dim(1), ww = xv.dim(2);
        const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        if (wv.dim(1) != cin) throw std::invalid_argument("conv2d: channel mismatch");
        if (bv.numel() != cout) throw std::invalid_argument("conv2d: bias size mismatch");
        const int ho = h + 2 * pad - kh + 1;
        const int wo = ww + 2 * pad - kw + 1;
        if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: kernel larger than input");

        RowMat col;
        im2col(xv, kh, kw, pad, ho, wo, col);
        Tensor out({cout, ho, wo});
        {
            ConstMatMap wm(wv.v.data(), cout, static_cast<int64_t>(cin) * kh * kw);
            MatMap om(out.v.data(), cout, static_cast<int64_t>(ho) * wo);
            om.noalias() = wm * col;
            for (int o = 0; o < cout; ++o) om.row(o).array() += bv[o];
        }
        return make_node(std::move(out), {x, w, b},
                         [x, w, b, pad, cin, h, ww, cout, kh, kw, ho, wo](Graph& g, int id) {
                             g.conv2d_backward(id, x, w, b, pad, cin, h, ww, cout, kh, kw, ho, wo);
                         });
    }

    /// Per-channel instance normalization with affine parameters gamma, beta
    /// (each {C}). Statistics are over the spatial extent of every channel.
    int instnorm(int x, int gamma, int beta, double eps = 1e-5) {
        const Tensor& xv = val(x);
        const int c = xv.dim(0);
        const int64_t hw = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
        const Tensor& gv = val(gamma);
        const Tensor& bv = val(beta);
        if (gv.numel() != c || bv.numel() != c) {
            throw std::invalid_argument("instnorm: parameter size mismatch");
        }
        auto mean = std::make_shared<std::vector<double>>(c);
        auto istd = std::make_shared<std::vector<double>>(c);
        Tensor out(xv.shape);
        for (int ch = 0; ch < c; ++ch) {
            const double* xp = xv.v.data() + ch * hw;
            double m = 0.0;
            for (int64_t i = 0; i < hw; ++i) m += xp[i];
            m /= static_cast<double>(hw);
            double var = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                const double d = xp[i] - m;
                var += d * d;
            }
            var /= static_cast<double>(hw);
            const double is = 1.0 / std::sqrt(var + eps);
            (*mean)[static_cast<size_t>(ch)] = m;
            (*istd)[static_cast<size_t>(ch)] = is;
            double* op = out.v.data() + ch * hw;
            for (int64_t i = 0; i < hw; ++i) op[i] = gv[ch] * (xp[i] - m) * is + bv[ch];
        }
        return make_node(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, c, hw, mean, istd](Graph& g, int id) {
            const Tensor& go = g.grad(id);
            const Tensor& xv2 = g.val(x);
            const Tensor& gv2 = g.val(gamma);
            const double n = static_cast<double>(hw);
            for (int ch = 0; ch < c; ++ch) {
                const double m = (*mean)[static_cast<size_t>(ch)];
                const double is = (*istd)[static_cast<size_t>(ch)];
                const double* xp = xv2.v.data() + ch * hw;
                const double* gop = go.v.data() + ch * hw;
                double sum_go = 0.0, sum_go_xhat = 0.0;
                for (int64_t i = 0; i < hw; ++i) {
                    sum_go += gop[i];
                    sum_go_xhat += gop[i] * (xp[i] - m) * is;
                }
                if (g.requires_grad(gamma)) g.grad(gamma)[ch] += sum_go_xhat;
                if (g.requires_grad(beta)) g.grad(beta)[ch] += sum_go;
                if (g.requires_grad(x)) {
                    Tensor& gx = g.grad(x);
                    double* gxp = gx.v.data() + ch * hw;
                    const double gam = gv2[ch];
                    for (int64_t i = 0; i < hw; ++i) {
                        const double xhat = (xp[i] - m) * is;
                        gxp[i] += gam * is / n * (n * gop[i] - sum_go - xhat * sum_go_xhat);
                    }
                }
            }
        });
    }

    /// Depthwise valid-mode correlation of {C,H,W} with a constant 2D kernel.
    int dw_corr_valid(int a, const Tensor& kernel) {
        const Tensor& x = val(a);
        const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
        const int kh = kernel.dim(0), kw = kernel.dim(1);
        if (h < kh || w < kw) {
            throw std::invalid_argument("dw_corr_valid: image smaller than kernel");
        }
        const int ho = h - kh + 1, wo = w - kw + 1;
        Tensor out({c, ho, wo});
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < ho; ++y) {
                for (int xx = 0; xx < wo; ++xx) {
                    double s = 0.0;
                    for (int u = 0; u < kh; ++u) {
                        for (int vv = 0; vv < kw; ++vv) {
                            s += x.at3(ch, y + u, xx + vv) * kernel.at2(u, vv);
                        }
                    }
                    out.at3(ch, y, xx) = s;
                }
            }
        }
        auto kc = std::make_shared<Tensor>(kernel);
        return make_node(std::move(out), {a}, [a, c, ho, wo, kh, kw, kc](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const Tensor& go = g.grad(id);
            Tensor& ga = g.grad(a);
            for (int ch = 0; ch < c; ++ch) {
                for (int y = 0; y < ho; ++y) {
                    for (int xx = 0; xx < wo; ++xx) {
                        const double gv = go.at3(ch, y, xx);
                        for (int u = 0; u < kh; ++u) {
                            for (int vv = 0; vv < kw; ++vv) {
                                ga.at3(ch, y + u, xx + vv) += gv * kc->at2(u, vv);
                            }
                        }
                    }
                }
            }
        });
    }

    // ---- reductions ------------------------------------------------------

    int sum_all(int a) {
        double s = 0.0;
        for (double x : val(a).v) s += x;
        return make_node(Tensor::scalar(s), {a}, [a](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const double go = g.grad(id).v[0];
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += go;
        });
    }

    int mean_all(int a) {
        const double n = static_cast<double>(val(a).numel());
        double s = 0.0;
        for (double x : val(a).v) s += x;
        return make_node(Tensor::scalar(s / n), {a}, [a, n](Graph& g, int id) {
            if (!g.requires_grad(a)) return;
            const double go = g.grad(id).v[0] / n;
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += go;
        });
    }

    /// Cut the value out of the graph: same numbers, no gradient path.
    int detach(int a) { return constant(val(a)); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    static void im2col(const Tensor& x, int kh, int kw, int pad, int ho, int wo, RowMat& col) {
        const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
        col.resize(static_cast<int64_t>(cin) * kh * kw, static_cast<int64_t>(ho) * wo);
        for (int ci = 0; ci < cin; ++ci) {
            for (int u = 0; u < kh; ++u) {
                for (int vv = 0; vv < kw; ++vv) {
                    const int64_t r = (static_cast<int64_t>(ci) * kh + u) * kw + vv;
                    for (int y = 0; y < ho; ++y) {
                        const int sy = y + u - pad;
                        for (int xx = 0; xx < wo; ++xx) {
                            const int sx = xx + vv - pad;
                            col(r, static_cast<int64_t>(y) * wo + xx) =
                                (sy >= 0 && sy < h && sx >= 0 && sx < w) ? x.at3(ci, sy, sx) : 0.0;
                        }
                    }
                }
            }
        }
    }

    void conv2d_backward(int id, int x, int w, int b, int pad, int cin, int h, int ww, int cout,
                         int kh, int kw, int ho, int wo) {
        const Tensor& go = grad(id);
        ConstMatMap gom(go.v.data(), cout, static_cast<int64_t>(ho) * wo);
        if (requires_grad(b)) {
            Tensor& gb = grad(b);
            for (int o = 0; o < cout; ++o) gb[o] += gom.row(o).sum();
        }
        if (requires_grad(w)) {
            RowMat col;
            im2col(val(x), kh, kw, pad, ho, wo, col);
            Tensor& gw = grad(w);
            MatMap gwm(gw.v.data(), cout, static_cast<int64_t>(cin) * kh * kw);
            gwm.noalias() += gom * col.transpose();
        }
        if (requires_grad(x)) {
            ConstMatMap wm(val(w).v.data(), cout, static_cast<int64_t>(cin) * kh * kw);
            RowMat dcol = wm.transpose() * gom;
            Tensor& gx = grad(x);
            for (int ci = 0; ci < cin; ++ci) {
                for (int u = 0; u < kh; ++u) {
                    for (int vv = 0; vv < kw; ++vv) {
                        const int64_t r = (static_cast<int64_t>(ci) * kh + u) * kw + vv;
                        for (int y = 0; y < ho; ++y) {
                            const int sy = y + u - pad;
                            if (sy < 0 || sy >= h) continue;
                            for (int xx = 0; xx < wo; ++xx) {
                                const int sx = xx + vv - pad;
                                if (sx < 0 || sx >= ww) continue;
                                gx.at3(ci, sy, sx) += dcol(r, static_cast<int64_t>(y) * wo + xx);
                            }
                        }
                    }
                }
            }
        }
    }

    std::vector<Node> nodes_;
};

/// Valid-mode depthwise correlation as a plain function (no graph).
inline Tensor dw_corr_valid_plain(const Tensor& x, const Tensor& kernel) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int kh = kernel.dim(0), kw = kernel.dim(1);
    const int ho = h - kh + 1, wo = w - kw + 1;
    Tensor out({c, ho, wo});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < ho; ++y) {
            for (int xx = 0; xx < wo; ++xx) {
                double s = 0.0;
                for (int u = 0; u < kh; ++u) {
                    for (int vv = 0; vv < kw; ++vv) {
                        s += x.at3(ch, y + u, xx + vv) * kernel.at2(u, vv);
                    }
                }
                out.at3(ch, y, xx) = s;
            }
        }
    }
    return out;
}

}  // namespace erseg::ag
