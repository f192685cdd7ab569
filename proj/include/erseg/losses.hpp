#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "erseg/autograd.hpp"
#include "erseg/config.hpp"
#include "erseg/types.hpp"

namespace erseg {

/// Probability floor applied before logarithms/divisions in the CE loss.
inline constexpr double kProbFloor = 1e-300;

struct SsimParams {
    int window_size = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const {
        if (window_size < 3 || window_size % 2 == 0) {
            throw std::invalid_argument("SsimParams: window_size must be odd and >= 3");
        }
        if (sigma <= 0 || k1 <= 0 || k2 <= 0 || dynamic_range <= 0) {
            throw std::invalid_argument("SsimParams: sigma, k1, k2, dynamic_range must be > 0");
        }
    }
};

/// Normalized 2-D Gaussian window (sums to 1).
inline Tensor gaussian_window(int size, double sigma) {
    Tensor w({size, size});
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dy = y - c, dx = x - c;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w.at2(y, x) = v;
            total += v;
        }
    }
    for (double& v : w.v) v /= total;
    return w;
}

/// 1 - mean(SSIM map) between a differentiable proxy node ({C,H,W}) and a
/// constant target tensor of the same shape. Local statistics use a Gaussian
/// window; the map is per-channel, averaged over channels and positions.
inline int ssim_loss_node(ag::Graph& g, int proxy, const Tensor& target, const SsimParams& p) {
    p.validate();
    const Tensor& x = g.val(proxy);
    require_same_shape(x, target, "ssim_loss");
    if (x.rank() != 3) throw std::invalid_argument("ssim_loss: expected {C,H,W}");
    if (x.dim(1) < p.window_size || x.dim(2) < p.window_size) {
        throw std::invalid_argument("ssim_loss: image smaller than window");
    }
    const Tensor win = gaussian_window(p.window_size, p.sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

    // Constant-side statistics computed once outside the graph.
    const Tensor mu_y = ag::dw_corr_valid_plain(target, win);
    Tensor y_sq = target;
    for (double& v : y_sq.v) v *= v;
    const Tensor wy2 = ag::dw_corr_valid_plain(y_sq, win);
    Tensor mu_y_sq = mu_y;
    for (double& v : mu_y_sq.v) v *= v;
    Tensor var_y_c2 = wy2;  // sigma_y^2 + C2
    for (size_t i = 0; i < var_y_c2.v.size(); ++i) var_y_c2.v[i] += c2 - mu_y_sq.v[i];
    Tensor mu_y_sq_c1 = mu_y_sq;  // mu_y^2 + C1
    for (double& v : mu_y_sq_c1.v) v += c1;

    const int mu_x = g.dw_corr_valid(proxy, win);
    const int wx2 = g.dw_corr_valid(g.mul(proxy, proxy), win);
    const int wxy = g.dw_corr_valid(g.mul_const(proxy, target), win);
    const int mu_x_sq = g.mul(mu_x, mu_x);

    // 2*mu_x*mu_y + C1
    const int n1 = g.add_scalar(g.scale(g.mul_const(mu_x, mu_y), 2.0), c1);
    // 2*(W(xy) - mu_x*mu_y) + C2
    const int n2 = g.add_scalar(g.scale(g.sub(wxy, g.mul_const(mu_x, mu_y)), 2.0), c2);
    // mu_x^2 + mu_y^2 + C1
    const int d1 = g.add_const(mu_x_sq, mu_y_sq_c1);
    // (W(x^2) - mu_x^2) + sigma_y^2 + C2
    const int d2 = g.add_const(g.sub(wx2, mu_x_sq), var_y_c2);

    const int ssim_map = g.div(g.mul(n1, n2), g.mul(d1, d2));
    return g.add_scalar(g.scale(g.mean_all(ssim_map), -1.0), 1.0);
}

/// Mean SSIM index of two images (no gradients); convenience for evaluation.
inline double ssim_index(const Image& a, const Image& b, const SsimParams& p = {}) {
    ag::Graph g;
    const int an = g.constant(a.to_tensor());
    const int loss = ssim_loss_node(g, an, b.to_tensor(), p);
    return 1.0 - g.val(loss).value();
}

/// Multi-class cross-entropy: -mean over pixels of log p[target]. Expects a
/// {K,H,W} probability node (softmax output); probabilities are floored at a
/// tiny constant before the log.
inline int cross_entropy_node(ag::Graph& g, int probs, const LabelMask& target) {
    const Tensor& pv = g.val(probs);
    if (pv.rank() != 3) throw std::invalid_argument("cross_entropy: expected {K,H,W}");
    const int k = pv.dim(0), h = pv.dim(1), w = pv.dim(2);
    if (target.h != h || target.w != w) {
        throw std::invalid_argument("cross_entropy: target shape mismatch");
    }
    target.validate(k - 1);
    const double inv_n = 1.0 / (static_cast<double>(h) * w);
    double acc = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int t = target.at(y, x);
            acc -= std::log(std::max(pv.at3(t, y, x), kProbFloor));
        }
    }
    Tensor out = Tensor::scalar(acc * inv_n);
    auto tgt = std::make_shared<LabelMask>(target);
    return g.make_node(std::move(out), {probs}, [probs, tgt, h, w, inv_n](ag::Graph& gr, int id) {
        if (!gr.requires_grad(probs)) return;
        const double s = gr.grad(id).value() * inv_n;
        Tensor& gp = gr.grad(probs);
        const Tensor& pv2 = gr.val(probs);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int t = tgt->at(y, x);
                gp.at3(t, y, x) -= s / std::max(pv2.at3(t, y, x), kProbFloor);
            }
        }
    });
}

/// Soft Dice loss, macro-averaged over ALL channels (background included):
/// 1 - (2*sum(p*t) + eps) / (sum(p^2) + sum(t^2) + eps) per class.
inline int dice_loss_node(ag::Graph& g, int probs, const LabelMask& target, double eps = 1e-5) {
    const Tensor& pv = g.val(probs);
    if (pv.rank() != 3) throw std::invalid_argument("dice_loss: expected {K,H,W}");
    const int k = pv.dim(0), h = pv.dim(1), w = pv.dim(2);
    if (target.h != h || target.w != w) {
        throw std::invalid_argument("dice_loss: target shape mismatch");
    }
    target.validate(k - 1);
    auto inter = std::make_shared<std::vector<double>>(k, 0.0);
    auto p_sq = std::make_shared<std::vector<double>>(k, 0.0);
    auto t_sq = std::make_shared<std::vector<double>>(k, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int t = target.at(y, x);
            (*t_sq)[t] += 1.0;
            for (int c = 0; c < k; ++c) {
                const double p = pv.at3(c, y, x);
                (*p_sq)[c] += p * p;
                if (c == t) (*inter)[c] += p;
            }
        }
    }
    double acc = 0.0;
    for (int c = 0; c < k; ++c) {
        acc += 1.0 - (2.0 * (*inter)[c] + eps) / ((*p_sq)[c] + (*t_sq)[c] + eps);
    }
    Tensor out = Tensor::scalar(acc / k);
    auto tgt = std::make_shared<LabelMask>(target);
    return g.make_node(std::move(out), {probs},
                       [probs, tgt, inter, p_sq, t_sq, k, h, w, eps](ag::Graph& gr, int id) {
        if (!gr.requires_grad(probs)) return;
        const double s = gr.grad(id).value() / k;
        Tensor& gp = gr.grad(probs);
        const Tensor& pv2 = gr.val(probs);
        for (int c = 0; c < k; ++c) {
            const double num = 2.0 * (*inter)[c] + eps;
            const double den = (*p_sq)[c] + (*t_sq)[c] + eps;
            const double den2 = den * den;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double t = (tgt->at(y, x) == c) ? 1.0 : 0.0;
                    // d(1 - num/den)/dp = -(2t*den - num*2p) / den^2
                    gp.at3(c, y, x) -= s * (2.0 * t * den - num * 2.0 * pv2.at3(c, y, x)) / den2;
                }
            }
        }
    });
}

/// CE + Dice, the segmentation objective used for both mixed images.
inline int seg_loss_node(ag::Graph& g, int probs, const LabelMask& target, double dice_eps = 1e-5) {
    return g.add(cross_entropy_node(g, probs, target), dice_loss_node(g, probs, target, dice_eps));
}

/// Mean squared difference; the teacher side is detached inside, so gradient
/// flows only into the student argument.
inline int guidance_loss_node(ag::Graph& g, int student_lc, int teacher_mc) {
    require_same_shape(g.val(student_lc), g.val(teacher_mc), "guidance_loss");
    const int d = g.sub(student_lc, g.detach(teacher_mc));
    return g.mean_all(g.mul(d, d));
}

/// (l_a + l_b)/2 + alpha*l_rec + beta*l_g, assembled in the same association
/// order as assemble_total so logged components recompose bit-exactly.
inline int total_loss_node(ag::Graph& g, int l_a, int l_b, int l_rec, int l_g,
                           const LossWeights& w) {
    const int avg = g.scale(g.add(l_a, l_b), 0.5);
    return g.add(g.add(avg, g.scale(l_rec, w.alpha)), g.scale(l_g, w.beta));
}

}  // namespace erseg
