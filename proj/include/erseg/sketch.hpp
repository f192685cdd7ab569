#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "erseg/config.hpp"
#include "erseg/types.hpp"

namespace erseg {

/// Edge extraction parameters. Thresholds apply to the central-difference
/// gradient magnitude of the Gaussian-smoothed [0,1] luminance.
struct SketchParams {
    double canny_low = 0.1;
    double canny_high = 0.2;
    double gaussian_sigma = 1.0;
    int dilation_radius = 1;

    void validate() const {
        if (!(canny_low >= 0.0 && canny_low < canny_high)) {
            throw std::invalid_argument("SketchParams: requires 0 <= canny_low < canny_high");
        }
        if (gaussian_sigma < 0.0) throw std::invalid_argument("SketchParams: gaussian_sigma < 0");
        if (dilation_radius < 1) throw std::invalid_argument("SketchParams: dilation_radius < 1");
    }
};

/// Channel-mean luminance, {H,W}.
inline Tensor luminance(const Image& img) {
    Tensor out({img.h, img.w});
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            double s = 0.0;
            for (int c = 0; c < img.c; ++c) s += img.at(y, x, c);
            out.at2(y, x) = s / img.c;
        }
    }
    return out;
}

/// Separable Gaussian blur with replicated borders. sigma = 0 is the identity.
inline Tensor gaussian_blur_2d(const Tensor& in, double sigma) {
    if (sigma <= 0.0) return in;
    const int h = in.dim(0), w = in.dim(1);
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<size_t>(2 * r + 1));
    double norm = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[static_cast<size_t>(i + r)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        norm += k[static_cast<size_t>(i + r)];
    }
    for (double& x : k) x /= norm;

    Tensor tmp({h, w}), out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int xi = std::clamp(x + i, 0, w - 1);
                s += in.at2(y, xi) * k[static_cast<size_t>(i + r)];
            }
            tmp.at2(y, x) = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yi = std::clamp(y + i, 0, h - 1);
                s += tmp.at2(yi, x) * k[static_cast<size_t>(i + r)];
            }
            out.at2(y, x) = s;
        }
    }
    return out;
}

/// Canny edge detector: Gaussian smoothing, central-difference gradients,
/// non-maximum suppression (ties kept, so symmetric two-pixel ridges
/// survive), double threshold with hysteresis over 8-neighborhoods.
inline BinaryMask canny_edges(const Image& img, const SketchParams& p) {
    p.validate();
    const int h = img.h, w = img.w;
    const Tensor sm = gaussian_blur_2d(luminance(img), p.gaussian_sigma);

    Tensor gx({h, w}), gy({h, w}), mag({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
            gx.at2(y, x) = (sm.at2(y, xp) - sm.at2(y, xm)) * 0.5;
            gy.at2(y, x) = (sm.at2(yp, x) - sm.at2(ym, x)) * 0.5;
            mag.at2(y, x) = std::hypot(gx.at2(y, x), gy.at2(y, x));
        }
    }

    auto mag_at = [&](int y, int x) -> double {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
        return mag.at2(y, x);
    };

    // Non-maximum suppression along the quantized gradient direction.
    constexpr double kTan22 = 0.41421356237309503;  // tan(22.5 deg)
    BinaryMask weak(h, w), strong(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double m = mag.at2(y, x);
            if (m < p.canny_low || m == 0.0) continue;
            const double ax = std::abs(gx.at2(y, x)), ay = std::abs(gy.at2(y, x));
            double n1, n2;
            if (ay <= kTan22 * ax) {
                n1 = mag_at(y, x - 1);
                n2 = mag_at(y, x + 1);
            } else if (ax <= kTan22 * ay) {
                n1 = mag_at(y - 1, x);
                n2 = mag_at(y + 1, x);
            } else if (gx.at2(y, x) * gy.at2(y, x) > 0.0) {
                n1 = mag_at(y - 1, x - 1);
                n2 = mag_at(y + 1, x + 1);
            } else {
                n1 = mag_at(y - 1, x + 1);
                n2 = mag_at(y + 1, x - 1);
            }
            if (m >= n1 && m >= n2) {
                weak.at(y, x) = 1;
                if (m >= p.canny_high) strong.at(y, x) = 1;
            }
        }
    }

    // Hysteresis: keep weak pixels 8-connected to a strong one.
    BinaryMask out(h, w);
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (strong.at(y, x) && !out.at(y, x)) {
                out.at(y, x) = 1;
                stack.emplace_back(y, x);
                while (!stack.empty()) {
                    auto [cy, cx] = stack.back();
                    stack.pop_back();
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int ny = cy + dy, nx = cx + dx;
                            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                            if (weak.at(ny, nx) && !out.at(ny, nx)) {
                                out.at(ny, nx) = 1;
                                stack.emplace_back(ny, nx);
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Class-transition boundary of an integer mask: a pixel is boundary iff one
/// of its in-image 4-neighbors carries a different class. A constant mask has
/// no boundary.
inline BinaryMask mask_boundary(const LabelMask& mask) {
    BinaryMask out(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            const int v = mask.at(y, x);
            const bool diff = (y > 0 && mask.at(y - 1, x) != v) ||
                              (y + 1 < mask.h && mask.at(y + 1, x) != v) ||
                              (x > 0 && mask.at(y, x - 1) != v) ||
                              (x + 1 < mask.w && mask.at(y, x + 1) != v);
            if (diff) out.at(y, x) = 1;
        }
    }
    return out;
}

/// Morphological dilation with a (2*radius+1)^2 square element, clipped at
/// the image border.
inline BinaryMask dilate(const BinaryMask& mask, int radius) {
    if (radius < 1) throw std::invalid_argument("dilate: radius must be >= 1");
    BinaryMask out(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            if (!mask.at(y, x)) continue;
            const int y0 = std::max(0, y - radius), y1 = std::min(mask.h - 1, y + radius);
            const int x0 = std::max(0, x - radius), x1 = std::min(mask.w - 1, x + radius);
            for (int yy = y0; yy <= y1; ++yy) {
                for (int xx = x0; xx <= x1; ++xx) out.at(yy, xx) = 1;
            }
        }
    }
    return out;
}

/// Saturating addition of two sketches: pixelwise OR, keeping {0,1}.
inline BinaryMask merge_sketches(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) {
        throw std::invalid_argument("merge_sketches: shape mismatch");
    }
    BinaryMask out(a.h, a.w);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = (a.data[i] | b.data[i]);
    return out;
}

/// Merged sketch for the reconstruction pass: image edges plus the dilated
/// pseudo-label boundary, replicated across the image's channel count. With
/// disable_aux_sketch only the dilated mask boundary remains.
inline Image build_reflection_input(const Image& img, const LabelMask& pl, const SketchParams& p,
                                    const TrainConfig& cfg) {
    if (img.h != pl.h || img.w != pl.w) {
        throw std::invalid_argument("build_reflection_input: image/mask shape mismatch");
    }
    p.validate();
    BinaryMask merged = dilate(mask_boundary(pl), p.dilation_radius);
    if (!cfg.disable_aux_sketch) {
        merged = merge_sketches(canny_edges(img, p), merged);
    }
    Image out(img.h, img.w, img.c);
    for (int c = 0; c < img.c; ++c) {
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) out.at(y, x, c) = merged.at(y, x);
        }
    }
    return out;
}

}  // namespace erseg
