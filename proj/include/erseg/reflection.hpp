#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "erseg/types.hpp"

namespace erseg {

/// Non-negative per-pixel reconstruction error, {H,W}.
struct ErrorMap {
    int h = 0, w = 0;
    std::vector<double> data;

    ErrorMap() = default;
    ErrorMap(int h_, int w_) : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, 0.0) {}

    double& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }

    double max() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, v);
        return m;
    }
};

namespace detail {

/// Per-channel min-max normalization to [0,1]; a constant channel maps to
/// all zeros.
inline Image minmax_normalize(const Image& img) {
    Image out(img.h, img.w, img.c);
    for (int c = 0; c < img.c; ++c) {
        double lo = img.at(0, 0, c), hi = img.at(0, 0, c);
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) {
                lo = std::min(lo, img.at(y, x, c));
                hi = std::max(hi, img.at(y, x, c));
            }
        }
        const double range = hi - lo;
        if (range <= 0.0) continue;
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) {
                out.at(y, x, c) = (img.at(y, x, c) - lo) / range;
            }
        }
    }
    return out;
}

}  // namespace detail

/// Absolute difference of the min-max normalized proxy and original, averaged
/// over channels.
inline ErrorMap error_map(const Image& proxy, const Image& original) {
    if (proxy.h != original.h || proxy.w != original.w || proxy.c != original.c) {
        throw std::invalid_argument("error_map: shape mismatch");
    }
    const Image np = detail::minmax_normalize(proxy);
    const Image no = detail::minmax_normalize(original);
    ErrorMap em(proxy.h, proxy.w);
    for (int y = 0; y < proxy.h; ++y) {
        for (int x = 0; x < proxy.w; ++x) {
            double s = 0.0;
            for (int c = 0; c < proxy.c; ++c) s += std::abs(np.at(y, x, c) - no.at(y, x, c));
            em.at(y, x) = s / proxy.c;
        }
    }
    return em;
}

/// Dynamic threshold at half the map maximum, strict comparison. An all-zero
/// map yields an empty mask.
inline BinaryMask unreliable_mask(const ErrorMap& em) {
    const double thresh = em.max() / 2.0;
    BinaryMask out(em.h, em.w);
    for (int y = 0; y < em.h; ++y) {
        for (int x = 0; x < em.w; ++x) {
            if (em.at(y, x) > thresh) out.at(y, x) = 1;
        }
    }
    return out;
}

namespace detail {

inline ProbMap apply_mask(const ProbMap& p, const BinaryMask& m) {
    ProbMap out = p;
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
            if (m.at(y, x)) continue;
            for (int c = 0; c < p.k; ++c) out.at(c, y, x) = 0.0;
        }
    }
    return out;
}

}  // namespace detail

/// Restrict student and teacher predictions to the unreliable region; pixels
/// outside it are zeroed in every channel.
inline std::pair<ProbMap, ProbMap> decouple(const ProbMap& ps, const ProbMap& pt,
                                            const BinaryMask& ur) {
    if (ps.k != pt.k || ps.h != pt.h || ps.w != pt.w || ps.h != ur.h || ps.w != ur.w) {
        throw std::invalid_argument("decouple: shape mismatch");
    }
    return {detail::apply_mask(ps, ur), detail::apply_mask(pt, ur)};
}

/// Per-pixel confidence: maximum over channels.
inline double pixel_confidence(const ProbMap& p, int y, int x) {
    double m = p.at(0, y, x);
    for (int c = 1; c < p.k; ++c) m = std::max(m, p.at(c, y, x));
    return m;
}

/// 1 where the teacher is strictly more confident than the student. Outside
/// the unreliable region both maps are zero, so the strict comparison keeps
/// such pixels out automatically.
inline BinaryMask guidance_mask(const ProbMap& ps_ur, const ProbMap& pt_ur) {
    if (ps_ur.k != pt_ur.k || ps_ur.h != pt_ur.h || ps_ur.w != pt_ur.w) {
        throw std::invalid_argument("guidance_mask: shape mismatch");
    }
    BinaryMask out(ps_ur.h, ps_ur.w);
    for (int y = 0; y < ps_ur.h; ++y) {
        for (int x = 0; x < ps_ur.w; ++x) {
            if (pixel_confidence(pt_ur, y, x) > pixel_confidence(ps_ur, y, x)) out.at(y, x) = 1;
        }
    }
    return out;
}

/// (teacher more-confident, student less-confident) region pair: pointwise
/// products with the guidance mask.
inline std::pair<ProbMap, ProbMap> guided_regions(const ProbMap& ps_ur, const ProbMap& pt_ur,
                                                  const BinaryMask& g) {
    if (ps_ur.h != g.h || ps_ur.w != g.w || pt_ur.h != g.h || pt_ur.w != g.w) {
        throw std::invalid_argument("guided_regions: shape mismatch");
    }
    return {detail::apply_mask(pt_ur, g), detail::apply_mask(ps_ur, g)};
}

}  // namespace erseg
