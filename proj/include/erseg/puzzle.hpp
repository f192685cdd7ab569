#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "erseg/autograd.hpp"
#include "erseg/rng.hpp"
#include "erseg/types.hpp"

namespace erseg {

/// Puzzle partition of an HxW frame into an n x n grid plus the patch
/// assignment for the two complementary mixed images. assignment[j] = 1 means
/// grid position j takes the labeled patch in mixed image a; mixed image b
/// always uses the complement.
struct MixLayout {
    int n = 1;
    std::vector<int> row_bounds;  // n+1 entries, 0 .. H
    std::vector<int> col_bounds;  // n+1 entries, 0 .. W
    std::vector<uint8_t> assignment;  // n*n entries

    int patches() const { return n * n; }

    /// Compact string for run logs, e.g. "n=2;a=1001".
    std::string describe() const {
        std::ostringstream os;
        os << "n=" << n << ";a=";
        for (uint8_t b : assignment) os << int(b);
        return os.str();
    }

    void validate(int h, int w) const {
        if (n < 1 || static_cast<int>(assignment.size()) != n * n ||
            static_cast<int>(row_bounds.size()) != n + 1 ||
            static_cast<int>(col_bounds.size()) != n + 1) {
            throw std::invalid_argument("MixLayout: inconsistent field sizes");
        }
        if (row_bounds.front() != 0 || row_bounds.back() != h || col_bounds.front() != 0 ||
            col_bounds.back() != w) {
            throw std::invalid_argument("MixLayout: bounds do not cover the frame");
        }
        for (int i = 0; i < n; ++i) {
            if (row_bounds[i] >= row_bounds[i + 1] || col_bounds[i] >= col_bounds[i + 1]) {
                throw std::invalid_argument("MixLayout: bounds not strictly increasing");
            }
        }
    }
};

/// Partition boundaries at floor(k*extent/n) and a balanced random
/// assignment: exactly ceil(n^2/2) positions take the labeled patch, so both
/// mixed images always contain both domains.
inline MixLayout make_layout(int h, int w, int n, Rng& rng) {
    if (n < 1 || n > std::min(h, w)) {
        throw std::invalid_argument("make_layout: n must lie in [1, min(H,W)]");
    }
    MixLayout layout;
    layout.n = n;
    layout.row_bounds.resize(static_cast<size_t>(n) + 1);
    layout.col_bounds.resize(static_cast<size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
        layout.row_bounds[static_cast<size_t>(k)] =
            static_cast<int>(static_cast<int64_t>(k) * h / n);
        layout.col_bounds[static_cast<size_t>(k)] =
            static_cast<int>(static_cast<int64_t>(k) * w / n);
    }
    layout.assignment.assign(static_cast<size_t>(n) * n, 0);
    const int ones = (n * n + 1) / 2;
    for (int idx : rng.sample_indices(n * n, ones)) {
        layout.assignment[static_cast<size_t>(idx)] = 1;
    }
    return layout;
}

namespace detail {

/// Copy patch j of src into dst (both {...,H,W} tensors with identical
/// leading dimension).
template <typename Copier>
inline void for_each_patch_pixel(const MixLayout& L, int j, Copier&& fn) {
    const int r = j / L.n, c = j % L.n;
    for (int y = L.row_bounds[static_cast<size_t>(r)]; y < L.row_bounds[static_cast<size_t>(r) + 1];
         ++y) {
        for (int x = L.col_bounds[static_cast<size_t>(c)];
             x < L.col_bounds[static_cast<size_t>(c) + 1]; ++x) {
            fn(y, x);
        }
    }
}

}  // namespace detail

/// Bidirectional patch mixing of a labeled/unlabeled image pair. Image a
/// takes the labeled patch where assignment = 1; image b is the exact
/// complement. Patches never move: position j of the output is position j of
/// one of the inputs.
inline std::pair<Image, Image> mix(const Image& xl, const Image& xu, const MixLayout& L) {
    if (xl.h != xu.h || xl.w != xu.w || xl.c != xu.c) {
        throw std::invalid_argument("mix: image shape mismatch");
    }
    L.validate(xl.h, xl.w);
    Image a = xu, b = xl;
    for (int j = 0; j < L.patches(); ++j) {
        if (!L.assignment[static_cast<size_t>(j)]) continue;
        detail::for_each_patch_pixel(L, j, [&](int y, int x) {
            for (int c = 0; c < xl.c; ++c) {
                a.at(y, x, c) = xl.at(y, x, c);
                b.at(y, x, c) = xu.at(y, x, c);
            }
        });
    }
    return {std::move(a), std::move(b)};
}

/// Same mixing applied to label masks; must use the layout of the images it
/// supervises so every pixel's label and intensity share provenance.
inline std::pair<LabelMask, LabelMask> mix_labels(const LabelMask& yl, const LabelMask& yu,
                                                  const MixLayout& L) {
    if (yl.h != yu.h || yl.w != yu.w) {
        throw std::invalid_argument("mix_labels: mask shape mismatch");
    }
    L.validate(yl.h, yl.w);
    LabelMask a = yu, b = yl;
    for (int j = 0; j < L.patches(); ++j) {
        if (!L.assignment[static_cast<size_t>(j)]) continue;
        detail::for_each_patch_pixel(L, j, [&](int y, int x) {
            a.at(y, x) = yl.at(y, x);
            b.at(y, x) = yu.at(y, x);
        });
    }
    return {std::move(a), std::move(b)};
}

/// Reassemble the unlabeled prediction from the two mixed predictions: where
/// the labeled patch went into a, the unlabeled content sits in b, and vice
/// versa.
inline Tensor inverse_mix_tensors(const Tensor& pa, const Tensor& pb, const MixLayout& L) {
    require_same_shape(pa, pb, "inverse_mix");
    const int k = pa.dim(0), h = pa.dim(1), w = pa.dim(2);
    L.validate(h, w);
    Tensor out = pa;
    for (int j = 0; j < L.patches(); ++j) {
        if (!L.assignment[static_cast<size_t>(j)]) continue;
        detail::for_each_patch_pixel(L, j, [&](int y, int x) {
            for (int c = 0; c < k; ++c) out.at3(c, y, x) = pb.at3(c, y, x);
        });
    }
    return out;
}

inline ProbMap inverse_mix(const ProbMap& pa, const ProbMap& pb, const MixLayout& L) {
    return ProbMap::from_tensor(inverse_mix_tensors(pa.to_tensor(), pb.to_tensor(), L));
}

/// Differentiable inverse mixing: gradients scatter back into whichever
/// mixed prediction supplied each patch.
inline int inverse_mix_node(ag::Graph& g, int pa, int pb, const MixLayout& L) {
    Tensor out = inverse_mix_tensors(g.val(pa), g.val(pb), L);
    auto layout = std::make_shared<MixLayout>(L);
    const int k = out.dim(0);
    return g.make_node(std::move(out), {pa, pb}, [pa, pb, layout, k](ag::Graph& gg, int id) {
        const Tensor& go = gg.grad(id);
        for (int j = 0; j < layout->patches(); ++j) {
            const int src = layout->assignment[static_cast<size_t>(j)] ? pb : pa;
            if (!gg.requires_grad(src)) continue;
            Tensor& gs = gg.grad(src);
            detail::for_each_patch_pixel(*layout, j, [&](int y, int x) {
                for (int c = 0; c < k; ++c) gs.at3(c, y, x) += go.at3(c, y, x);
            });
        }
    });
}

}  // namespace erseg
