#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "erseg/tensor.hpp"

namespace erseg {

/// Real-valued image, values in [0,1]. Stored channel-major ({C,H,W} order),
/// matching the tensor layout the network consumes.
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

    double& at(int y, int x, int ch) { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }
    double at(int y, int x, int ch) const { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }

    Tensor to_tensor() const {
        Tensor t({c, h, w});
        t.v = data;
        return t;
    }
    static Image from_tensor(const Tensor& t) {
        Image img;
        img.c = t.dim(0);
        img.h = t.dim(1);
        img.w = t.dim(2);
        img.data = t.v;
        return img;
    }

    void validate() const {
        if (h < 2 || w < 2 || c < 1) {
            throw std::invalid_argument("Image: requires H >= 2, W >= 2, C >= 1, got " +
                                        std::to_string(h) + "x" + std::to_string(w) + "x" +
                                        std::to_string(c));
        }
        for (double x : data) {
            if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
                throw std::invalid_argument("Image: value outside [0,1]: " + std::to_string(x));
            }
        }
    }
};

/// Integer class mask over {0..k_fg}, 0 is background.
struct LabelMask {
    int h = 0, w = 0;
    std::vector<int> data;

    LabelMask() = default;
    LabelMask(int h_, int w_, int fill = 0)
        : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, fill) {}

    int& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    int at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }

    void validate(int k_fg) const {
        for (int v : data) {
            if (v < 0 || v > k_fg) {
                throw std::invalid_argument("LabelMask: class id " + std::to_string(v) +
                                            " outside {0.." + std::to_string(k_fg) + "}");
            }
        }
    }
};

/// Per-pixel class probabilities, {K,H,W}. A freshly predicted map is a
/// per-pixel simplex; masked region slices derived from one are not, so
/// simplex validation is explicit rather than enforced on construction.
struct ProbMap {
    int k = 0, h = 0, w = 0;
    std::vector<double> data;

    ProbMap() = default;
    ProbMap(int k_, int h_, int w_, double fill = 0.0)
        : k(k_), h(h_), w(w_), data(static_cast<size_t>(k_) * h_ * w_, fill) {}

    double& at(int cls, int y, int x) { return data[(static_cast<size_t>(cls) * h + y) * w + x]; }
    double at(int cls, int y, int x) const {
        return data[(static_cast<size_t>(cls) * h + y) * w + x];
    }

    Tensor to_tensor() const {
        Tensor t({k, h, w});
        t.v = data;
        return t;
    }
    static ProbMap from_tensor(const Tensor& t) {
        ProbMap p;
        p.k = t.dim(0);
        p.h = t.dim(1);
        p.w = t.dim(2);
        p.data = t.v;
        return p;
    }

    bool is_normalized(double tol = 1e-5) const {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int c = 0; c < k; ++c) {
                    const double p = at(c, y, x);
                    if (p < 0.0 || p > 1.0) return false;
                    s += p;
                }
                if (std::abs(s - 1.0) > tol) return false;
            }
        }
        return true;
    }

    void validate() const {
        if (!is_normalized()) throw std::invalid_argument("ProbMap: not a per-pixel simplex");
    }
};

/// {0,1}-valued spatial mask.
struct BinaryMask {
    int h = 0, w = 0;
    std::vector<uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int h_, int w_, uint8_t fill = 0)
        : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, fill) {}

    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }

    int64_t count() const {
        int64_t n = 0;
        for (uint8_t v : data) n += v;
        return n;
    }

    Tensor to_tensor() const {
        Tensor t({h, w});
        for (size_t i = 0; i < data.size(); ++i) t.v[i] = data[i];
        return t;
    }

    bool operator==(const BinaryMask& o) const { return h == o.h && w == o.w && data == o.data; }
};

}  // namespace erseg
