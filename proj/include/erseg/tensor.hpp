#pragma once

#include <cassert>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace erseg {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

/// Dense row-major tensor of doubles. Rank 0 tensors hold a single scalar.
/// Layout conventions used across the project:
///   {H,W}            spatial map
///   {C,H,W}          image / probability map (channel-major)
///   {Cout,Cin,Kh,Kw} convolution weight
struct Tensor {
    Shape shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0)
        : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), fill) {}

    static Tensor scalar(double x) {
        Tensor t{Shape{}};
        t.v[0] = x;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    double value() const {
        assert(v.size() == 1);
        return v[0];
    }

    double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    // {H,W}
    double& at2(int y, int x) { return v[static_cast<size_t>(y) * dim(1) + x]; }
    double at2(int y, int x) const { return v[static_cast<size_t>(y) * dim(1) + x]; }

    // {C,H,W}
    double& at3(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
    }
    double at3(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
    }

    // {Cout,Cin,Kh,Kw}
    double& at4(int o, int i, int y, int x) {
        return v[((static_cast<size_t>(o) * dim(1) + i) * dim(2) + y) * dim(3) + x];
    }
    double at4(int o, int i, int y, int x) const {
        return v[((static_cast<size_t>(o) * dim(1) + i) * dim(2) + y) * dim(3) + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    Tensor& operator+=(const Tensor& o) {
        assert(same_shape(o));
        for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(what + ": shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    }
}

}  // namespace erseg
