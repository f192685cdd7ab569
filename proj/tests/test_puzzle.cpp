#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <stdexcept>
#include <vector>

#include "erseg/autograd.hpp"
#include "erseg/puzzle.hpp"
#include "erseg/rng.hpp"
#include "erseg/tensor.hpp"
#include "erseg/types.hpp"

using namespace erseg;
namespace ag = erseg::ag;

namespace {

Image const_image(int h, int w, int c, double fill) {
    Image img;
    img.h = h;
    img.w = w;
    img.c = c;
    img.data.assign(static_cast<size_t>(h) * w * c, fill);
    return img;
}

Image random_image(int h, int w, int c, Rng& rng) {
    Image img = const_image(h, w, c, 0.0);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

ProbMap random_probs(int k, int h, int w, Rng& rng) {
    ProbMap p;
    p.k = k;
    p.h = h;
    p.w = w;
    p.data.assign(static_cast<size_t>(k) * h * w, 0.0);
    for (auto& v : p.data) v = rng.uniform();
    return p;
}

MixLayout manual_layout(int h, int w, int n, const std::vector<int>& assign) {
    MixLayout L;
    L.n = n;
    L.assignment.assign(assign.begin(), assign.end());
    L.row_bounds.resize(static_cast<size_t>(n) + 1);
    L.col_bounds.resize(static_cast<size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        L.row_bounds[static_cast<size_t>(i)] = i * h / n;
        L.col_bounds[static_cast<size_t>(i)] = i * w / n;
    }
    return L;
}

// independent patch-source oracle: which image feeds pixel (y,x) of mixed image a
int source_of(const MixLayout& L, int y, int x) {
    int pi = 0, pj = 0;
    while (L.row_bounds[static_cast<size_t>(pi) + 1] <= y) ++pi;
    while (L.col_bounds[static_cast<size_t>(pj) + 1] <= x) ++pj;
    return static_cast<int>(L.assignment[static_cast<size_t>(pi) * L.n + pj]);
}

}  // namespace

TEST_CASE("layout bounds for even and uneven divisions") {
    Rng rng(1);
    const MixLayout L2 = make_layout(256, 256, 2, rng);
    REQUIRE(L2.row_bounds == std::vector<int>{0, 128, 256});
    REQUIRE(L2.col_bounds == std::vector<int>{0, 128, 256});
    const MixLayout L3 = make_layout(256, 256, 3, rng);
    std::vector<int> sizes;
    for (size_t i = 0; i + 1 < L3.row_bounds.size(); ++i)
        sizes.push_back(L3.row_bounds[i + 1] - L3.row_bounds[i]);
    REQUIRE(sizes == std::vector<int>{85, 85, 86});
    L2.validate(256, 256);
    L3.validate(256, 256);
}

TEST_CASE("layout assignment is balanced") {
    Rng rng(2);
    for (int n = 1; n <= 4; ++n) {
        for (int trial = 0; trial < 50; ++trial) {
            const MixLayout L = make_layout(64, 64, n, rng);
            const int ones =
                static_cast<int>(std::count(L.assignment.begin(), L.assignment.end(), 1));
            REQUIRE(ones == (n * n + 1) / 2);
            REQUIRE(static_cast<int>(L.assignment.size()) == n * n);
        }
    }
}

TEST_CASE("single-patch layout covers the image") {
    Rng rng(3);
    const MixLayout L = make_layout(32, 48, 1, rng);
    REQUIRE(L.row_bounds == std::vector<int>{0, 32});
    REQUIRE(L.col_bounds == std::vector<int>{0, 48});
    REQUIRE(L.assignment == std::vector<uint8_t>{1});
}

TEST_CASE("all balanced two-by-two assignments occur") {
    Rng rng(4);
    std::set<std::vector<uint8_t>> seen;
    for (int trial = 0; trial < 200; ++trial)
        seen.insert(make_layout(16, 16, 2, rng).assignment);
    REQUIRE(seen.size() == 6);  // C(4,2) balanced patterns
    for (const auto& a : seen)
        REQUIRE(std::count(a.begin(), a.end(), 1) == 2);
}

TEST_CASE("layout construction rejects impossible grids") {
    Rng rng(5);
    REQUIRE_THROWS_AS(make_layout(8, 8, 0, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(make_layout(4, 4, 5, rng), std::invalid_argument);
    MixLayout bad = manual_layout(8, 8, 2, {1, 0, 0});
    REQUIRE_THROWS_AS(bad.validate(8, 8), std::invalid_argument);
}

TEST_CASE("degenerate assignments reproduce the originals") {
    Rng rng(6);
    const Image xl = random_image(8, 8, 1, rng);
    const Image xu = random_image(8, 8, 1, rng);
    const MixLayout ones = manual_layout(8, 8, 2, {1, 1, 1, 1});
    auto [a1, b1] = mix(xl, xu, ones);
    REQUIRE(a1.data == xl.data);
    REQUIRE(b1.data == xu.data);
    const MixLayout zeros = manual_layout(8, 8, 2, {0, 0, 0, 0});
    auto [a0, b0] = mix(xl, xu, zeros);
    REQUIRE(a0.data == xu.data);
    REQUIRE(b0.data == xl.data);
}

TEST_CASE("diagonal assignment produces quadrant patterns") {
    const Image xl = const_image(8, 8, 1, 1.0);
    const Image xu = const_image(8, 8, 1, 0.0);
    const MixLayout L = manual_layout(8, 8, 2, {1, 0, 0, 1});
    auto [a, b] = mix(xl, xu, L);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const bool top = y < 4, left = x < 4;
            const double want_a = (top == left) ? 1.0 : 0.0;
            REQUIRE(a.at(y, x, 0) == want_a);
            REQUIRE(b.at(y, x, 0) == 1.0 - want_a);
        }
}

TEST_CASE("mixing is complementary and conserves pixels") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(3));
        const MixLayout L = make_layout(12, 12, n, rng);
        const Image xl = random_image(12, 12, 2, rng);
        const Image xu = random_image(12, 12, 2, rng);
        auto [a, b] = mix(xl, xu, L);
        for (int ch = 0; ch < 2; ++ch)
            for (int y = 0; y < 12; ++y)
                for (int x = 0; x < 12; ++x) {
                    if (source_of(L, y, x) == 1) {
                        REQUIRE(a.at(y, x, ch) == xl.at(y, x, ch));
                        REQUIRE(b.at(y, x, ch) == xu.at(y, x, ch));
                    } else {
                        REQUIRE(a.at(y, x, ch) == xu.at(y, x, ch));
                        REQUIRE(b.at(y, x, ch) == xl.at(y, x, ch));
                    }
                }
        std::vector<double> mixed = a.data;
        mixed.insert(mixed.end(), b.data.begin(), b.data.end());
        std::vector<double> orig = xl.data;
        orig.insert(orig.end(), xu.data.begin(), xu.data.end());
        std::sort(mixed.begin(), mixed.end());
        std::sort(orig.begin(), orig.end());
        REQUIRE(mixed == orig);
    }
}

TEST_CASE("label mixing follows the image layout") {
    Rng rng(8);
    const MixLayout L = make_layout(10, 10, 2, rng);
    LabelMask yl, yu;
    yl.h = yl.w = 10;
    yl.data.assign(100, 1);
    yu.h = yu.w = 10;
    yu.data.assign(100, 2);
    auto [ya, yb] = mix_labels(yl, yu, L);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            const int src = source_of(L, y, x);
            REQUIRE(ya.at(y, x) == (src == 1 ? 1 : 2));
            REQUIRE(yb.at(y, x) == (src == 1 ? 2 : 1));
        }
}

TEST_CASE("inverse mixing recovers unlabeled predictions exactly") {
    Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(3));
        const MixLayout L = make_layout(9, 9, n, rng);
        const ProbMap pl = random_probs(3, 9, 9, rng);
        const ProbMap pu = random_probs(3, 9, 9, rng);
        ProbMap pa = pl, pb = pl;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 9; ++y)
                for (int x = 0; x < 9; ++x) {
                    if (source_of(L, y, x) == 1) {
                        pa.at(c, y, x) = pl.at(c, y, x);
                        pb.at(c, y, x) = pu.at(c, y, x);
                    } else {
                        pa.at(c, y, x) = pu.at(c, y, x);
                        pb.at(c, y, x) = pl.at(c, y, x);
                    }
                }
        const ProbMap rec = inverse_mix(pa, pb, L);
        REQUIRE(rec.data == pu.data);
    }
}

TEST_CASE("exhaustive two-by-two roundtrip on a small grid") {
    Rng rng(10);
    const Image xl = random_image(4, 4, 1, rng);
    const Image xu = random_image(4, 4, 1, rng);
    const std::vector<std::vector<int>> balanced = {
        {1, 1, 0, 0}, {1, 0, 1, 0}, {1, 0, 0, 1},
        {0, 1, 1, 0}, {0, 1, 0, 1}, {0, 0, 1, 1}};
    for (const auto& assign : balanced) {
        const MixLayout L = manual_layout(4, 4, 2, assign);
        auto [a, b] = mix(xl, xu, L);
        const Tensor rec = inverse_mix_tensors(a.to_tensor(), b.to_tensor(), L);
        REQUIRE(rec.v == xu.to_tensor().v);
    }
}

TEST_CASE("differentiable inverse mixing matches the plain version and scatters gradients") {
    Rng rng(11);
    const MixLayout L = make_layout(6, 6, 2, rng);
    const ProbMap pa = random_probs(2, 6, 6, rng);
    const ProbMap pb = random_probs(2, 6, 6, rng);
    ag::Graph g;
    const int ia = g.leaf(pa.to_tensor(), true);
    const int ib = g.leaf(pb.to_tensor(), true);
    const int inv = inverse_mix_node(g, ia, ib, L);
    REQUIRE(g.val(inv).v == inverse_mix(pa, pb, L).data);
    Tensor w({2, 6, 6});
    for (auto& v : w.v) v = rng.uniform(0.5, 1.5);
    g.backward(g.sum_all(g.mul_const(inv, w)));
    const Tensor ga = g.grad_or_zeros(ia);
    const Tensor gb = g.grad_or_zeros(ib);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                const bool labeled_in_a = source_of(L, y, x) == 1;
                // unlabeled pixels live in b where a holds labeled content
                REQUIRE(ga.at3(c, y, x) == (labeled_in_a ? 0.0 : w.at3(c, y, x)));
                REQUIRE(gb.at3(c, y, x) == (labeled_in_a ? w.at3(c, y, x) : 0.0));
            }
}

TEST_CASE("mix rejects mismatched shapes") {
    Rng rng(12);
    const MixLayout L = make_layout(8, 8, 2, rng);
    const Image xl = const_image(8, 8, 1, 0.5);
    const Image bad = const_image(8, 6, 1, 0.5);
    REQUIRE_THROWS_AS(mix(xl, bad, L), std::invalid_argument);
}
