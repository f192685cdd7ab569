#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "erseg/autograd.hpp"
#include "erseg/config.hpp"
#include "erseg/losses.hpp"
#include "erseg/rng.hpp"
#include "erseg/tensor.hpp"
#include "erseg/types.hpp"

using namespace erseg;
namespace ag = erseg::ag;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo, double hi) {
    Tensor t(s);
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

Image image_from(const Tensor& t) { return Image::from_tensor(t); }

LabelMask random_mask(int h, int w, int k_tot, Rng& rng) {
    LabelMask m;
    m.h = h;
    m.w = w;
    m.data.resize(static_cast<size_t>(h) * w);
    for (auto& v : m.data) v = static_cast<int>(rng.uniform_int(k_tot));
    return m;
}

double fd_gradient(const std::function<double(const Tensor&)>& f, Tensor at, int idx,
                   double eps = 1e-6) {
    Tensor plus = at, minus = at;
    plus.v[static_cast<size_t>(idx)] += eps;
    minus.v[static_cast<size_t>(idx)] -= eps;
    return (f(plus) - f(minus)) / (2.0 * eps);
}

}  // namespace

TEST_CASE("gaussian window is normalized and symmetric") {
    const Tensor w = gaussian_window(11, 1.5);
    REQUIRE(w.shape == Shape{11, 11});
    double sum = 0.0;
    for (double v : w.v) sum += v;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(w.at2(0, 3) == Catch::Approx(w.at2(10, 7)).margin(1e-15));
    REQUIRE(w.at2(5, 5) > w.at2(5, 6));
}

TEST_CASE("structural loss vanishes on identical images") {
    Rng rng(51);
    const Tensor x = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
    ag::Graph g;
    const int id = g.leaf(x, false);
    const int loss = ssim_loss_node(g, id, x, SsimParams{});
    REQUIRE(g.val(loss).value() >= 0.0);
    REQUIRE(g.val(loss).value() < 1e-6);
}

TEST_CASE("structural loss of flat black against flat white is near its closed form") {
    const Tensor zeros({1, 16, 16}, 0.0);
    const Tensor ones({1, 16, 16}, 1.0);
    ag::Graph g;
    const int loss = ssim_loss_node(g, g.leaf(zeros, false), ones, SsimParams{});
    const double c1 = 0.01 * 0.01;
    const double want = 1.0 - c1 / (1.0 + c1);
    REQUIRE(g.val(loss).value() == Catch::Approx(want).margin(1e-9));
}

TEST_CASE("structural loss stays within its analytic bounds and is symmetric") {
    Rng rng(52);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = random_tensor({1, 14, 14}, rng, 0.0, 1.0);
        const Tensor b = random_tensor({1, 14, 14}, rng, 0.0, 1.0);
        ag::Graph g;
        const double lab = g.val(ssim_loss_node(g, g.leaf(a, false), b, SsimParams{})).value();
        const double lba = g.val(ssim_loss_node(g, g.leaf(b, false), a, SsimParams{})).value();
        REQUIRE(lab >= 0.0);
        REQUIRE(lab <= 2.0);
        REQUIRE(lab == Catch::Approx(lba).margin(1e-10));
        REQUIRE(ssim_index(image_from(a), image_from(b)) ==
                Catch::Approx(1.0 - lab).margin(1e-10));
    }
}

TEST_CASE("structural loss rejects images smaller than the window") {
    const Tensor tiny({1, 8, 8}, 0.5);
    ag::Graph g;
    REQUIRE_THROWS_AS(ssim_loss_node(g, g.leaf(tiny, false), tiny, SsimParams{}),
                      std::invalid_argument);
}

TEST_CASE("structural loss gradient matches finite differences") {
    Rng rng(53);
    const Tensor target = random_tensor({1, 13, 13}, rng, 0.0, 1.0);
    const Tensor proxy = random_tensor({1, 13, 13}, rng, 0.0, 1.0);
    auto value = [&target](const Tensor& p) {
        ag::Graph g;
        return g.val(ssim_loss_node(g, g.leaf(p, false), target, SsimParams{})).value();
    };
    ag::Graph g;
    const int id = g.leaf(proxy, true);
    g.backward(ssim_loss_node(g, id, target, SsimParams{}));
    const Tensor grad = g.grad_or_zeros(id);
    Rng pick(531);
    for (int probe = 0; probe < 25; ++probe) {
        const int idx = static_cast<int>(pick.uniform_int(proxy.numel()));
        const double n = fd_gradient(value, proxy, idx);
        REQUIRE(grad.v[static_cast<size_t>(idx)] == Catch::Approx(n).margin(1e-6));
    }
}

TEST_CASE("cross entropy of uniform predictions is log K") {
    const int k = 4;
    Tensor probs({k, 3, 3}, 1.0 / k);
    LabelMask m;
    m.h = m.w = 3;
    m.data.assign(9, 2);
    ag::Graph g;
    const int loss = cross_entropy_node(g, g.leaf(probs, false), m);
    REQUIRE(g.val(loss).value() == Catch::Approx(std::log(4.0)).margin(1e-12));
}

TEST_CASE("cross entropy of exact one-hot predictions is zero") {
    LabelMask m;
    m.h = m.w = 2;
    m.data = {0, 1, 1, 0};
    Tensor probs({2, 2, 2}, 0.0);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) probs.at3(m.at(y, x), y, x) = 1.0;
    ag::Graph g;
    REQUIRE(g.val(cross_entropy_node(g, g.leaf(probs, false), m)).value() == 0.0);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(54);
    const Tensor probs = random_tensor({3, 4, 4}, rng, 0.05, 1.0);
    const LabelMask m = random_mask(4, 4, 3, rng);
    auto value = [&m](const Tensor& p) {
        ag::Graph g;
        return g.val(cross_entropy_node(g, g.leaf(p, false), m)).value();
    };
    ag::Graph g;
    const int id = g.leaf(probs, true);
    g.backward(cross_entropy_node(g, id, m));
    const Tensor grad = g.grad_or_zeros(id);
    for (int i = 0; i < probs.numel(); ++i) {
        const double n = fd_gradient(value, probs, i);
        REQUIRE(grad.v[static_cast<size_t>(i)] == Catch::Approx(n).margin(1e-6));
    }
}

TEST_CASE("overlap loss is exactly zero for a perfect one-hot prediction") {
    LabelMask m;
    m.h = m.w = 4;
    m.data = {0, 0, 1, 1, 0, 2, 2, 1, 0, 2, 2, 1, 0, 0, 1, 1};
    Tensor probs({3, 4, 4}, 0.0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) probs.at3(m.at(y, x), y, x) = 1.0;
    ag::Graph g;
    REQUIRE(g.val(dice_loss_node(g, g.leaf(probs, false), m)).value() == 0.0);
}

TEST_CASE("overlap loss approaches one for disjoint predictions") {
    LabelMask m;
    m.h = m.w = 4;
    m.data.assign(16, 1);
    Tensor probs({2, 4, 4}, 0.0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) probs.at3(0, y, x) = 1.0;  // all mass on background
    ag::Graph g;
    const double loss = g.val(dice_loss_node(g, g.leaf(probs, false), m)).value();
    REQUIRE(loss == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("overlap loss gradient matches finite differences") {
    Rng rng(55);
    const Tensor probs = random_tensor({3, 4, 4}, rng, 0.05, 1.0);
    const LabelMask m = random_mask(4, 4, 3, rng);
    auto value = [&m](const Tensor& p) {
        ag::Graph g;
        return g.val(dice_loss_node(g, g.leaf(p, false), m)).value();
    };
    ag::Graph g;
    const int id = g.leaf(probs, true);
    g.backward(dice_loss_node(g, id, m));
    const Tensor grad = g.grad_or_zeros(id);
    for (int i = 0; i < probs.numel(); ++i) {
        const double n = fd_gradient(value, probs, i);
        REQUIRE(grad.v[static_cast<size_t>(i)] == Catch::Approx(n).margin(1e-6));
    }
}

TEST_CASE("segmentation loss gradient survives repeated randomized checks") {
    Rng rng(56);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor probs = random_tensor({3, 4, 4}, rng, 0.05, 1.0);
        const LabelMask m = random_mask(4, 4, 3, rng);
        auto value = [&m](const Tensor& p) {
            ag::Graph g;
            return g.val(seg_loss_node(g, g.leaf(p, false), m)).value();
        };
        ag::Graph g;
        const int id = g.leaf(probs, true);
        g.backward(seg_loss_node(g, id, m));
        const Tensor grad = g.grad_or_zeros(id);
        for (int i = 0; i < probs.numel(); ++i) {
            const double n = fd_gradient(value, probs, i);
            const double a = grad.v[static_cast<size_t>(i)];
            REQUIRE(std::abs(a - n) <= 1e-6 + 1e-4 * std::abs(n));
        }
    }
}

TEST_CASE("guidance loss is a mean squared difference with a detached target") {
    Tensor student({2, 2, 2}, 0.0);
    Tensor teacher({2, 2, 2}, 0.0);
    teacher.at3(1, 0, 1) = 1.0;
    ag::Graph g;
    const int si = g.leaf(student, true);
    const int ti = g.leaf(teacher, true);
    const int loss = guidance_loss_node(g, si, ti);
    REQUIRE(g.val(loss).value() == Catch::Approx(1.0 / 8.0).margin(1e-15));
    g.backward(loss);
    REQUIRE_FALSE(g.has_grad(ti));  // target side is detached inside the node
    const Tensor gs = g.grad_or_zeros(si);
    REQUIRE(gs.at3(1, 0, 1) == Catch::Approx(2.0 * (0.0 - 1.0) / 8.0).margin(1e-12));
    REQUIRE(gs.at3(0, 0, 0) == 0.0);
}

TEST_CASE("guidance loss vanishes only on agreement") {
    Rng rng(57);
    const Tensor a = random_tensor({2, 3, 3}, rng, 0.0, 1.0);
    ag::Graph g;
    REQUIRE(g.val(guidance_loss_node(g, g.leaf(a, false), g.leaf(a, false))).value() == 0.0);
    Tensor b = a;
    b.v[4] += 0.25;
    REQUIRE(g.val(guidance_loss_node(g, g.leaf(a, false), g.leaf(b, false))).value() > 0.0);
}

TEST_CASE("total objective node reproduces the scalar assembly bit-for-bit") {
    Rng rng(58);
    LossWeights w{0.01, 0.01};
    for (int trial = 0; trial < 100; ++trial) {
        const double la = rng.uniform(0.0, 3.0);
        const double lb = rng.uniform(0.0, 3.0);
        const double lrec = rng.uniform(0.0, 1.0);
        const double lg = rng.uniform(0.0, 0.5);
        ag::Graph g;
        const int node = total_loss_node(g, g.leaf(Tensor::scalar(la), false),
                                         g.leaf(Tensor::scalar(lb), false),
                                         g.leaf(Tensor::scalar(lrec), false),
                                         g.leaf(Tensor::scalar(lg), false), w);
        REQUIRE(g.val(node).value() == assemble_total(la, lb, lrec, lg, w));
    }
}

TEST_CASE("total objective routes weighted gradients to each component") {
    LossWeights w{0.01, 0.02};
    ag::Graph g;
    const int la = g.leaf(Tensor::scalar(1.0), true);
    const int lb = g.leaf(Tensor::scalar(2.0), true);
    const int lrec = g.leaf(Tensor::scalar(3.0), true);
    const int lg = g.leaf(Tensor::scalar(4.0), true);
    const int total = total_loss_node(g, la, lb, lrec, lg, w);
    g.backward(total);
    REQUIRE(g.grad_or_zeros(la).value() == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(g.grad_or_zeros(lb).value() == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(g.grad_or_zeros(lrec).value() == Catch::Approx(0.01).margin(1e-15));
    REQUIRE(g.grad_or_zeros(lg).value() == Catch::Approx(0.02).margin(1e-15));
}
