#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "erseg/config.hpp"
#include "erseg/types.hpp"

namespace erseg {

/// Overlap metrics in percent. Conventions: class absent from both masks is a
/// perfect (100,100); absent from exactly one is a total miss (0,0).
inline std::pair<double, double> dice_jaccard(const LabelMask& pred, const LabelMask& gt, int cls) {
    if (pred.h != gt.h || pred.w != gt.w) {
        throw std::invalid_argument("dice_jaccard: shape mismatch");
    }
    int64_t a = 0, b = 0, inter = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const bool pa = pred.data[i] == cls;
        const bool pb = gt.data[i] == cls;
        a += pa;
        b += pb;
        inter += pa && pb;
    }
    if (a == 0 && b == 0) return {100.0, 100.0};
    if (a == 0 || b == 0) return {0.0, 0.0};
    const double dice = 200.0 * static_cast<double>(inter) / static_cast<double>(a + b);
    const double jac = 100.0 * static_cast<double>(inter) / static_cast<double>(a + b - inter);
    return {dice, jac};
}

/// Boundary pixels of one class: pixels of the class with an in-image
/// 4-neighbor of a different class (same transition rule as mask_boundary).
inline std::vector<std::pair<int, int>> class_boundary(const LabelMask& m, int cls) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            if (m.at(y, x) != cls) continue;
            const bool edge = (y > 0 && (m.at(y - 1, x) == cls) == false) ||
                              (y + 1 < m.h && (m.at(y + 1, x) == cls) == false) ||
                              (x > 0 && (m.at(y, x - 1) == cls) == false) ||
                              (x + 1 < m.w && (m.at(y, x + 1) == cls) == false);
            if (edge) out.emplace_back(y, x);
        }
    }
    return out;
}

namespace detail {

inline constexpr double kDtInf = 1e18;

/// 1-D squared-distance transform (Felzenszwalb & Huttenlocher lower
/// envelope); reads n samples with the given stride, writes back in place.
inline void dt1d(double* f, int n, int64_t stride, std::vector<double>& d, std::vector<int>& v,
                 std::vector<double>& z) {
    d.resize(static_cast<size_t>(n));
    v.resize(static_cast<size_t>(n));
    z.resize(static_cast<size_t>(n) + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -kDtInf;
    z[1] = kDtInf;
    auto fv = [&](int q) { return f[static_cast<int64_t>(q) * stride]; };
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            const int p = v[static_cast<size_t>(k)];
            s = ((fv(q) + static_cast<double>(q) * q) - (fv(p) + static_cast<double>(p) * p)) /
                (2.0 * q - 2.0 * p);
            if (s > z[static_cast<size_t>(k)]) break;
            --k;
        }
        ++k;
        v[static_cast<size_t>(k)] = q;
        z[static_cast<size_t>(k)] = s;
        z[static_cast<size_t>(k) + 1] = kDtInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<size_t>(k) + 1] < q) ++k;
        const int p = v[static_cast<size_t>(k)];
        d[static_cast<size_t>(q)] = static_cast<double>(q - p) * (q - p) + fv(p);
    }
    for (int q = 0; q < n; ++q) f[static_cast<int64_t>(q) * stride] = d[static_cast<size_t>(q)];
}

/// Exact squared Euclidean distance to the nearest seed point, full grid.
inline std::vector<double> squared_edt(int h, int w, const std::vector<std::pair<int, int>>& seeds) {
    std::vector<double> g(static_cast<size_t>(h) * w, kDtInf);
    for (const auto& [y, x] : seeds) g[static_cast<size_t>(y) * w + x] = 0.0;
    std::vector<double> d, z;
    std::vector<int> v;
    for (int x = 0; x < w; ++x) dt1d(g.data() + x, h, w, d, v, z);
    for (int y = 0; y < h; ++y) dt1d(g.data() + static_cast<int64_t>(y) * w, w, 1, d, v, z);
    return g;
}

/// Percentile with linear interpolation over a sorted sample, index
/// (n-1)*p/100.
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
    const double idx = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
    const auto lo = static_cast<size_t>(idx);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = idx - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

/// (95th-percentile Hausdorff, average surface distance) in pixels for one
/// class, via exact Euclidean distance transforms. Returns nullopt when the
/// class is missing from either mask or a boundary set is empty (class covers
/// the whole image); such classes are excluded from aggregation.
inline std::optional<std::pair<double, double>> surface_distances(const LabelMask& pred,
                                                                  const LabelMask& gt, int cls) {
    if (pred.h != gt.h || pred.w != gt.w) {
        throw std::invalid_argument("surface_distances: shape mismatch");
    }
    const auto bp = class_boundary(pred, cls);
    const auto bg = class_boundary(gt, cls);
    if (bp.empty() || bg.empty()) return std::nullopt;

    const auto to_gt = detail::squared_edt(pred.h, pred.w, bg);
    const auto to_pred = detail::squared_edt(pred.h, pred.w, bp);
    std::vector<double> d_pg, d_gp;
    d_pg.reserve(bp.size());
    d_gp.reserve(bg.size());
    for (const auto& [y, x] : bp) d_pg.push_back(std::sqrt(to_gt[static_cast<size_t>(y) * pred.w + x]));
    for (const auto& [y, x] : bg) d_gp.push_back(std::sqrt(to_pred[static_cast<size_t>(y) * pred.w + x]));

    double pooled = 0.0;
    for (double d : d_pg) pooled += d;
    for (double d : d_gp) pooled += d;
    const double asd = pooled / static_cast<double>(d_pg.size() + d_gp.size());

    std::sort(d_pg.begin(), d_pg.end());
    std::sort(d_gp.begin(), d_gp.end());
    const double hd95 =
        std::max(detail::percentile_sorted(d_pg, 95.0), detail::percentile_sorted(d_gp, 95.0));
    return std::make_pair(hd95, asd);
}

struct ClassMetrics {
    double dice = 0.0;
    double jaccard = 0.0;
    std::optional<double> hd95;
    std::optional<double> asd;
};

struct MetricsReport {
    std::map<int, ClassMetrics> per_class;  // foreground classes 1..k_fg
    double mean_dice = 0.0;                 // macro over foreground classes
    double mean_jaccard = 0.0;
    std::optional<double> mean_hd95;  // over classes with defined surfaces
    std::optional<double> mean_asd;
    int surface_exclusions = 0;
};

/// All four metrics for every foreground class of one case.
inline MetricsReport evaluate_case(const LabelMask& pred, const LabelMask& gt, int k_fg) {
    if (k_fg < 1) throw std::invalid_argument("evaluate_case: k_fg must be >= 1");
    MetricsReport r;
    double hd_sum = 0.0, asd_sum = 0.0;
    int n_surf = 0;
    for (int cls = 1; cls <= k_fg; ++cls) {
        ClassMetrics cm;
        std::tie(cm.dice, cm.jaccard) = dice_jaccard(pred, gt, cls);
        if (const auto sd = surface_distances(pred, gt, cls)) {
            cm.hd95 = sd->first;
            cm.asd = sd->second;
            hd_sum += sd->first;
            asd_sum += sd->second;
            ++n_surf;
        } else {
            ++r.surface_exclusions;
        }
        r.mean_dice += cm.dice;
        r.mean_jaccard += cm.jaccard;
        r.per_class.emplace(cls, cm);
    }
    r.mean_dice /= k_fg;
    r.mean_jaccard /= k_fg;
    if (n_surf > 0) {
        r.mean_hd95 = hd_sum / n_surf;
        r.mean_asd = asd_sum / n_surf;
    }
    return r;
}

/// CSV with one row per (case, class), then per-class means over cases, then
/// a foreground-macro summary row. Undefined surface metrics render empty.
inline std::string metrics_csv(const std::vector<std::string>& case_ids,
                               const std::vector<MetricsReport>& reports, int k_fg) {
    if (case_ids.size() != reports.size()) {
        throw std::invalid_argument("metrics_csv: case/report count mismatch");
    }
    std::ostringstream os;
    os << "case,class,dice,jaccard,hd95,asd\n";
    auto put = [&os](const std::optional<double>& v) {
        if (v) os << double_str(*v);
    };
    for (size_t i = 0; i < reports.size(); ++i) {
        for (const auto& [cls, cm] : reports[i].per_class) {
            os << case_ids[i] << ',' << cls << ',' << double_str(cm.dice) << ','
               << double_str(cm.jaccard) << ',';
            put(cm.hd95);
            os << ',';
            put(cm.asd);
            os << '\n';
        }
    }
    if (reports.empty()) return os.str();
    double all_dice = 0.0, all_jac = 0.0, all_hd = 0.0, all_asd = 0.0;
    int all_surf_cls = 0;
    for (int cls = 1; cls <= k_fg; ++cls) {
        double ds = 0.0, js = 0.0, hs = 0.0, as = 0.0;
        int n_surf = 0;
        for (const auto& r : reports) {
            const ClassMetrics& cm = r.per_class.at(cls);
            ds += cm.dice;
            js += cm.jaccard;
            if (cm.hd95) {
                hs += *cm.hd95;
                as += *cm.asd;
                ++n_surf;
            }
        }
        const auto n = static_cast<double>(reports.size());
        os << "mean," << cls << ',' << double_str(ds / n) << ',' << double_str(js / n) << ',';
        if (n_surf > 0) os << double_str(hs / n_surf);
        os << ',';
        if (n_surf > 0) os << double_str(as / n_surf);
        os << '\n';
        all_dice += ds / n;
        all_jac += js / n;
        if (n_surf > 0) {
            all_hd += hs / n_surf;
            all_asd += as / n_surf;
            ++all_surf_cls;
        }
    }
    os << "mean,all," << double_str(all_dice / k_fg) << ',' << double_str(all_jac / k_fg) << ',';
    if (all_surf_cls > 0) os << double_str(all_hd / all_surf_cls);
    os << ',';
    if (all_surf_cls > 0) os << double_str(all_asd / all_surf_cls);
    os << '\n';
    return os.str();
}

}  // namespace erseg
