#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "erseg/config.hpp"
#include "erseg/png_io.hpp"
#include "erseg/rng.hpp"
#include "erseg/sketch.hpp"
#include "erseg/types.hpp"

namespace erseg {

// ---- resizing and channel adaptation ------------------------------------

/// Bilinear resampling with half-pixel centers: src = (dst + 0.5)*scale - 0.5.
inline Image bilinear_resize(const Image& src, int oh, int ow) {
    if (oh < 1 || ow < 1) throw std::invalid_argument("bilinear_resize: bad output size");
    if (src.h == oh && src.w == ow) return src;
    Image out(oh, ow, src.c);
    const double sy = static_cast<double>(src.h) / oh;
    const double sx = static_cast<double>(src.w) / ow;
    for (int y = 0; y < oh; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < ow; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const double wx = fx - x0;
            for (int c = 0; c < src.c; ++c) {
                const double top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
                const double bot = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

/// Nearest-neighbor resampling; never invents class values.
inline LabelMask nearest_resize(const LabelMask& src, int oh, int ow) {
    if (oh < 1 || ow < 1) throw std::invalid_argument("nearest_resize: bad output size");
    if (src.h == oh && src.w == ow) return src;
    LabelMask out(oh, ow);
    const double sy = static_cast<double>(src.h) / oh;
    const double sx = static_cast<double>(src.w) / ow;
    for (int y = 0; y < oh; ++y) {
        const int yy = std::min(static_cast<int>((y + 0.5) * sy), src.h - 1);
        for (int x = 0; x < ow; ++x) {
            const int xx = std::min(static_cast<int>((x + 0.5) * sx), src.w - 1);
            out.at(y, x) = src.at(yy, xx);
        }
    }
    return out;
}

/// Channel adapter: 3->1 averages, 1->n replicates.
inline Image to_channels(const Image& src, int c) {
    if (src.c == c) return src;
    Image out(src.h, src.w, c);
    if (c == 1) {
        for (int y = 0; y < src.h; ++y) {
            for (int x = 0; x < src.w; ++x) {
                double s = 0.0;
                for (int ch = 0; ch < src.c; ++ch) s += src.at(y, x, ch);
                out.at(y, x, 0) = s / src.c;
            }
        }
        return out;
    }
    if (src.c == 1) {
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < src.h; ++y) {
                for (int x = 0; x < src.w; ++x) out.at(y, x, ch) = src.at(y, x, 0);
            }
        }
        return out;
    }
    throw std::invalid_argument("to_channels: unsupported conversion");
}

// ---- synthetic phantom ---------------------------------------------------

/// Low-contrast sector-scan lookalike: bright elliptical chambers on a dim
/// cone-shaped field, Gaussian-blurred edges, multiplicative speckle.
struct PhantomSpec {
    int size = 64;
    int chambers = 4;
    double contrast = 0.25;
    double speckle_strength = 0.3;
    double blur_sigma = 1.5;
    uint64_t seed = 1;

    void validate() const {
        if (size < 16) throw std::invalid_argument("PhantomSpec: size must be >= 16");
        if (chambers < 1 || chambers > 4) {
            throw std::invalid_argument("PhantomSpec: chambers must be in 1..4");
        }
        if (contrast <= 0) throw std::invalid_argument("PhantomSpec: contrast must be > 0");
        if (speckle_strength < 0 || blur_sigma < 0) {
            throw std::invalid_argument("PhantomSpec: noise parameters must be >= 0");
        }
    }
};

namespace detail {

inline constexpr double kPhantomBgIn = 0.30;
inline constexpr double kPhantomBgOut = 0.16;
inline constexpr double kPhantomConeHalfAngle = 0.6109;  // 35 degrees
inline constexpr int kPhantomPlaceRetries = 600;

inline bool in_cone(int y, int x, int size) {
    const double ay = -0.10 * size;
    const double ax = 0.5 * (size - 1);
    const double dy = y - ay;
    const double dx = x - ax;
    const double r = std::hypot(dy, dx);
    if (r > 1.25 * size) return false;
    return std::atan2(std::abs(dx), dy) <= kPhantomConeHalfAngle;
}

struct EllipseSpec {
    double cy, cx, a, b, theta;

    /// Signed normalized radius^2 with the axes inflated by `margin` pixels.
    double q(int y, int x, double margin = 0.0) const {
        const double dy = y - cy, dx = x - cx;
        const double ct = std::cos(theta), st = std::sin(theta);
        const double u = ct * dx + st * dy;
        const double v = -st * dx + ct * dy;
        const double ra = a + margin, rb = b + margin;
        return (u / ra) * (u / ra) + (v / rb) * (v / rb);
    }
};

}  // namespace detail

/// Deterministic phantom pair. The mask is the pre-noise rasterization with
/// classes exactly {0..chambers}; the image degrades it with blur + speckle.
inline std::pair<Image, LabelMask> generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    const int n = spec.size;
    Rng rng(spec.seed);

    LabelMask mask(n, n);
    Tensor field({n, n});
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            field.at2(y, x) = detail::in_cone(y, x, n) ? detail::kPhantomBgIn
                                                       : detail::kPhantomBgOut;
        }
    }

    for (int cls = 1; cls <= spec.chambers; ++cls) {
        bool placed = false;
        for (int attempt = 0; attempt < detail::kPhantomPlaceRetries && !placed; ++attempt) {
            // progressively shrink later attempts so placement always lands
            const double shrink =
                1.0 - 0.4 * static_cast<double>(attempt) / (detail::kPhantomPlaceRetries - 1);
            detail::EllipseSpec e;
            e.cy = rng.uniform(0.26, 0.80) * (n - 1);
            e.cx = rng.uniform(0.20, 0.80) * (n - 1);
            e.a = rng.uniform(0.07, 0.14) * n * shrink;
            e.b = rng.uniform(0.07, 0.14) * n * shrink;
            e.theta = rng.uniform(0.0, 3.14159265358979323846);

            bool ok = true;
            int area = 0;
            for (int y = 0; y < n && ok; ++y) {
                for (int x = 0; x < n && ok; ++x) {
                    if (e.q(y, x, 1.5) > 1.0) continue;  // outside inflated footprint
                    if (!detail::in_cone(y, x, n) || mask.at(y, x) != 0) ok = false;
                    if (e.q(y, x) <= 1.0) ++area;
                }
            }
            if (!ok || area < 12) continue;

            // Class intensity ladder. The leading factor overshoots 1 so the
            // measured foreground/background gap, after blur erosion and the
            // dimmer out-of-cone background, still averages the requested
            // contrast. Saturation keeps every level distinct inside [0,1]
            // even for extreme contrast requests.
            const double c_eff =
                std::min(spec.contrast, (1.0 - detail::kPhantomBgIn) / 1.25);
            const double level = detail::kPhantomBgIn + c_eff * (1.25 - 0.12 * (cls - 1));
            for (int y = 0; y < n; ++y) {
                for (int x = 0; x < n; ++x) {
                    if (e.q(y, x) > 1.0) continue;
                    mask.at(y, x) = cls;
                    field.at2(y, x) = level;
                }
            }
            placed = true;
        }
        if (!placed) {
            throw std::runtime_error("generate_phantom: chamber placement infeasible (seed " +
                                     std::to_string(spec.seed) + ")");
        }
    }

    if (spec.blur_sigma > 0) field = gaussian_blur_2d(field, spec.blur_sigma);
    if (spec.speckle_strength > 0) {
        for (double& v : field.v) v *= 1.0 + spec.speckle_strength * rng.normal();
    }
    Image img(n, n, 1);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) img.at(y, x, 0) = std::clamp(field.at2(y, x), 0.0, 1.0);
    }
    return {std::move(img), std::move(mask)};
}

// ---- dataset indexing ----------------------------------------------------

struct SampleRef {
    std::string patient;
    std::string image_path;
    std::string mask_path;  // empty when no mask exists (unlabeled pool)
};

struct DatasetIndex {
    std::vector<SampleRef> labeled;
    std::vector<SampleRef> unlabeled;
    double labeled_ratio = 0.0;
    uint64_t seed = 0;
};

namespace detail {

/// Patient id = filename stem up to the first '_' (whole stem if none).
inline std::string patient_of(const std::filesystem::path& p) {
    const std::string stem = p.stem().string();
    const auto pos = stem.find('_');
    return pos == std::string::npos ? stem : stem.substr(0, pos);
}

}  // namespace detail

/// Deterministic patient-level split: no patient contributes to both sides.
/// Labeled count = round(ratio * n_patients), at least 1. Labeled samples
/// must have masks; unlabeled masks are optional (validation only).
inline DatasetIndex index_dataset(const std::string& root, double labeled_ratio, uint64_t seed) {
    namespace fs = std::filesystem;
    if (labeled_ratio <= 0.0 || labeled_ratio > 1.0) {
        throw IoError("index_dataset: labeled_ratio must be in (0,1]");
    }
    const fs::path images = fs::path(root) / "images";
    const fs::path masks = fs::path(root) / "masks";
    if (!fs::is_directory(images)) throw IoError("index_dataset: missing directory " + images.string());

    std::map<std::string, std::vector<fs::path>> by_patient;
    for (const auto& ent : fs::directory_iterator(images)) {
        if (!ent.is_regular_file() || ent.path().extension() != ".png") continue;
        by_patient[detail::patient_of(ent.path())].push_back(ent.path());
    }
    if (by_patient.empty()) throw IoError("index_dataset: no PNG images under " + images.string());

    std::vector<std::string> patients;
    patients.reserve(by_patient.size());
    for (auto& [pid, files] : by_patient) {
        std::sort(files.begin(), files.end());
        patients.push_back(pid);
    }
    Rng rng(seed);
    rng.shuffle(patients);

    const auto n_pat = static_cast<int64_t>(patients.size());
    const int64_t n_lab = std::max<int64_t>(
        1, std::llround(labeled_ratio * static_cast<double>(n_pat)));

    DatasetIndex idx;
    idx.labeled_ratio = labeled_ratio;
    idx.seed = seed;
    for (int64_t i = 0; i < n_pat; ++i) {
        const bool lab = i < n_lab;
        for (const auto& img : by_patient.at(patients[static_cast<size_t>(i)])) {
            const fs::path mask = masks / img.filename();
            const bool has_mask = fs::is_regular_file(mask);
            if (lab && !has_mask) throw IoError("index_dataset: missing mask " + mask.string());
            SampleRef ref{detail::patient_of(img), img.string(), has_mask ? mask.string() : ""};
            (lab ? idx.labeled : idx.unlabeled).push_back(std::move(ref));
        }
    }
    return idx;
}

inline void write_index_manifest(const DatasetIndex& idx, const std::string& path) {
    nlohmann::json j;
    j["labeled_ratio"] = idx.labeled_ratio;
    j["seed"] = idx.seed;
    auto dump = [](const std::vector<SampleRef>& refs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : refs) {
            arr.push_back({{"patient", r.patient}, {"image", r.image_path}, {"mask", r.mask_path}});
        }
        return arr;
    };
    j["labeled"] = dump(idx.labeled);
    j["unlabeled"] = dump(idx.unlabeled);
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest: " + path);
    os << j.dump(2) << '\n';
}

inline DatasetIndex read_index_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read manifest: " + path);
    nlohmann::json j;
    is >> j;
    DatasetIndex idx;
    idx.labeled_ratio = j.at("labeled_ratio").get<double>();
    idx.seed = j.at("seed").get<uint64_t>();
    auto parse = [](const nlohmann::json& arr) {
        std::vector<SampleRef> out;
        for (const auto& e : arr) {
            out.push_back({e.at("patient").get<std::string>(), e.at("image").get<std::string>(),
                           e.at("mask").get<std::string>()});
        }
        return out;
    };
    idx.labeled = parse(j.at("labeled"));
    idx.unlabeled = parse(j.at("unlabeled"));
    return idx;
}

// ---- loading -------------------------------------------------------------

inline Image load_image_file(const std::string& path, const TrainConfig& cfg) {
    Image img = to_channels(read_png_image(path), cfg.channels);
    img = bilinear_resize(img, cfg.image_size, cfg.image_size);
    img.validate();
    return img;
}

inline LabelMask load_mask_file(const std::string& path, const TrainConfig& cfg) {
    LabelMask m = nearest_resize(read_png_mask(path), cfg.image_size, cfg.image_size);
    m.validate(cfg.k_fg);
    return m;
}

/// Everything the trainer touches, loaded up front (desk-scale data).
/// Validation pool = unlabeled samples that carry masks.
struct TrainPool {
    std::vector<std::pair<Image, LabelMask>> labeled;
    std::vector<Image> unlabeled;
    std::vector<std::pair<Image, LabelMask>> val;
};

inline TrainPool load_pool(const DatasetIndex& idx, const TrainConfig& cfg) {
    TrainPool pool;
    for (const auto& ref : idx.labeled) {
        pool.labeled.emplace_back(load_image_file(ref.image_path, cfg),
                                  load_mask_file(ref.mask_path, cfg));
    }
    for (const auto& ref : idx.unlabeled) {
        Image img = load_image_file(ref.image_path, cfg);
        if (!ref.mask_path.empty()) {
            pool.val.emplace_back(img, load_mask_file(ref.mask_path, cfg));
        }
        pool.unlabeled.push_back(std::move(img));
    }
    if (pool.labeled.empty()) throw IoError("load_pool: labeled set is empty");
    return pool;
}

}  // namespace erseg
