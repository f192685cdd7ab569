#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace erseg {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

/// Shortest decimal string that parses back to the same double.
inline std::string double_str(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

/// Training hyperparameters and ablation switches. Defaults reproduce the
/// published operating point: alpha = beta = 0.01, puzzle grid N in {2,3},
/// 256x256 inputs.
struct TrainConfig {
    int image_size = 256;
    int channels = 1;
    int k_fg = 3;  // foreground classes; probability maps carry k_fg + 1 channels

    double alpha = 0.01;  // reconstruction loss weight
    double beta = 0.01;   // guidance loss weight
    double ema_lambda = 0.99;
    std::vector<int> n_choices = {2, 3};

    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int64_t max_iters = 10000;
    uint64_t seed = 1;

    int levels = 4;       // U-Net resolution levels
    int base_width = 16;  // channels at the top level, doubled per level
    int val_interval = 100;
    int checkpoint_interval = 1000;

    // Ablation switches
    bool disable_ers = false;         // drop the whole error-reflection path
    bool disable_mms = false;         // drop puzzle mixing
    bool disable_s1 = false;          // drop reconstruction; unreliable map from teacher softmax
    bool disable_s2 = false;          // drop guidance correction, keep reconstruction
    bool disable_aux_sketch = false;  // reconstruction input from mask boundary only
    int fixed_n = 0;                  // 0 = sample N from n_choices each iteration
    double s1_conf_thresh = 0.8;      // teacher confidence cutoff in softmax-only mode

    int k_tot() const { return k_fg + 1; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& s) {
    double out = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ConfigError("bad numeric value for '" + key + "': " + s);
    }
    return out;
}

inline int64_t parse_int(const std::string& key, const std::string& s) {
    int64_t out = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ConfigError("bad integer value for '" + key + "': " + s);
    }
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("bad boolean value for '" + key + "': " + s);
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& s) {
    std::vector<int> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("empty element in list '" + key + "'");
        out.push_back(static_cast<int>(parse_int(key, item)));
    }
    if (out.empty()) throw ConfigError("empty list for '" + key + "'");
    return out;
}

}  // namespace detail

/// Canonical flat key = value rendering. serialize -> parse -> serialize is
/// byte-identical.
inline std::string serialize_config(const TrainConfig& c) {
    std::ostringstream os;
    os << "image_size = " << c.image_size << "\n";
    os << "channels = " << c.channels << "\n";
    os << "k_fg = " << c.k_fg << "\n";
    os << "alpha = " << double_str(c.alpha) << "\n";
    os << "beta = " << double_str(c.beta) << "\n";
    os << "ema_lambda = " << double_str(c.ema_lambda) << "\n";
    os << "n_choices = ";
    for (size_t i = 0; i < c.n_choices.size(); ++i) os << (i ? "," : "") << c.n_choices[i];
    os << "\n";
    os << "lr = " << double_str(c.lr) << "\n";
    os << "momentum = " << double_str(c.momentum) << "\n";
    os << "weight_decay = " << double_str(c.weight_decay) << "\n";
    os << "max_iters = " << c.max_iters << "\n";
    os << "seed = " << c.seed << "\n";
    os << "levels = " << c.levels << "\n";
    os << "base_width = " << c.base_width << "\n";
    os << "val_interval = " << c.val_interval << "\n";
    os << "checkpoint_interval = " << c.checkpoint_interval << "\n";
    os << "disable_ers = " << (c.disable_ers ? "true" : "false") << "\n";
    os << "disable_mms = " << (c.disable_mms ? "true" : "false") << "\n";
    os << "disable_s1 = " << (c.disable_s1 ? "true" : "false") << "\n";
    os << "disable_s2 = " << (c.disable_s2 ? "true" : "false") << "\n";
    os << "disable_aux_sketch = " << (c.disable_aux_sketch ? "true" : "false") << "\n";
    os << "fixed_n = " << c.fixed_n << "\n";
    os << "s1_conf_thresh = " << double_str(c.s1_conf_thresh) << "\n";
    return os.str();
}

/// Parse flat key = value text. Starts from defaults; unknown keys are errors.
inline TrainConfig parse_config(const std::string& text) {
    TrainConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value', got: " + line);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        using namespace detail;
        if (key == "image_size") c.image_size = static_cast<int>(parse_int(key, val));
        else if (key == "channels") c.channels = static_cast<int>(parse_int(key, val));
        else if (key == "k_fg") c.k_fg = static_cast<int>(parse_int(key, val));
        else if (key == "alpha") c.alpha = parse_double(key, val);
        else if (key == "beta") c.beta = parse_double(key, val);
        else if (key == "ema_lambda") c.ema_lambda = parse_double(key, val);
        else if (key == "n_choices") c.n_choices = parse_int_list(key, val);
        else if (key == "lr") c.lr = parse_double(key, val);
        else if (key == "momentum") c.momentum = parse_double(key, val);
        else if (key == "weight_decay") c.weight_decay = parse_double(key, val);
        else if (key == "max_iters") c.max_iters = parse_int(key, val);
        else if (key == "seed") c.seed = static_cast<uint64_t>(parse_int(key, val));
        else if (key == "levels") c.levels = static_cast<int>(parse_int(key, val));
        else if (key == "base_width") c.base_width = static_cast<int>(parse_int(key, val));
        else if (key == "val_interval") c.val_interval = static_cast<int>(parse_int(key, val));
        else if (key == "checkpoint_interval")
            c.checkpoint_interval = static_cast<int>(parse_int(key, val));
        else if (key == "disable_ers") c.disable_ers = parse_bool(key, val);
        else if (key == "disable_mms") c.disable_mms = parse_bool(key, val);
        else if (key == "disable_s1") c.disable_s1 = parse_bool(key, val);
        else if (key == "disable_s2") c.disable_s2 = parse_bool(key, val);
        else if (key == "disable_aux_sketch") c.disable_aux_sketch = parse_bool(key, val);
        else if (key == "fixed_n") c.fixed_n = static_cast<int>(parse_int(key, val));
        else if (key == "s1_conf_thresh") c.s1_conf_thresh = parse_double(key, val);
        else throw ConfigError("unknown key '" + key + "'");
    }
    return c;
}

/// Validate and normalize. n_choices is sorted and deduplicated; everything
/// else must already be consistent.
inline TrainConfig validate_config(TrainConfig c) {
    if (c.image_size < 8) throw ConfigError("image_size must be >= 8");
    if (c.channels < 1) throw ConfigError("channels must be >= 1");
    if (c.k_fg < 1) throw ConfigError("k_fg must be >= 1");
    if (!(c.alpha >= 0.0) || !std::isfinite(c.alpha)) throw ConfigError("alpha must be >= 0");
    if (!(c.beta >= 0.0) || !std::isfinite(c.beta)) throw ConfigError("beta must be >= 0");
    if (!(c.ema_lambda >= 0.0 && c.ema_lambda <= 1.0)) {
        throw ConfigError("ema_lambda must lie in [0,1]");
    }
    if (c.n_choices.empty()) throw ConfigError("n_choices must not be empty");
    std::sort(c.n_choices.begin(), c.n_choices.end());
    c.n_choices.erase(std::unique(c.n_choices.begin(), c.n_choices.end()), c.n_choices.end());
    for (int n : c.n_choices) {
        if (n < 1 || n > c.image_size) {
            throw ConfigError("n_choices entry " + std::to_string(n) +
                              " outside [1, image_size]");
        }
    }
    if (!(c.lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
    if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (c.max_iters < 0) throw ConfigError("max_iters must be >= 0");
    if (c.levels < 2 || c.levels > 8) throw ConfigError("levels must lie in [2,8]");
    if (c.base_width < 1) throw ConfigError("base_width must be >= 1");
    const int stride = 1 << (c.levels - 1);
    if (c.image_size % stride != 0) {
        throw ConfigError("image_size must be divisible by 2^(levels-1) = " +
                          std::to_string(stride));
    }
    if (c.val_interval < 1) throw ConfigError("val_interval must be >= 1");
    if (c.checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
    if (c.fixed_n < 0 || c.fixed_n > c.image_size) {
        throw ConfigError("fixed_n outside [0, image_size]");
    }
    if (!(c.s1_conf_thresh > 0.0 && c.s1_conf_thresh <= 1.0)) {
        throw ConfigError("s1_conf_thresh must lie in (0,1]");
    }

    // Ablation switch consistency.
    const int removals = int(c.disable_s1) + int(c.disable_s2) + int(c.disable_aux_sketch);
    if (removals > 1) {
        throw ConfigError("disable_s1 / disable_s2 / disable_aux_sketch are mutually exclusive");
    }
    if (c.disable_ers && removals > 0) {
        throw ConfigError("disable_ers already removes the reflection path; "
                          "step-level switches are contradictory");
    }
    if (c.fixed_n > 0 && c.disable_mms) {
        throw ConfigError("fixed_n requires the mixing strategy (conflicts with disable_mms)");
    }
    return c;
}

struct LossWeights {
    double alpha = 0.01;
    double beta = 0.01;
};

/// Per-iteration loss components. l_all is always assembled as
/// (l_a + l_b)/2 + alpha*l_rec + beta*l_g, in exactly that order.
struct LossValues {
    double l_a = 0.0;
    double l_b = 0.0;
    double l_rec = 0.0;
    double l_g = 0.0;
    double l_all = 0.0;
};

inline double assemble_total(double l_a, double l_b, double l_rec, double l_g,
                             const LossWeights& w) {
    return (l_a + l_b) * 0.5 + w.alpha * l_rec + w.beta * l_g;
}

inline LossValues make_loss_values(double l_a, double l_b, double l_rec, double l_g,
                                   const LossWeights& w) {
    LossValues lv;
    lv.l_a = l_a;
    lv.l_b = l_b;
    lv.l_rec = l_rec;
    lv.l_g = l_g;
    lv.l_all = assemble_total(l_a, l_b, l_rec, l_g, w);
    return lv;
}

}  // namespace erseg
