#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "erseg/autograd.hpp"
#include "erseg/checkpoint.hpp"
#include "erseg/config.hpp"
#include "erseg/data.hpp"
#include "erseg/losses.hpp"
#include "erseg/metrics.hpp"
#include "erseg/network.hpp"
#include "erseg/puzzle.hpp"
#include "erseg/reflection.hpp"
#include "erseg/sketch.hpp"
#include "erseg/types.hpp"

namespace erseg {

struct TrainingDivergence : std::runtime_error {
    int64_t iter;
    explicit TrainingDivergence(int64_t it, const std::string& what)
        : std::runtime_error(what), iter(it) {}
};

/// Which pipeline stages a config enables. The removal switches mirror the
/// ablation grid: error reflection off entirely, reconstruction replaced by
/// a teacher-confidence threshold, guidance off, image sketch off, mixing
/// off, or the patch count pinned.
struct PipelineMode {
    bool mixing = true;
    bool reconstruction = true;
    bool guidance = true;
    bool s1_softmax_substitute = false;
    bool aux_sketch = true;
    int fixed_n = 0;

    std::string describe() const {
        std::string s;
        s += "mix=" + std::string(mixing ? "on" : "off");
        s += ",rec=" + std::string(reconstruction ? "on" : s1_softmax_substitute ? "conf" : "off");
        s += ",guide=" + std::string(guidance ? "on" : "off");
        s += ",sketch=" + std::string(aux_sketch ? "canny+boundary" : "boundary");
        if (fixed_n > 0) s += ",n=" + std::to_string(fixed_n);
        return s;
    }
};

inline PipelineMode ablation_mode(const TrainConfig& cfg) {
    PipelineMode m;
    m.mixing = !cfg.disable_mms;
    m.fixed_n = cfg.fixed_n;
    if (cfg.disable_ers) {
        m.reconstruction = false;
        m.guidance = false;
        m.s1_softmax_substitute = false;
        m.aux_sketch = false;
        return m;
    }
    m.reconstruction = !cfg.disable_s1;
    m.s1_softmax_substitute = cfg.disable_s1;
    m.guidance = !cfg.disable_s2;
    m.aux_sketch = !cfg.disable_aux_sketch;
    return m;
}

/// Substitute unreliable-region map: pixels where the teacher's max-channel
/// confidence falls below the threshold.
inline BinaryMask confidence_unreliable_mask(const ProbMap& teacher, double thresh) {
    BinaryMask m(teacher.h, teacher.w);
    for (int y = 0; y < teacher.h; ++y) {
        for (int x = 0; x < teacher.w; ++x) {
            if (pixel_confidence(teacher, y, x) < thresh) m.at(y, x) = 1;
        }
    }
    return m;
}

struct TrainState {
    TrainConfig cfg;
    int64_t iter = 0;
    NetworkParams student;
    NetworkParams teacher;
    SgdState opt;
    Rng rng_batch;
    Rng rng_layout;
    double best_dice = -1.0;
};

namespace detail {
inline constexpr uint64_t kStreamInit = 1;
inline constexpr uint64_t kStreamBatch = 2;
inline constexpr uint64_t kStreamLayout = 3;
}  // namespace detail

/// Teacher starts as an exact copy of the freshly initialized student.
inline TrainState init_train_state(const TrainConfig& cfg) {
    validate_config(cfg);
    UNetArch arch;
    arch.levels = cfg.levels;
    arch.base_width = cfg.base_width;
    arch.in_channels = cfg.channels;
    arch.k_tot = cfg.k_tot();
    TrainState st;
    st.cfg = cfg;
    Rng init_rng = Rng::child(cfg.seed, detail::kStreamInit);
    st.student = build_network(arch, init_rng);
    st.teacher = st.student;
    st.opt = SgdState::init(st.student);
    st.rng_batch = Rng::child(cfg.seed, detail::kStreamBatch);
    st.rng_layout = Rng::child(cfg.seed, detail::kStreamLayout);
    return st;
}

/// One labeled sample plus, outside purely supervised runs, one unlabeled.
struct BatchPair {
    Image xl;
    LabelMask yl;
    std::optional<Image> xu;
};

/// Introspection hook for tests: the step's whole graph plus the node ids
/// and masks needed to assert gradient routing.
struct StepDebug {
    ag::Graph graph;
    std::vector<std::pair<std::string, int>> student_ids;
    std::vector<std::pair<std::string, int>> teacher_ids;
    int teacher_probs_id = -1;
    int guidance_target_id = -1;  // teacher-side masked node feeding the detach
    int student_unmixed_id = -1;
    int total_loss_id = -1;
    int n_used = 0;
    std::optional<MixLayout> layout;
    LabelMask pseudo;
    BinaryMask unreliable;
    BinaryMask guide;
    LossValues losses;
};

namespace detail {

inline void check_batch(const BatchPair& b, const TrainConfig& cfg) {
    auto check_img = [&cfg](const Image& im, const char* what) {
        if (im.h != cfg.image_size || im.w != cfg.image_size || im.c != cfg.channels) {
            throw std::invalid_argument(std::string("train_step: ") + what +
                                        " does not match configured size/channels");
        }
    };
    check_img(b.xl, "labeled image");
    if (b.yl.h != cfg.image_size || b.yl.w != cfg.image_size) {
        throw std::invalid_argument("train_step: labeled mask size mismatch");
    }
    b.yl.validate(cfg.k_fg);
    if (b.xu) check_img(*b.xu, "unlabeled image");
}

}  // namespace detail

/// One full iteration: pseudo-labeling, reconstruction reflection, puzzle
/// mixing, guidance correction, combined backward, SGD step, EMA update.
/// Throws TrainingDivergence on a non-finite total loss (before any update).
inline LossValues train_step(TrainState& st, const BatchPair& batch, StepDebug* dbg = nullptr) {
    const TrainConfig& cfg = st.cfg;
    detail::check_batch(batch, cfg);
    const PipelineMode mode = ablation_mode(cfg);
    const bool have_u = batch.xu.has_value();

    ag::Graph g;
    const BoundNet sb = bind(g, st.student, true);
    // Teacher tensors are bound with gradients enabled on purpose: no loss
    // path may reach them, and tests assert their gradients stay zero.
    const BoundNet tb = bind(g, st.teacher, true);
    const SketchParams sketch_params{};
    const SsimParams ssim_params{};

    // (1) teacher forward + argmax pseudo-labels
    int t_probs = -1;
    ProbMap t_map;
    LabelMask pseudo;
    Tensor xu_t;
    if (have_u) {
        xu_t = batch.xu->to_tensor();
        const int t_trunk = forward_trunk(g, tb, g.constant(xu_t));
        t_probs = forward_seg_probs(g, tb, t_trunk);
        t_map = ProbMap::from_tensor(g.val(t_probs));
        pseudo = argmax_labels(t_map);
    }

    // (2)+(3) merged sketch -> student reconstruction -> SSIM loss
    int l_rec = -1;
    int recon = -1;
    if (have_u && mode.reconstruction) {
        const Image sketch_img = build_reflection_input(*batch.xu, pseudo, sketch_params, cfg);
        const int rec_trunk = forward_trunk(g, sb, g.constant(sketch_img.to_tensor()));
        recon = forward_recon_node(g, sb, rec_trunk);
        l_rec = ssim_loss_node(g, recon, xu_t, ssim_params);
    }

    // (4) puzzle mixing and the two segmentation losses
    int l_a = -1, l_b = -1;
    int pu_s = -1;
    std::optional<MixLayout> layout;
    int n_used = 0;
    if (mode.mixing && have_u) {
        const int n = cfg.fixed_n > 0
                          ? cfg.fixed_n
                          : cfg.n_choices[static_cast<size_t>(st.rng_layout.uniform_int(
                                static_cast<int64_t>(cfg.n_choices.size())))];
        n_used = n;
        layout = make_layout(cfg.image_size, cfg.image_size, n, st.rng_layout);
        const auto [xa, xb] = mix(batch.xl, *batch.xu, *layout);
        const auto [ya, yb] = mix_labels(batch.yl, pseudo, *layout);
        const int pa = forward_seg_probs(g, sb, forward_trunk(g, sb, g.constant(xa.to_tensor())));
        const int pb = forward_seg_probs(g, sb, forward_trunk(g, sb, g.constant(xb.to_tensor())));
        l_a = seg_loss_node(g, pa, ya);
        l_b = seg_loss_node(g, pb, yb);
        // (5a) reassemble the student's prediction on the raw unlabeled image
        if (mode.guidance) pu_s = inverse_mix_node(g, pa, pb, *layout);
    } else {
        const int pl = forward_seg_probs(g, sb, forward_trunk(g, sb, g.constant(batch.xl.to_tensor())));
        l_a = seg_loss_node(g, pl, batch.yl);
        if (have_u) {
            const int pu =
                forward_seg_probs(g, sb, forward_trunk(g, sb, g.constant(batch.xu->to_tensor())));
            l_b = seg_loss_node(g, pu, pseudo);
            if (mode.guidance) pu_s = pu;
        } else {
            l_b = l_a;  // labeled-only batch degrades to plain supervised CE+Dice
        }
    }

    // (5b) error map -> unreliable region -> confidence handoff -> L^g
    int l_g = -1;
    int t_mc = -1;
    BinaryMask ur, gm;
    if (have_u && mode.guidance && pu_s >= 0) {
        if (mode.s1_softmax_substitute) {
            ur = confidence_unreliable_mask(t_map, cfg.s1_conf_thresh);
        } else {
            ur = unreliable_mask(error_map(Image::from_tensor(g.val(recon)), *batch.xu));
        }
        const ProbMap ps_map = ProbMap::from_tensor(g.val(pu_s));
        const auto [ps_ur, pt_ur] = decouple(ps_map, t_map, ur);
        gm = guidance_mask(ps_ur, pt_ur);
        const Tensor ur_t = ur.to_tensor();
        const Tensor gm_t = gm.to_tensor();
        const int s_lc = g.mul_mask_hw(g.mul_mask_hw(pu_s, ur_t), gm_t);
        t_mc = g.mul_mask_hw(g.mul_mask_hw(t_probs, ur_t), gm_t);
        l_g = guidance_loss_node(g, s_lc, t_mc);
    }

    // (6) total loss; disabled components enter as exact zeros
    const LossWeights w{cfg.alpha, cfg.beta};
    if (l_rec < 0) l_rec = g.constant(Tensor::scalar(0.0));
    if (l_g < 0) l_g = g.constant(Tensor::scalar(0.0));
    const int l_all = total_loss_node(g, l_a, l_b, l_rec, l_g, w);
    const LossValues lv = make_loss_values(g.val(l_a).value(), g.val(l_b).value(),
                                           g.val(l_rec).value(), g.val(l_g).value(), w);
    if (!std::isfinite(lv.l_all)) {
        throw TrainingDivergence(
            st.iter, "training diverged at iteration " + std::to_string(st.iter) +
                         ": l_a=" + double_str(lv.l_a) + " l_b=" + double_str(lv.l_b) +
                         " l_rec=" + double_str(lv.l_rec) + " l_g=" + double_str(lv.l_g));
    }

    g.backward(l_all);
    std::vector<Tensor> grads;
    grads.reserve(sb.ids.size());
    for (const auto& [name, id] : sb.ids) grads.push_back(g.grad_or_zeros(id));
    sgd_step(st.student, st.opt, grads, cfg.lr, cfg.momentum, cfg.weight_decay);

    // (7) EMA after the descent step
    ema_update(st.teacher, st.student, cfg.ema_lambda);
    st.iter += 1;

    if (dbg) {
        dbg->student_ids = sb.ids;
        dbg->teacher_ids = tb.ids;
        dbg->teacher_probs_id = t_probs;
        dbg->guidance_target_id = t_mc;
        dbg->student_unmixed_id = pu_s;
        dbg->total_loss_id = l_all;
        dbg->n_used = n_used;
        dbg->layout = layout;
        dbg->pseudo = pseudo;
        dbg->unreliable = ur;
        dbg->guide = gm;
        dbg->losses = lv;
        dbg->graph = std::move(g);
    }
    return lv;
}

// ---- validation ----------------------------------------------------------

inline std::vector<MetricsReport> evaluate_set(
    const NetworkParams& net, const std::vector<std::pair<Image, LabelMask>>& samples, int k_fg) {
    if (samples.empty()) throw std::invalid_argument("evaluate_set: empty sample set");
    std::vector<MetricsReport> out;
    out.reserve(samples.size());
    for (const auto& [img, gt] : samples) {
        out.push_back(evaluate_case(argmax_labels(infer_seg(net, img)), gt, k_fg));
    }
    return out;
}

inline double mean_dice_of(const std::vector<MetricsReport>& reports) {
    double acc = 0.0;
    for (const auto& r : reports) acc += r.mean_dice;
    return acc / static_cast<double>(reports.size());
}

// ---- checkpoint conversion ----------------------------------------------

inline Checkpoint to_checkpoint(const TrainState& st) {
    Checkpoint ck;
    ck.config_text = serialize_config(st.cfg);
    ck.iter = st.iter;
    ck.best_dice = st.best_dice;
    ck.rng_batch = st.rng_batch.state();
    ck.rng_layout = st.rng_layout.state();
    ck.student = st.student.tensors;
    ck.teacher = st.teacher.tensors;
    ck.velocity = st.opt.velocity;
    return ck;
}

/// Rebuilds a state from a checkpoint. The caller's config must serialize
/// identically to the stored one, so continuation is exact.
inline TrainState from_checkpoint(const Checkpoint& ck, const TrainConfig& cfg) {
    if (serialize_config(cfg) != ck.config_text) {
        throw CheckpointError("checkpoint config does not match the requested config");
    }
    TrainState st = init_train_state(cfg);
    st.iter = ck.iter;
    st.best_dice = ck.best_dice;
    st.rng_batch.restore(ck.rng_batch);
    st.rng_layout.restore(ck.rng_layout);
    restore_tensors(st.student, ck.student, "student");
    restore_tensors(st.teacher, ck.teacher, "teacher");
    NetworkParams vel_skel = st.student;
    restore_tensors(vel_skel, ck.velocity, "velocity");
    st.opt.velocity = vel_skel.tensors;
    return st;
}

// ---- the loop ------------------------------------------------------------

inline BatchPair sample_batch(const TrainPool& pool, Rng& rng) {
    BatchPair b;
    const auto li = rng.uniform_int(static_cast<int64_t>(pool.labeled.size()));
    b.xl = pool.labeled[static_cast<size_t>(li)].first;
    b.yl = pool.labeled[static_cast<size_t>(li)].second;
    if (!pool.unlabeled.empty()) {
        const auto ui = rng.uniform_int(static_cast<int64_t>(pool.unlabeled.size()));
        b.xu = pool.unlabeled[static_cast<size_t>(ui)];
    }
    return b;
}

struct TrainRunResult {
    TrainState state;
    double final_val_dice = -1.0;
    std::string log_path;
    std::string best_checkpoint;
    std::string final_checkpoint;
    std::string metrics_path;
};

/// Full training run: logging, periodic validation with best-checkpoint
/// tracking, periodic + final checkpoints, final metrics report. Resumable
/// with bit-identical continuation. Progress lines go to `progress` if set.
inline TrainRunResult run_training(const TrainConfig& cfg, const TrainPool& pool,
                                   const std::string& out_dir,
                                   const std::string& resume_path = "",
                                   std::ostream* progress = nullptr) {
    namespace fs = std::filesystem;
    validate_config(cfg);
    fs::create_directories(out_dir);

    TrainRunResult result;
    TrainState& st = result.state;
    const bool resuming = !resume_path.empty();
    st = resuming ? from_checkpoint(load_checkpoint(resume_path), cfg) : init_train_state(cfg);

    {
        std::ofstream cs(fs::path(out_dir) / "config_effective.txt");
        cs << serialize_config(cfg);
    }
    result.log_path = (fs::path(out_dir) / "train_log.csv").string();
    result.best_checkpoint = (fs::path(out_dir) / "ckpt_best.bin").string();
    result.final_checkpoint = (fs::path(out_dir) / "ckpt_final.bin").string();
    result.metrics_path = (fs::path(out_dir) / "metrics_final.csv").string();

    // append on resume, but a brand-new log still gets its header
    const bool fresh_log =
        !resuming || !fs::exists(result.log_path) || fs::file_size(result.log_path) == 0;
    std::ofstream log(result.log_path, resuming ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open training log: " + result.log_path);
    if (fresh_log) log << "iter,l_a,l_b,l_rec,l_g,l_all,lr\n";

    const auto& val_set = pool.val.empty() ? pool.labeled : pool.val;
    const PipelineMode mode = ablation_mode(cfg);
    if (progress) {
        *progress << "pipeline: " << mode.describe() << "; labeled=" << pool.labeled.size()
                  << " unlabeled=" << pool.unlabeled.size() << " val=" << val_set.size() << "\n";
    }

    while (st.iter < cfg.max_iters) {
        const int64_t it = st.iter;
        const BatchPair batch = sample_batch(pool, st.rng_batch);
        LossValues lv;
        try {
            lv = train_step(st, batch);
        } catch (const TrainingDivergence&) {
            save_checkpoint(to_checkpoint(st), (fs::path(out_dir) / "ckpt_diverged.bin").string());
            throw;
        }
        log << it << ',' << double_str(lv.l_a) << ',' << double_str(lv.l_b) << ','
            << double_str(lv.l_rec) << ',' << double_str(lv.l_g) << ',' << double_str(lv.l_all)
            << ',' << double_str(cfg.lr) << '\n';
        log.flush();

        const int64_t done = st.iter;
        if (cfg.val_interval > 0 && done % cfg.val_interval == 0) {
            const double d = mean_dice_of(evaluate_set(st.student, val_set, cfg.k_fg));
            if (progress) {
                *progress << "iter " << done << " l_all=" << double_str(lv.l_all)
                          << " val_dice=" << double_str(d) << "\n";
            }
            if (d > st.best_dice) {
                st.best_dice = d;
                save_checkpoint(to_checkpoint(st), result.best_checkpoint);
            }
        }
        if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0) {
            save_checkpoint(to_checkpoint(st),
                            (fs::path(out_dir) / ("ckpt_iter" + std::to_string(done) + ".bin")).string());
        }
    }

    save_checkpoint(to_checkpoint(st), result.final_checkpoint);
    const auto reports = evaluate_set(st.student, val_set, cfg.k_fg);
    result.final_val_dice = mean_dice_of(reports);
    std::vector<std::string> ids;
    ids.reserve(reports.size());
    for (size_t i = 0; i < reports.size(); ++i) ids.push_back("val" + std::to_string(i));
    std::ofstream ms(result.metrics_path);
    ms << metrics_csv(ids, reports, cfg.k_fg);
    if (progress) {
        *progress << "final val_dice=" << double_str(result.final_val_dice) << " over "
                  << reports.size() << " cases\n";
    }
    return result;
}

}  // namespace erseg
