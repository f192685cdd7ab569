// erseg: training framework driver.
//
// Subcommands:
//   train    semi-supervised (or ablated) training on an indexed dataset
//   eval     per-class Dice/Jaccard/95HD/ASD of a checkpoint on masked data
//   predict  segment one image and write the class mask (plus overlay)
//   synth    generate a deterministic phantom dataset for desk-scale runs

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "erseg/checkpoint.hpp"
#include "erseg/config.hpp"
#include "erseg/data.hpp"
#include "erseg/metrics.hpp"
#include "erseg/network.hpp"
#include "erseg/png_io.hpp"
#include "erseg/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDiverged = 3;

/// Every TrainConfig field as a flag; hyphen and underscore spellings both
/// accepted. Values land directly in `cfg`, so options left unset keep
/// whatever the config file (or the defaults) put there.
void add_config_flags(CLI::App* cmd, erseg::TrainConfig& cfg) {
    cmd->add_option("--image-size,--image_size", cfg.image_size, "Square input edge length");
    cmd->add_option("--channels", cfg.channels, "Image channels");
    cmd->add_option("--k-fg,--k_fg", cfg.k_fg, "Foreground class count");
    cmd->add_option("--alpha", cfg.alpha, "Reconstruction loss weight");
    cmd->add_option("--beta", cfg.beta, "Guidance loss weight");
    cmd->add_option("--ema-lambda,--ema_lambda", cfg.ema_lambda, "Teacher EMA coefficient");
    cmd->add_option("--n-choices,--n_choices", cfg.n_choices, "Puzzle grid sizes sampled per iteration")
        ->delimiter(',');
    cmd->add_option("--lr", cfg.lr, "SGD learning rate");
    cmd->add_option("--momentum", cfg.momentum, "SGD momentum");
    cmd->add_option("--weight-decay,--weight_decay", cfg.weight_decay, "SGD weight decay");
    cmd->add_option("--max-iters,--max_iters", cfg.max_iters, "Training iterations");
    cmd->add_option("--seed", cfg.seed, "Run seed (init, batches, layouts, split)");
    cmd->add_option("--levels", cfg.levels, "U-Net resolution levels");
    cmd->add_option("--base-width,--base_width", cfg.base_width, "Channels at full resolution");
    cmd->add_option("--val-interval,--val_interval", cfg.val_interval,
                    "Iterations between validations (0 = never)");
    cmd->add_option("--checkpoint-interval,--checkpoint_interval", cfg.checkpoint_interval,
                    "Iterations between periodic checkpoints (0 = never)");
    cmd->add_flag("--disable-ers,--disable_ers", cfg.disable_ers,
                  "Drop the whole error-reflection path");
    cmd->add_flag("--disable-mms,--disable_mms", cfg.disable_mms, "Drop puzzle mixing");
    cmd->add_flag("--disable-s1,--disable_s1", cfg.disable_s1,
                  "Replace reconstruction-based unreliable maps with a teacher-confidence cutoff");
    cmd->add_flag("--disable-s2,--disable_s2", cfg.disable_s2,
                  "Drop guidance correction, keep reconstruction");
    cmd->add_flag("--disable-aux-sketch,--disable_aux_sketch", cfg.disable_aux_sketch,
                  "Reconstruction input from the mask boundary only");
    cmd->add_option("--fixed-n,--fixed_n", cfg.fixed_n, "Pin the puzzle grid size (0 = sample)");
    cmd->add_option("--s1-conf-thresh,--s1_conf_thresh", cfg.s1_conf_thresh,
                    "Teacher confidence cutoff in softmax-only mode");
}

/// The config file must be applied before CLI11 writes flag values, so it is
/// pulled out of argv ahead of parsing.
std::string find_config_arg(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return "";
}

erseg::TrainConfig load_base_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream is(path);
    if (!is) throw erseg::IoError("cannot read config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return erseg::parse_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> masked_samples_under(const std::string& root) {
    std::vector<std::pair<std::string, std::string>> out;
    const fs::path images = fs::path(root) / "images";
    const fs::path masks = fs::path(root) / "masks";
    if (!fs::is_directory(images)) throw erseg::IoError("missing directory " + images.string());
    std::vector<fs::path> files;
    for (const auto& ent : fs::directory_iterator(images)) {
        if (ent.is_regular_file() && ent.path().extension() == ".png") files.push_back(ent.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const fs::path m = masks / f.filename();
        if (fs::is_regular_file(m)) out.emplace_back(f.string(), m.string());
    }
    return out;
}

struct EvalArgs {
    std::string checkpoint, data_root, out_file, manifest, split = "all";
    double labeled_ratio = 0.1;
    bool use_teacher = false;
};

int cmd_eval(const EvalArgs& a) {
    const erseg::Checkpoint ck = erseg::load_checkpoint(a.checkpoint);
    const erseg::TrainConfig cfg = erseg::parse_config(ck.config_text);
    const erseg::TrainState state = erseg::from_checkpoint(ck, cfg);
    const erseg::NetworkParams& net = a.use_teacher ? state.teacher : state.student;

    std::vector<std::pair<std::string, std::string>> pairs;
    if (!a.manifest.empty() || a.split != "all") {
        const erseg::DatasetIndex idx =
            a.manifest.empty() ? erseg::index_dataset(a.data_root, a.labeled_ratio, cfg.seed)
                               : erseg::read_index_manifest(a.manifest);
        const auto& side = a.split == "labeled" ? idx.labeled : idx.unlabeled;
        if (a.split != "labeled" && a.split != "unlabeled" && a.split != "all") {
            throw erseg::ConfigError("--split must be all, labeled, or unlabeled");
        }
        if (a.split == "all") {
            for (const auto& r : idx.labeled) pairs.emplace_back(r.image_path, r.mask_path);
            for (const auto& r : idx.unlabeled) {
                if (!r.mask_path.empty()) pairs.emplace_back(r.image_path, r.mask_path);
            }
        } else {
            for (const auto& r : side) {
                if (!r.mask_path.empty()) pairs.emplace_back(r.image_path, r.mask_path);
            }
        }
    } else {
        pairs = masked_samples_under(a.data_root);
    }
    if (pairs.empty()) throw erseg::IoError("no masked samples to evaluate");

    std::vector<std::string> ids;
    std::vector<erseg::MetricsReport> reports;
    for (const auto& [img_path, mask_path] : pairs) {
        const erseg::Image img = erseg::load_image_file(img_path, cfg);
        const erseg::LabelMask gt = erseg::load_mask_file(mask_path, cfg);
        const erseg::LabelMask pred = erseg::argmax_labels(erseg::infer_seg(net, img));
        reports.push_back(erseg::evaluate_case(pred, gt, cfg.k_fg));
        ids.push_back(fs::path(img_path).stem().string());
    }
    const std::string csv = erseg::metrics_csv(ids, reports, cfg.k_fg);
    std::cout << csv;
    if (!a.out_file.empty()) {
        std::ofstream os(a.out_file);
        if (!os) throw erseg::IoError("cannot write " + a.out_file);
        os << csv;
    }
    std::cerr << "evaluated " << reports.size() << " cases, mean foreground dice "
              << erseg::double_str(erseg::mean_dice_of(reports)) << "\n";
    return kExitOk;
}

struct PredictArgs {
    std::string checkpoint, image, out, overlay;
    bool use_teacher = false;
};

int cmd_predict(const PredictArgs& a) {
    const erseg::Checkpoint ck = erseg::load_checkpoint(a.checkpoint);
    const erseg::TrainConfig cfg = erseg::parse_config(ck.config_text);
    const erseg::TrainState state = erseg::from_checkpoint(ck, cfg);
    const erseg::NetworkParams& net = a.use_teacher ? state.teacher : state.student;

    const erseg::Image img = erseg::load_image_file(a.image, cfg);
    const erseg::LabelMask pred = erseg::argmax_labels(erseg::infer_seg(net, img));
    erseg::write_png_mask(a.out, pred);

    if (!a.overlay.empty()) {
        static const double palette[4][3] = {
            {0.86, 0.20, 0.20}, {0.20, 0.78, 0.27}, {0.24, 0.39, 0.90}, {0.90, 0.78, 0.24}};
        erseg::Image base = erseg::to_channels(img, 3);
        for (int y = 0; y < base.h; ++y) {
            for (int x = 0; x < base.w; ++x) {
                const int cls = pred.at(y, x);
                if (cls == 0) continue;
                const double* col = palette[(cls - 1) % 4];
                for (int c = 0; c < 3; ++c) {
                    base.at(y, x, c) = 0.55 * base.at(y, x, c) + 0.45 * col[c];
                }
            }
        }
        erseg::write_png_rgb(a.overlay, base);
    }
    std::cerr << "wrote " << a.out << (a.overlay.empty() ? "" : " and " + a.overlay) << "\n";
    return kExitOk;
}

struct SynthArgs {
    std::string out_dir = "phantoms";
    int count = 100;
    erseg::PhantomSpec spec;
};

int cmd_synth(const SynthArgs& a) {
    if (a.count < 1) throw erseg::ConfigError("--count must be >= 1");
    a.spec.validate();
    fs::create_directories(fs::path(a.out_dir) / "images");
    fs::create_directories(fs::path(a.out_dir) / "masks");

    nlohmann::json manifest;
    manifest["count"] = a.count;
    manifest["size"] = a.spec.size;
    manifest["chambers"] = a.spec.chambers;
    manifest["contrast"] = a.spec.contrast;
    manifest["speckle_strength"] = a.spec.speckle_strength;
    manifest["blur_sigma"] = a.spec.blur_sigma;
    manifest["base_seed"] = a.spec.seed;
    nlohmann::json files = nlohmann::json::array();

    for (int i = 0; i < a.count; ++i) {
        erseg::PhantomSpec spec = a.spec;
        spec.seed = a.spec.seed + static_cast<uint64_t>(i);
        const auto [img, mask] = erseg::generate_phantom(spec);
        char name[32];
        std::snprintf(name, sizeof(name), "p%04d_0.png", i);
        const std::string img_rel = std::string("images/") + name;
        const std::string mask_rel = std::string("masks/") + name;
        erseg::write_png_gray((fs::path(a.out_dir) / img_rel).string(), img);
        erseg::write_png_mask((fs::path(a.out_dir) / mask_rel).string(), mask);
        files.push_back({{"image", img_rel}, {"mask", mask_rel}, {"seed", spec.seed}});
    }
    manifest["files"] = files;
    std::ofstream os(fs::path(a.out_dir) / "manifest.json");
    if (!os) throw erseg::IoError("cannot write manifest under " + a.out_dir);
    os << manifest.dump(2) << '\n';
    std::cerr << "wrote " << a.count << " phantom pairs under " << a.out_dir << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string data_root, out_dir = "run", config_path, resume;
    double labeled_ratio = 0.1;
};

int cmd_train(const TrainArgs& a, const erseg::TrainConfig& cfg) {
    erseg::validate_config(cfg);
    if (a.data_root.empty()) {
        throw erseg::ConfigError("--data is required (or set ERSEG_DATA)");
    }
    const erseg::DatasetIndex idx = erseg::index_dataset(a.data_root, a.labeled_ratio, cfg.seed);
    fs::create_directories(a.out_dir);
    erseg::write_index_manifest(idx, (fs::path(a.out_dir) / "split_manifest.json").string());
    const erseg::TrainPool pool = erseg::load_pool(idx, cfg);
    const erseg::TrainRunResult res =
        erseg::run_training(cfg, pool, a.out_dir, a.resume, &std::cerr);
    std::cerr << "training finished at iter " << res.state.iter << "; best val dice "
              << erseg::double_str(res.state.best_dice) << "; artifacts in " << a.out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised segmentation trainer with error reflection and puzzle mixing"};
    app.require_subcommand(1);

    erseg::TrainConfig cfg;
    TrainArgs train_args;
    EvalArgs eval_args;
    PredictArgs predict_args;
    SynthArgs synth_args;

    try {
        cfg = load_base_config(find_config_arg(argc, argv));
    } catch (const erseg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }

    CLI::App* train = app.add_subcommand("train", "Run the training loop");
    train->add_option("--data", train_args.data_root, "Dataset root (images/ + masks/)")
        ->envname("ERSEG_DATA");
    train->add_option("--labeled-ratio,--labeled_ratio", train_args.labeled_ratio,
                      "Fraction of patients treated as labeled");
    train->add_option("--out", train_args.out_dir, "Output directory");
    train->add_option("--config", train_args.config_path, "Config file (key = value lines)");
    train->add_option("--resume", train_args.resume, "Checkpoint to continue from");
    add_config_flags(train, cfg);

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
    eval->add_option("--data", eval_args.data_root, "Dataset root")->envname("ERSEG_DATA");
    eval->add_option("--split", eval_args.split, "all, labeled, or unlabeled");
    eval->add_option("--labeled-ratio,--labeled_ratio", eval_args.labeled_ratio,
                     "Split ratio when --split is labeled/unlabeled");
    eval->add_option("--manifest", eval_args.manifest, "Evaluate a recorded split manifest");
    eval->add_option("--out", eval_args.out_file, "Also write the CSV here");
    eval->add_flag("--use-teacher,--use_teacher", eval_args.use_teacher,
                   "Evaluate the teacher weights instead of the student");

    CLI::App* predict = app.add_subcommand("predict", "Segment a single image");
    predict->add_option("--checkpoint", predict_args.checkpoint, "Checkpoint file")->required();
    predict->add_option("--image", predict_args.image, "Input image")->required();
    predict->add_option("--out", predict_args.out, "Output mask PNG")->required();
    predict->add_option("--overlay", predict_args.overlay, "Optional RGB overlay PNG");
    predict->add_flag("--use-teacher,--use_teacher", predict_args.use_teacher,
                      "Use the teacher weights");

    CLI::App* synth = app.add_subcommand("synth", "Generate a phantom dataset");
    synth->add_option("--out", synth_args.out_dir, "Output directory");
    synth->add_option("--count", synth_args.count, "Number of phantom pairs");
    synth->add_option("--size", synth_args.spec.size, "Image edge length");
    synth->add_option("--chambers", synth_args.spec.chambers, "Foreground ellipse count (1-4)");
    synth->add_option("--contrast", synth_args.spec.contrast, "Foreground/background gap");
    synth->add_option("--speckle", synth_args.spec.speckle_strength, "Multiplicative noise strength");
    synth->add_option("--blur", synth_args.spec.blur_sigma, "Edge blur sigma");
    synth->add_option("--seed", synth_args.spec.seed, "Base seed (pair i uses seed+i)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(train_args, cfg);
        if (app.got_subcommand(eval)) return cmd_eval(eval_args);
        if (app.got_subcommand(predict)) return cmd_predict(predict_args);
        if (app.got_subcommand(synth)) return cmd_synth(synth_args);
    } catch (const erseg::TrainingDivergence& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const erseg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
