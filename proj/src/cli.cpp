#include "geomatch/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "geomatch/datakit.hpp"
#include "geomatch/evaluate.hpp"
#include "geomatch/gradcheck.hpp"
#include "geomatch/matchnet.hpp"
#include "geomatch/optimize.hpp"

namespace geomatch::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// JSON config-file overlay: values apply to options the user did not pass on
// the command line (precedence flags > file > defaults). Keys are the long
// option names without leading dashes; unknown keys are rejected.
struct ConfigOverlay {
    std::map<std::string, std::function<void(const json&)>> setters;
    std::string path;

    void apply(const CLI::App& app) const {
        if (path.empty()) return;
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("malformed config file " + path + ": " + e.what());
        }
        if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
        for (const auto& item : j.items()) {
            const auto it = setters.find(item.key());
            if (it == setters.end()) {
                throw ConfigError("config file: unknown key '" + item.key() + "'");
            }
            const CLI::Option* opt = app.get_option("--" + item.key());
            if (opt->count() > 0) continue;  // explicit flag wins
            try {
                it->second(item.value());
            } catch (const json::exception& e) {
                throw ConfigError("config file: bad value for '" + item.key() + "': " + e.what());
            }
        }
    }
};

template <typename T>
void bind_opt(CLI::App& app, ConfigOverlay& overlay, const std::string& name, T& var,
          const std::string& desc) {
    app.add_option("--" + name, var, desc);
    overlay.setters[name] = [&var](const json& j) { var = j.get<T>(); };
}

int resolve_threads(int flag_value, bool flag_given) {
    if (flag_given) return flag_value;
    if (const char* env = std::getenv("GEOMATCH_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

std::pair<int, int> parse_grid(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("grid must look like HxW, e.g. 20x20");
    const int h = std::stoi(s.substr(0, x));
    const int w = std::stoi(s.substr(x + 1));
    if (h < 2 || w < 2) throw ConfigError("grid dimensions must be >= 2");
    return {h, w};
}

// --- synth ----------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    int num_pairs = 100;
    int image_size = 64;
    std::string family = "composite";
    double strength = 0.3;
    int keypoints = 10;
    double jitter = 0.0;
    int categories = 3;
    uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
    datakit::SynthDatasetConfig cfg;
    cfg.num_pairs = a.num_pairs;
    cfg.image_size = a.image_size;
    cfg.categories = a.categories;
    cfg.seed = a.seed;
    cfg.synth.family = datakit::family_from_string(a.family);
    cfg.synth.strength = a.strength;
    cfg.synth.keypoints = a.keypoints;
    cfg.synth.jitter = a.jitter;

    const datakit::Manifest m = datakit::synth_dataset(a.out, cfg);
    std::cout << "wrote " << m.pairs.size() << " pairs to " << a.out << "/manifest.json\n";
    return 0;
}

// --- train ----------------------------------------------------------------------

struct TrainArgs {
    std::string mode;
    std::string labeled, unlabeled, synth_dir;
    std::string out, init, val, log_path;
    double beta = 1.0;
    double lr = 1e-3;
    int batch_size = 16;
    int epochs = 1;
    uint64_t seed = 0;
    bool freeze_features = true;
    bool symmetric_cycle = false;
    std::string grid = "20x20";
    int threads = 1;
    bool threads_given = false;
    int checkpoint_interval = 0;
    // architecture (ignored when --init is given)
    int image_size = 64;
    int channels = 3;
    std::vector<int> feat_channels = {16, 32, 64};
    int head_c1 = 128;
    int head_c2 = 64;
    double head_init_scale = 1e-3;
};

void require_flag(bool present, const std::string& mode, const std::string& flag) {
    if (!present) throw ConfigError("--mode " + mode + " requires " + flag);
}

void reject_flag(bool present, const std::string& mode, const std::string& flag) {
    if (present) throw ConfigError("--mode " + mode + " does not use " + flag);
}

int run_train(const TrainArgs& a) {
    const optimize::TrainMode mode = optimize::mode_from_string(a.mode);
    if (a.out.empty()) throw ConfigError("train requires --out");

    const bool has_labeled = !a.labeled.empty();
    const bool has_unlabeled = !a.unlabeled.empty();
    const bool has_synth = !a.synth_dir.empty();
    switch (mode) {
        case optimize::TrainMode::self_supervised:
            require_flag(has_synth, a.mode, "--synth-dir");
            reject_flag(has_labeled, a.mode, "--labeled");
            reject_flag(has_unlabeled, a.mode, "--unlabeled");
            break;
        case optimize::TrainMode::supervised:
            require_flag(has_labeled, a.mode, "--labeled");
            reject_flag(has_unlabeled, a.mode, "--unlabeled");
            reject_flag(has_synth, a.mode, "--synth-dir");
            break;
        case optimize::TrainMode::unsupervised:
            require_flag(has_unlabeled, a.mode, "--unlabeled");
            reject_flag(has_labeled, a.mode, "--labeled");
            reject_flag(has_synth, a.mode, "--synth-dir");
            break;
        case optimize::TrainMode::semi_supervised:
            require_flag(has_labeled, a.mode, "--labeled");
            require_flag(has_unlabeled, a.mode, "--unlabeled");
            reject_flag(has_synth, a.mode, "--synth-dir");
            break;
    }

    optimize::TrainConfig cfg;
    cfg.mode = mode;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch_size;
    cfg.beta = a.beta;
    cfg.epochs = a.epochs;
    cfg.seed = a.seed;
    cfg.freeze_features = a.freeze_features;
    cfg.symmetric_cycle = a.symmetric_cycle;
    std::tie(cfg.grid_rows, cfg.grid_cols) = parse_grid(a.grid);
    cfg.threads = resolve_threads(a.threads, a.threads_given);
    cfg.validate();

    matchnet::ModelParams model = [&] {
        if (!a.init.empty()) return matchnet::load_checkpoint(a.init);
        matchnet::NetConfig nc;
        nc.image_size = a.image_size;
        nc.in_channels = a.channels;
        nc.feature_channels = a.feat_channels;
        nc.head_conv1_channels = a.head_c1;
        nc.head_conv2_channels = a.head_c2;
        nc.head_init_scale = a.head_init_scale;
        return matchnet::ModelParams::init(nc, a.seed);
    }();

    auto load_dataset = [&](const std::string& manifest_path) {
        const datakit::Manifest m = datakit::load_manifest(manifest_path);
        return datakit::load_pairs(m, manifest_path, model.config.image_size,
                                   model.config.in_channels);
    };

    std::optional<optimize::Dataset> labeled, unlabeled, synthetic, val;
    if (has_labeled) labeled = load_dataset(a.labeled);
    if (has_unlabeled) unlabeled = load_dataset(a.unlabeled);
    if (has_synth) {
        fs::path p(a.synth_dir);
        if (fs::is_directory(p)) p /= "manifest.json";
        synthetic = load_dataset(p.string());
    }
    if (!a.val.empty()) val = load_dataset(a.val);

    json resolved = cfg.to_json();
    resolved["labeled"] = a.labeled;
    resolved["unlabeled"] = a.unlabeled;
    resolved["synth_dir"] = a.synth_dir;
    resolved["init"] = a.init;
    resolved["out"] = a.out;

    std::ofstream log_stream;
    optimize::LogSink sink;
    if (!a.log_path.empty()) {
        log_stream.open(a.log_path);
        if (!log_stream) throw std::runtime_error("cannot open log file: " + a.log_path);
        sink = [&log_stream](const json& j) { log_stream << j.dump() << "\n"; };
    }

    optimize::Validator validator;
    if (val) {
        const optimize::Dataset& vd = *val;
        const int threads = cfg.threads;
        validator = [&vd, threads](const matchnet::ModelParams& m) {
            return evaluate::evaluate_dataset(m, vd, 0.1, threads).mean_pck;
        };
    }

    optimize::EpochHook hook;
    if (a.checkpoint_interval > 0) {
        hook = [&](int epoch, const matchnet::ModelParams& m) {
            if ((epoch + 1) % a.checkpoint_interval != 0) return;
            json meta{{"config", resolved}, {"seed", a.seed}, {"epoch", epoch}};
            matchnet::save_checkpoint(a.out + ".epoch" + std::to_string(epoch), m, meta);
        };
    }

    const optimize::TrainLog log =
        optimize::train(model, labeled ? &*labeled : nullptr, unlabeled ? &*unlabeled : nullptr,
                        synthetic ? &*synthetic : nullptr, cfg, validator, sink, hook);

    matchnet::save_checkpoint(a.out, model, json{{"config", resolved}, {"seed", a.seed}});

    const double final_loss = log.steps.empty() ? 0.0 : log.steps.back().loss;
    std::cout << "trained " << log.steps.size() << " steps in " << log.wall_seconds
              << " s; final batch loss " << final_loss << "; checkpoint " << a.out << "\n";
    if (!log.epoch_val_pck.empty()) {
        std::cout << "final val PCK@0.1 = " << log.epoch_val_pck.back() << "\n";
    }
    return 0;
}

// --- eval -----------------------------------------------------------------------

struct EvalArgs {
    std::vector<std::string> models;
    std::string data;
    double alpha = 0.1;
    std::string report;
    int threads = 1;
    bool threads_given = false;
};

int run_eval(const EvalArgs& a) {
    if (a.models.empty()) throw ConfigError("eval requires --model");
    if (a.data.empty()) throw ConfigError("eval requires --data");
    const int threads = resolve_threads(a.threads, a.threads_given);

    const datakit::Manifest manifest = datakit::load_manifest(a.data);

    std::vector<std::pair<std::string, evaluate::PckReport>> rows;
    json reports = json::array();
    for (const std::string& path : a.models) {
        json meta;
        const matchnet::ModelParams model = matchnet::load_checkpoint(path, &meta);
        const auto pairs =
            datakit::load_pairs(manifest, a.data, model.config.image_size, model.config.in_channels);
        const evaluate::PckReport rep = evaluate::evaluate_dataset(model, pairs, a.alpha, threads);

        json j = evaluate::report_to_json(rep);
        j["model"] = path;
        j["data"] = a.data;
        j["config"] = {{"alpha", a.alpha}, {"threads", threads}};
        if (meta.contains("seed")) j["model_seed"] = meta["seed"];
        reports.push_back(j);
        rows.push_back({fs::path(path).filename().string(), rep});
    }

    std::cout << "alpha = " << a.alpha << "\n" << evaluate::report_table(rows);
    if (!a.report.empty()) {
        std::ofstream out(a.report);
        if (!out) throw std::runtime_error("cannot write report: " + a.report);
        out << (reports.size() == 1 ? reports[0] : json{{"reports", reports}}).dump(2) << "\n";
    }
    return 0;
}

// --- warp -----------------------------------------------------------------------

struct WarpArgs {
    std::string model, source, target, out;
};

int run_warp(const WarpArgs& a) {
    if (a.model.empty() || a.source.empty() || a.target.empty() || a.out.empty()) {
        throw ConfigError("warp requires --model, --source, --target and --out");
    }
    const matchnet::ModelParams model = matchnet::load_checkpoint(a.model);
    Image source = load_image(a.source);
    Image target = load_image(a.target);
    source = model.config.in_channels == 3 ? to_rgb(source) : to_gray(source);
    target = model.config.in_channels == 3 ? to_rgb(target) : to_gray(target);

    const int s = model.config.image_size;
    const auto transform = matchnet::estimate_transform(resize_bilinear(source, s, s),
                                                        resize_bilinear(target, s, s), model);

    // The estimate maps target-frame points into the source frame, which is
    // exactly the inverse warp needed to render the source in the target's
    // frame.
    const Image warped = geometry::warp_image(source, transform, target.width, target.height);
    const Image panel = hconcat(
        {resize_bilinear(source, target.width, target.height), target, warped});
    save_image(panel, a.out);
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

// --- gradcheck ---------------------------------------------------------------------

struct GradcheckArgs {
    uint64_t seed = 7;
    double tol = 0.0;  // 0 = defaults (1e-5 transforms, 1e-4 network)
    int draws = 100;
};

int run_gradcheck(const GradcheckArgs& a) {
    gradcheck::Options opts;
    opts.seed = a.seed;
    opts.draws = a.draws;
    if (a.tol > 0.0) {
        opts.tol_transform = a.tol;
        opts.tol_network = 10.0 * a.tol;
    }

    const auto tr = gradcheck::check_transform_gradients(opts);
    std::cout << "transform gradients: " << (tr.checks - tr.failures) << "/" << tr.checks
              << " ok, worst rel err " << tr.worst_rel_err << " (" << tr.worst_case << ")\n";
    const auto net = gradcheck::check_network_gradients(opts);
    std::cout << "network gradients:   " << (net.checks - net.failures) << "/" << net.checks
              << " ok, worst rel err " << net.worst_rel_err << " (" << net.worst_case << ")\n";

    if (tr.failures > 0 || net.failures > 0) {
        std::cout << "FAIL\n";
        return 1;
    }
    std::cout << "PASS\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"geomatch: semi-supervised geometric matching of image pairs"};
    app.require_subcommand(1);

    // synth
    SynthArgs sa;
    ConfigOverlay s_overlay;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic pair dataset");
    synth->add_option("--out", sa.out, "output directory")->required();
    bind_opt(*synth, s_overlay, "num-pairs", sa.num_pairs, "number of pairs (default 100)");
    bind_opt(*synth, s_overlay, "image-size", sa.image_size, "square image size (default 64)");
    bind_opt(*synth, s_overlay, "family", sa.family, "transform family: affine|tps|composite");
    bind_opt(*synth, s_overlay, "strength", sa.strength, "transform strength (default 0.3)");
    bind_opt(*synth, s_overlay, "keypoints", sa.keypoints, "keypoints per pair (default 10)");
    bind_opt(*synth, s_overlay, "jitter", sa.jitter, "photometric jitter on targets (default 0)");
    bind_opt(*synth, s_overlay, "categories", sa.categories, "number of categories (default 3)");
    bind_opt(*synth, s_overlay, "seed", sa.seed, "RNG seed (default 0)");
    synth->add_option("--config", s_overlay.path, "JSON config overlay (flags win)");

    // train
    TrainArgs ta;
    ConfigOverlay t_overlay;
    CLI::App* train = app.add_subcommand("train", "train a matching model");
    train->add_option("--mode", ta.mode, "self|sup|unsup|semi")->required();
    bind_opt(*train, t_overlay, "labeled", ta.labeled, "labeled manifest (modes sup/semi)");
    bind_opt(*train, t_overlay, "unlabeled", ta.unlabeled, "unlabeled manifest (modes unsup/semi)");
    bind_opt(*train, t_overlay, "synth-dir", ta.synth_dir, "synthetic dataset dir (mode self)");
    bind_opt(*train, t_overlay, "beta", ta.beta, "cycle-loss weight in the combined objective (default 1)");
    bind_opt(*train, t_overlay, "lr", ta.lr,
         "learning rate (default 1e-3 for this desk-scale model; 5e-6 supervised / 5e-8 "
         "self- and unsupervised are the reference values for a full-scale pretrained backbone)");
    bind_opt(*train, t_overlay, "batch-size", ta.batch_size, "pairs per Adam step (default 16)");
    bind_opt(*train, t_overlay, "epochs", ta.epochs, "epochs over the training set (default 1)");
    bind_opt(*train, t_overlay, "seed", ta.seed, "RNG seed (default 0)");
    bind_opt(*train, t_overlay, "freeze-features", ta.freeze_features,
         "train regression heads only (default true)");
    bind_opt(*train, t_overlay, "symmetric-cycle", ta.symmetric_cycle,
         "average both cycle directions (default false)");
    bind_opt(*train, t_overlay, "grid", ta.grid, "loss grid HxW (default 20x20)");
    bind_opt(*train, t_overlay, "out", ta.out, "output checkpoint path");
    bind_opt(*train, t_overlay, "init", ta.init, "initial checkpoint (architecture comes from it)");
    bind_opt(*train, t_overlay, "val", ta.val, "validation manifest (per-epoch PCK@0.1)");
    bind_opt(*train, t_overlay, "log", ta.log_path, "JSONL training log path");
    bind_opt(*train, t_overlay, "checkpoint-interval", ta.checkpoint_interval,
         "save every N epochs (0 = final only)");
    bind_opt(*train, t_overlay, "image-size", ta.image_size, "network input size (default 64)");
    bind_opt(*train, t_overlay, "channels", ta.channels, "input channels 1|3 (default 3)");
    train->add_option("--feat-channels", ta.feat_channels, "feature conv channels")
        ->delimiter(',');
    t_overlay.setters["feat-channels"] = [&ta](const json& j) {
        ta.feat_channels = j.get<std::vector<int>>();
    };
    bind_opt(*train, t_overlay, "head-c1", ta.head_c1, "head conv1 channels (default 128)");
    bind_opt(*train, t_overlay, "head-c2", ta.head_c2, "head conv2 channels (default 64)");
    bind_opt(*train, t_overlay, "head-init-scale", ta.head_init_scale,
         "stddev of head weight init (default 1e-3)");
    bind_opt(*train, t_overlay, "threads", ta.threads,
         "worker threads (default: GEOMATCH_THREADS or 1)");
    train->add_option("--config", t_overlay.path, "JSON config overlay (flags win)");

    // eval
    EvalArgs ea;
    ConfigOverlay e_overlay;
    CLI::App* eval_cmd = app.add_subcommand("eval", "PCK evaluation of checkpoints");
    eval_cmd->add_option("--model", ea.models, "checkpoint path (repeatable)");
    bind_opt(*eval_cmd, e_overlay, "data", ea.data, "labeled manifest to evaluate on");
    bind_opt(*eval_cmd, e_overlay, "alpha", ea.alpha, "PCK distance threshold (default 0.1)");
    bind_opt(*eval_cmd, e_overlay, "report", ea.report, "write the JSON report here");
    bind_opt(*eval_cmd, e_overlay, "threads", ea.threads,
         "worker threads (default: GEOMATCH_THREADS or 1)");
    eval_cmd->add_option("--config", e_overlay.path, "JSON config overlay (flags win)");

    // warp
    WarpArgs wa;
    CLI::App* warp = app.add_subcommand("warp", "warp a source image onto a target");
    warp->add_option("--model", wa.model, "checkpoint path")->required();
    warp->add_option("--source", wa.source, "source image")->required();
    warp->add_option("--target", wa.target, "target image")->required();
    warp->add_option("--out", wa.out, "output triptych image")->required();

    // gradcheck
    GradcheckArgs ga;
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gc->add_option("--seed", ga.seed, "RNG seed (default 7)");
    gc->add_option("--tol", ga.tol, "relative error tolerance (default 1e-5 / 1e-4)");
    gc->add_option("--draws", ga.draws, "random draws per check (default 100)");

    // CLI11 consumes the vector back to front.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) {
            s_overlay.apply(*synth);
            return run_synth(sa);
        }
        if (train->parsed()) {
            t_overlay.apply(*train);
            ta.threads_given = train->get_option("--threads")->count() > 0;
            return run_train(ta);
        }
        if (eval_cmd->parsed()) {
            e_overlay.apply(*eval_cmd);
            ea.threads_given = eval_cmd->get_option("--threads")->count() > 0;
            return run_eval(ea);
        }
        if (warp->parsed()) return run_warp(wa);
        if (gc->parsed()) return run_gradcheck(ga);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace geomatch::cli
