#include "geomatch/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "geomatch/objective.hpp"
#include "geomatch/util.hpp"

namespace geomatch::optimize {

using matchnet::ModelParams;

void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, long step, const AdamConfig& cfg) {
    if (w.size() != g.size() || w.size() != m.size() || w.size() != v.size()) {
        throw std::invalid_argument("adam_update: shape mismatch");
    }
    if (step < 1) throw std::invalid_argument("adam_update: step must be >= 1");

    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

AdamState AdamState::init(const ModelParams& params) {
    AdamState s;
    params.visit([&s](const std::string&, const std::vector<double>& v) {
        s.m.emplace_back(v.size(), 0.0);
        s.v.emplace_back(v.size(), 0.0);
    });
    return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamConfig& cfg) {
    ++state.step;
    size_t slot = 0;
    std::vector<const std::vector<double>*> grad_arrays;
    grads.visit([&grad_arrays](const std::string&, const std::vector<double>& v) {
        grad_arrays.push_back(&v);
    });
    params.visit([&](const std::string& name, std::vector<double>& w) {
        if (slot >= grad_arrays.size() || slot >= state.m.size()) {
            throw std::invalid_argument("adam_step: state/gradient layout mismatch");
        }
        const std::vector<double>& g = *grad_arrays[slot];
        if (g.size() != w.size()) {
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
        }
        adam_update(w, g, state.m[slot], state.v[slot], state.step, cfg);
        ++slot;
    });
}

// --- Config -----------------------------------------------------------------------

TrainMode mode_from_string(const std::string& s) {
    if (s == "self") return TrainMode::self_supervised;
    if (s == "sup") return TrainMode::supervised;
    if (s == "unsup") return TrainMode::unsupervised;
    if (s == "semi") return TrainMode::semi_supervised;
    throw ConfigError("unknown training mode: " + s);
}

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::self_supervised: return "self";
        case TrainMode::supervised: return "sup";
        case TrainMode::unsupervised: return "unsup";
        case TrainMode::semi_supervised: return "semi";
    }
    return "sup";
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (beta < 0.0) throw ConfigError("beta must be nonnegative");
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (grid_rows < 2 || grid_cols < 2) throw ConfigError("loss grid must be at least 2x2");
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"mode", to_string(mode)},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"beta", beta},
            {"epochs", epochs},
            {"seed", seed},
            {"freeze_features", freeze_features},
            {"symmetric_cycle", symmetric_cycle},
            {"grid", {grid_rows, grid_cols}},
            {"threads", threads},
            {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}}};
}

// --- Scheduling --------------------------------------------------------------------

std::vector<std::vector<BatchItem>> epoch_batches(int n_labeled, int n_unlabeled, int batch_size,
                                                  uint64_t seed, int epoch) {
    if (n_labeled < 0 || n_unlabeled < 0 || n_labeled + n_unlabeled == 0) {
        throw std::invalid_argument("epoch_batches: need at least one pair");
    }
    if (batch_size < 1) throw std::invalid_argument("epoch_batches: batch_size must be >= 1");

    std::vector<BatchItem> items;
    items.reserve(n_labeled + n_unlabeled);
    for (int i = 0; i < n_labeled; ++i) items.push_back({i, true});
    for (int i = 0; i < n_unlabeled; ++i) items.push_back({i, false});

    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(epoch)));
    std::shuffle(items.begin(), items.end(), rng);

    std::vector<std::vector<BatchItem>> batches;
    for (size_t start = 0; start < items.size(); start += batch_size) {
        const size_t end = std::min(items.size(), start + batch_size);
        batches.emplace_back(items.begin() + start, items.begin() + end);
    }
    return batches;
}

// --- Training loop ------------------------------------------------------------------

namespace {

void check_dataset_for_mode(const TrainConfig& cfg, const Dataset* labeled,
                            const Dataset* unlabeled, const Dataset* synthetic) {
    auto missing = [](const Dataset* d) { return d == nullptr || d->empty(); };
    switch (cfg.mode) {
        case TrainMode::self_supervised:
            if (missing(synthetic)) throw ConfigError("mode self requires a synthetic dataset");
            for (const auto& p : *synthetic) {
                if (!p.record.gt_transform) {
                    throw ConfigError("mode self requires ground-truth transforms on every pair");
                }
            }
            break;
        case TrainMode::supervised:
            if (missing(labeled)) throw ConfigError("mode sup requires a labeled dataset");
            break;
        case TrainMode::unsupervised:
            if (missing(unlabeled)) throw ConfigError("mode unsup requires an unlabeled dataset");
            break;
        case TrainMode::semi_supervised:
            if (missing(labeled)) throw ConfigError("mode semi requires a labeled dataset");
            if (missing(unlabeled)) throw ConfigError("mode semi requires an unlabeled dataset");
            break;
    }
    if (cfg.mode == TrainMode::supervised || cfg.mode == TrainMode::semi_supervised) {
        for (const auto& p : *labeled) {
            if (!p.record.labeled || p.kp_source_norm.empty()) {
                throw ConfigError("labeled dataset contains a pair without keypoints");
            }
        }
    }
}

// Forward/backward for one pair; returns its loss contribution (already
// weighted for unlabeled terms) and accumulates weight gradients.
double process_pair(const datakit::LoadedPair& lp, bool labeled_role, const ModelParams& model,
                    const TrainConfig& cfg, const geometry::Grid& grid, ModelParams& grad) {
    const bool trace_feats = !cfg.freeze_features;

    if (labeled_role) {
        matchnet::ForwardTrace trace =
            matchnet::forward_pair(lp.source, lp.target, model, trace_feats);
        objective::LossValue loss;
        if (cfg.mode == TrainMode::self_supervised) {
            loss = objective::grid_loss(trace.transform, *lp.record.gt_transform, grid);
        } else {
            loss = objective::keypoint_loss(trace.transform, lp.kp_target_norm, lp.kp_source_norm);
        }
        std::array<double, geometry::kCompositeParamCount> d{};
        std::copy(loss.grad.begin(), loss.grad.end(), d.begin());
        matchnet::backward(trace, model, d, grad);
        return loss.value;
    }

    // Cycle term: estimate both directions.
    matchnet::ForwardTrace ba = matchnet::forward_pair(lp.source, lp.target, model, trace_feats);
    matchnet::ForwardTrace ab = matchnet::forward_pair(lp.target, lp.source, model, trace_feats);
    objective::LossValue loss = objective::cycle_loss(ab.transform, ba.transform, grid);
    const double scale = cfg.beta;
    constexpr int np = geometry::kCompositeParamCount;
    if (cfg.symmetric_cycle) {
        // Mean of both cycle directions; rev's leading block belongs to our
        // BA transform and vice versa.
        objective::LossValue rev = objective::cycle_loss(ba.transform, ab.transform, grid);
        loss.value = 0.5 * (loss.value + rev.value);
        for (int k = 0; k < np; ++k) {
            loss.grad[k] = 0.5 * (loss.grad[k] + rev.grad[np + k]);
            loss.grad[np + k] = 0.5 * (loss.grad[np + k] + rev.grad[k]);
        }
    }

    std::array<double, np> d_ab{}, d_ba{};
    for (int k = 0; k < np; ++k) {
        d_ab[k] = scale * loss.grad[k];
        d_ba[k] = scale * loss.grad[np + k];
    }
    matchnet::backward(ab, model, d_ab, grad);
    matchnet::backward(ba, model, d_ba, grad);
    return scale * loss.value;
}

void add_into(ModelParams& dst, const ModelParams& src) {
    std::vector<const std::vector<double>*> arrays;
    src.visit([&arrays](const std::string&, const std::vector<double>& v) { arrays.push_back(&v); });
    size_t slot = 0;
    dst.visit([&](const std::string&, std::vector<double>& v) {
        const std::vector<double>& s = *arrays[slot++];
        for (size_t i = 0; i < v.size(); ++i) v[i] += s[i];
    });
}

void zero_params(ModelParams& p) {
    p.visit([](const std::string&, std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
}

}  // namespace

TrainLog train(ModelParams& model, const Dataset* labeled, const Dataset* unlabeled,
               const Dataset* synthetic, const TrainConfig& cfg, const Validator& validator,
               const LogSink& sink, const EpochHook& epoch_hook) {
    cfg.validate();
    check_dataset_for_mode(cfg, labeled, unlabeled, synthetic);

    const auto wall_start = std::chrono::steady_clock::now();

    // Effective datasets by mode. With beta == 0 the unsupervised sum of the
    // combined objective vanishes, so semi drops unlabeled pairs entirely and
    // becomes the supervised run.
    const Dataset* role_labeled = nullptr;
    const Dataset* role_unlabeled = nullptr;
    switch (cfg.mode) {
        case TrainMode::self_supervised: role_labeled = synthetic; break;
        case TrainMode::supervised: role_labeled = labeled; break;
        case TrainMode::unsupervised: role_unlabeled = unlabeled; break;
        case TrainMode::semi_supervised:
            role_labeled = labeled;
            role_unlabeled = cfg.beta > 0.0 ? unlabeled : nullptr;
            break;
    }
    const int n_labeled = role_labeled ? static_cast<int>(role_labeled->size()) : 0;
    const int n_unlabeled = role_unlabeled ? static_cast<int>(role_unlabeled->size()) : 0;

    const geometry::Grid grid = geometry::make_grid(cfg.grid_rows, cfg.grid_cols);

    AdamConfig adam = cfg.adam;
    adam.lr = cfg.learning_rate;
    AdamState state = AdamState::init(model);

    TrainLog log;
    log.seed = cfg.seed;
    log.config_echo = cfg.to_json();
    if (sink) sink({{"type", "config"}, {"config", log.config_echo}});

    ModelParams batch_grad = ModelParams::zeros_like(model);
    std::vector<ModelParams> slots;  // per-item accumulators for threaded runs
    if (cfg.threads > 1) {
        slots.assign(cfg.batch_size, ModelParams::zeros_like(model));
    }

    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = epoch_batches(n_labeled, n_unlabeled, cfg.batch_size, cfg.seed, epoch);
        for (const auto& batch : batches) {
            zero_params(batch_grad);
            double batch_loss = 0.0;
            int batch_labeled = 0, batch_unlabeled = 0;

            if (cfg.threads <= 1) {
                for (const BatchItem& item : batch) {
                    const auto& lp = item.labeled ? (*role_labeled)[item.index]
                                                  : (*role_unlabeled)[item.index];
                    batch_loss += process_pair(lp, item.labeled, model, cfg, grid, batch_grad);
                    (item.labeled ? batch_labeled : batch_unlabeled) += 1;
                }
            } else {
                std::vector<double> losses(batch.size(), 0.0);
                parallel_for(static_cast<int>(batch.size()), cfg.threads, [&](int i) {
                    const BatchItem& item = batch[i];
                    zero_params(slots[i]);
                    const auto& lp = item.labeled ? (*role_labeled)[item.index]
                                                  : (*role_unlabeled)[item.index];
                    losses[i] = process_pair(lp, item.labeled, model, cfg, grid, slots[i]);
                });
                for (size_t i = 0; i < batch.size(); ++i) {
                    batch_loss += losses[i];
                    add_into(batch_grad, slots[i]);
                    (batch[i].labeled ? batch_labeled : batch_unlabeled) += 1;
                }
            }

            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("non-finite loss at step " + std::to_string(step + 1) +
                                         " (epoch " + std::to_string(epoch) + ")");
            }

            adam_step(model, batch_grad, state, adam);
            ++step;
            log.steps.push_back({step, epoch, batch_loss, batch_labeled, batch_unlabeled});
            if (sink) {
                sink({{"type", "step"},
                      {"step", step},
                      {"epoch", epoch},
                      {"loss", batch_loss},
                      {"labeled_pairs", batch_labeled},
                      {"unlabeled_pairs", batch_unlabeled}});
            }
        }

        if (validator) {
            const double pck = validator(model);
            log.epoch_val_pck.push_back(pck);
            if (sink) sink({{"type", "epoch"}, {"epoch", epoch}, {"val_pck", pck}});
        }
        if (epoch_hook) epoch_hook(epoch, model);
    }

    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    if (sink) sink({{"type", "done"}, {"steps", step}, {"wall_seconds", log.wall_seconds}});
    return log;
}

}  // namespace geomatch::optimize
