#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ringobs/checkpoint.hpp"
#include "ringobs/common.hpp"
#include "ringobs/dataset.hpp"
#include "ringobs/fno.hpp"
#include "ringobs/gp.hpp"
#include "ringobs/rng.hpp"

namespace ringobs {

// One training example: input window (newest-first) and the following
// prediction horizon, cut from a recorded trajectory.
struct SamplePair {
    StateWindow input;  // n x |X|
    FieldStack target;  // n_out x |X|, increasing time
    int scenario_id = 0;
    int start_step = 0;
};

enum class GpSampleMode {
    fresh_per_presentation,  // new posterior draw every time a pair is seen
    fixed_per_pair,          // one draw per pair, reused across epochs
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 0;
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    double validation_fraction = 0.1;
    int checkpoint_every = 50;       // epochs between periodic checkpoints; 0 = off
    std::string checkpoint_path;     // empty = no checkpoints written
    std::string log_path;            // empty = no training log written
    GpSampleMode gp_sample_mode = GpSampleMode::fresh_per_presentation;

    void validate() const {
        if (learning_rate <= 0) throw config_error("TrainConfig: learning_rate must be > 0");
        if (batch_size < 1) throw config_error("TrainConfig: batch_size must be >= 1");
        if (epochs < 0) throw config_error("TrainConfig: epochs must be >= 0");
        if (validation_fraction < 0 || validation_fraction >= 1)
            throw config_error("TrainConfig: validation_fraction must be in [0,1)");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || eps_adam <= 0)
            throw config_error("TrainConfig: bad Adam constants");
    }
};

struct AdamState {
    std::vector<double> m, v;
    long step = 0;

    explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct WindowedPairs {
    std::vector<SamplePair> pairs;
    int skipped = 0;  // trajectories too short to yield a single pair
};

// Cuts each trajectory into consecutive non-overlapping blocks of n + n_out
// steps; the first n (reversed to newest-first) become the input, the next
// n_out the target.
inline WindowedPairs window_dataset(const std::vector<Trajectory>& trajectories, int n,
                                    int n_out) {
    if (n < 1 || n_out < 1) throw config_error("window_dataset: n and n_out must be >= 1");
    WindowedPairs out;
    const int block = n + n_out;
    for (size_t t = 0; t < trajectories.size(); ++t) {
        const Trajectory& traj = trajectories[t];
        if (traj.steps() < block) {
            ++out.skipped;
            continue;
        }
        int cells = traj.fields[0].cells();
        double dx = traj.fields[0].dx;
        int count = traj.steps() / block;
        for (int b = 0; b < count; ++b) {
            SamplePair pair;
            pair.scenario_id = static_cast<int>(t);
            pair.start_step = b * block;
            pair.input = StateWindow(n, cells, dx);
            for (int r = 0; r < n; ++r) {
                const DensityField& f = traj.fields[pair.start_step + n - 1 - r];
                std::copy(f.values.begin(), f.values.end(), pair.input.row(r));
            }
            pair.target = FieldStack(n_out, cells, dx);
            for (int r = 0; r < n_out; ++r) {
                const DensityField& f = traj.fields[pair.start_step + n + r];
                std::copy(f.values.begin(), f.values.end(), pair.target.row(r));
            }
            out.pairs.push_back(std::move(pair));
        }
    }
    return out;
}

inline WindowedPairs window_dataset(const Dataset& ds) {
    std::vector<Trajectory> trajs;
    trajs.reserve(ds.scenarios.size());
    for (const DatasetScenario& sc : ds.scenarios) trajs.push_back(sc.trajectory);
    return window_dataset(trajs, ds.n, ds.n_out);
}

namespace detail {

inline void check_finite_loss(double loss, int batch_id, const char* what) {
    if (!std::isfinite(loss))
        throw numeric_error(std::string(what) + ": non-finite loss in batch " +
                            std::to_string(batch_id));
}

inline std::vector<int> all_indices(size_t n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

}  // namespace detail

// Horizon-summed, dx-weighted squared error of the solution operator, averaged
// over the batch. With `grad` non-null, accumulates d(loss)/d(theta) into it.
inline double loss_solution(const FnoParams& theta, const std::vector<SamplePair>& pairs,
                            const std::vector<int>& idx, std::vector<double>* grad = nullptr,
                            FnoWorkspace* ws = nullptr, int batch_id = 0) {
    if (idx.empty()) return 0.0;
    double total = 0.0;
    GradTape tape;
    const double inv_batch = 1.0 / idx.size();
    for (int i : idx) {
        const SamplePair& pair = pairs[i];
        FieldStack pred = fno_forward(pair.input, theta, grad ? &tape : nullptr, ws);
        if (pred.rows != pair.target.rows || pred.cols != pair.target.cols)
            throw shape_error("loss_solution: prediction/target shape mismatch");
        const double dx = pair.target.dx;
        double sq = 0.0;
        std::vector<double> d_out;
        if (grad) d_out.resize(pred.data.size());
        for (size_t k = 0; k < pred.data.size(); ++k) {
            double r = pred.data[k] - pair.target.data[k];
            sq += r * r;
            if (grad) d_out[k] = 2.0 * dx * r * inv_batch;
        }
        total += dx * sq;
        if (grad) fno_backward(theta, tape, d_out, *grad, ws);
    }
    double loss = total * inv_batch;
    detail::check_finite_loss(loss, batch_id, "loss_solution");
    return loss;
}

inline double loss_solution(const FnoParams& theta, const std::vector<SamplePair>& pairs) {
    return loss_solution(theta, pairs, detail::all_indices(pairs.size()));
}

using CorrectionFn = std::function<FieldStack(const FieldStack&, const FieldStack&)>;

// Correction objective: the frozen solution operator rolls the input window
// forward, sensors read the TRUE target fields, a per-slice GP posterior draw
// rebuilds the data view, and the corrected space-time window is scored
// against the targets (dx-weighted, batch mean). Gradients flow through psi
// only. `pair_seeds` aligns with `idx` and fixes each pair's GP draws.
inline double loss_correction(const FnoParams& psi, const FnoParams& theta,
                              const std::vector<SamplePair>& pairs, const std::vector<int>& idx,
                              const GpInterpolator& gp, const std::vector<uint64_t>& pair_seeds,
                              std::vector<double>* grad = nullptr, FnoWorkspace* ws = nullptr,
                              int batch_id = 0, const CorrectionFn& psi_override = nullptr) {
    if (idx.size() != pair_seeds.size())
        throw shape_error("loss_correction: idx/pair_seeds length mismatch");
    if (idx.empty()) return 0.0;
    double total = 0.0;
    GradTape tape;
    const double inv_batch = 1.0 / idx.size();
    const std::vector<int>& cells = gp.sensor_cells();
    for (size_t b = 0; b < idx.size(); ++b) {
        const SamplePair& pair = pairs[idx[b]];
        FieldStack predicted = fno_forward(pair.input, theta, nullptr, ws);
        FieldStack data_view(pair.target.rows, pair.target.cols, pair.target.dx);
        std::vector<double> readings(cells.size());
        for (int s = 0; s < pair.target.rows; ++s) {
            for (size_t j = 0; j < cells.size(); ++j) readings[j] = pair.target.at(s, cells[j]);
            DensityField draw = gp.sample(readings, Rng::mix(pair_seeds[b], s));
            std::copy(draw.values.begin(), draw.values.end(), data_view.row(s));
        }
        FieldStack error(pair.target.rows, pair.target.cols, pair.target.dx);
        for (size_t k = 0; k < error.data.size(); ++k)
            error.data[k] = predicted.data[k] - data_view.data[k];
        FieldStack corrected = psi_override
                                   ? psi_override(predicted, error)
                                   : fno2d_forward(predicted, error, psi, grad ? &tape : nullptr, ws);
        const double dx = pair.target.dx;
        double sq = 0.0;
        std::vector<double> d_out;
        if (grad && !psi_override) d_out.resize(corrected.data.size());
        for (size_t k = 0; k < corrected.data.size(); ++k) {
            double r = corrected.data[k] - pair.target.data[k];
            sq += r * r;
            if (grad && !psi_override) d_out[k] = 2.0 * dx * r * inv_batch;
        }
        total += dx * sq;
        if (grad && !psi_override) fno_backward(psi, tape, d_out, *grad, ws);
    }
    double loss = total * inv_batch;
    detail::check_finite_loss(loss, batch_id, "loss_correction");
    return loss;
}

// Standard bias-corrected Adam update, in place.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw shape_error("adam_step: shape mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps_adam);
    }
}

namespace detail {

// Shared epoch loop for both operators. `batch_loss_grad(idx, grad, epoch)`
// scores one batch and accumulates gradients; `full_loss(idx)` scores without
// gradients for validation. Returns the parameter vector that achieved the
// best validation loss (the freshly initialized one counts, so the result
// never validates worse than the start).
template <typename BatchLossGrad, typename FullLoss>
inline FnoParams run_training(FnoParams params, const TrainConfig& cfg, size_t pair_count,
                              BatchLossGrad&& batch_loss_grad, FullLoss&& full_loss,
                              uint64_t ckpt_seed) {
    cfg.validate();
    std::vector<int> order = all_indices(pair_count);
    Rng split_rng(Rng::mix(cfg.seed, 0x59717));
    split_rng.shuffle(order);
    size_t val_count = static_cast<size_t>(std::floor(cfg.validation_fraction * pair_count));
    std::vector<int> val_idx(order.begin(), order.begin() + val_count);
    std::vector<int> train_idx(order.begin() + val_count, order.end());
    if (train_idx.empty()) throw config_error("training: no pairs left after validation split");
    // Empty validation split: validate on the training pairs themselves.
    const std::vector<int>& score_idx = val_idx.empty() ? train_idx : val_idx;

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::trunc);
        if (!log) throw data_error("cannot open training log: " + cfg.log_path);
        log << "epoch,train_loss,val_loss,wall_seconds\n";
    }
    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto write_ckpt = [&](const FnoParams& p, long step, const std::string& suffix) {
        if (cfg.checkpoint_path.empty()) return;
        save_checkpoint(cfg.checkpoint_path + suffix,
                        Checkpoint{p, ckpt_seed, static_cast<uint64_t>(step)});
    };

    AdamState adam(params.size());
    std::vector<double> grad(params.size());
    double best_val = full_loss(score_idx, params);
    FnoParams best = params;
    long best_step = 0;
    if (log) log << 0 << ',' << best_val << ',' << best_val << ',' << elapsed() << "\n";

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng(Rng::mix(cfg.seed, 0xE90C000 + static_cast<uint64_t>(epoch)));
        epoch_rng.shuffle(train_idx);
        double epoch_sum = 0.0;
        size_t seen = 0;
        for (size_t pos = 0; pos < train_idx.size(); pos += cfg.batch_size) {
            size_t end = std::min(pos + cfg.batch_size, train_idx.size());
            std::vector<int> batch(train_idx.begin() + pos, train_idx.begin() + end);
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss;
            try {
                loss = batch_loss_grad(batch, grad, epoch, params);
            } catch (const numeric_error&) {
                write_ckpt(best, best_step, "");
                throw;
            }
            epoch_sum += loss * batch.size();
            seen += batch.size();
            adam_step(params.values, grad, adam, cfg);
        }
        double train_loss = seen ? epoch_sum / seen : 0.0;
        double val_loss = full_loss(score_idx, params);
        if (!std::isfinite(val_loss)) {
            write_ckpt(best, best_step, "");
            throw numeric_error("training: non-finite validation loss at epoch " +
                                std::to_string(epoch));
        }
        if (val_loss <= best_val) {
            best_val = val_loss;
            best = params;
            best_step = adam.step;
        }
        if (log) log << epoch << ',' << train_loss << ',' << val_loss << ',' << elapsed() << "\n";
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
            write_ckpt(best, best_step, "");
    }
    write_ckpt(best, best_step, "");
    return best;
}

}  // namespace detail

// Trains the 1D solution operator on windowed pairs. Deterministic given
// cfg.seed (single-threaded); returns the best-validation parameters.
inline FnoParams train_solution_operator(const std::vector<SamplePair>& pairs,
                                         const FnoArch& arch, const TrainConfig& cfg) {
    if (pairs.empty()) throw config_error("train_solution_operator: empty dataset");
    FnoWorkspace ws;
    FnoParams init = init_params(arch, cfg.seed);
    return detail::run_training(
        std::move(init), cfg, pairs.size(),
        [&](const std::vector<int>& batch, std::vector<double>& grad, int /*epoch*/,
            const FnoParams& p) { return loss_solution(p, pairs, batch, &grad, &ws); },
        [&](const std::vector<int>& idx, const FnoParams& p) {
            return loss_solution(p, pairs, idx, nullptr, &ws);
        },
        cfg.seed);
}

// Trains the 2D correction operator against a frozen solution operator.
inline FnoParams train_correction_operator(const std::vector<SamplePair>& pairs,
                                           const FnoParams& theta, const FnoArch& arch2d,
                                           const TrainConfig& cfg, const GpInterpolator& gp) {
    if (pairs.empty()) throw config_error("train_correction_operator: empty dataset");
    FnoWorkspace ws;
    auto seeds_for = [&](const std::vector<int>& idx, int epoch) {
        std::vector<uint64_t> seeds(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            uint64_t tag = cfg.gp_sample_mode == GpSampleMode::fresh_per_presentation
                               ? static_cast<uint64_t>(epoch) * 1000003u + idx[i]
                               : static_cast<uint64_t>(idx[i]);
            seeds[i] = Rng::mix(Rng::mix(cfg.seed, 0x6B5A), tag);
        }
        return seeds;
    };
    FnoParams init = init_params(arch2d, cfg.seed);
    return detail::run_training(
        std::move(init), cfg, pairs.size(),
        [&](const std::vector<int>& batch, std::vector<double>& grad, int epoch,
            const FnoParams& p) {
            return loss_correction(p, theta, pairs, batch, gp, seeds_for(batch, epoch), &grad,
                                   &ws);
        },
        [&](const std::vector<int>& idx, const FnoParams& p) {
            // Validation uses the fixed-per-pair draws so the score is
            // comparable across epochs.
            return loss_correction(p, theta, pairs, idx, gp, seeds_for(idx, 0), nullptr, &ws);
        },
        cfg.seed);
}

}  // namespace ringobs
