#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pear/config.hpp"
#include "pear/data.hpp"
#include "pear/metrics.hpp"
#include "pear/model.hpp"
#include "pear/optim.hpp"

namespace pear::train {

template <typename T>
ad::Tensor<T> surface_tensor(const data::VolumetricState& s);
template <typename T>
ad::Tensor<T> upper_tensor(const data::VolumetricState& s);
template <typename T>
data::VolumetricState to_state(const model::Prediction<T>& pred, std::int64_t n_side, int day_of_year);

/// w * mean|surface error| + mean|upper error|. Throws DimensionError when
/// the prediction and target shapes differ.
template <typename T>
ad::Tensor<T> weighted_l1(const model::Prediction<T>& pred, const ad::Tensor<T>& target_surface,
                          const ad::Tensor<T>& target_upper, double surface_weight);

struct TrainLog {
    std::vector<std::pair<std::int64_t, double>> step_loss;  // (step after update, loss before it)
    std::vector<std::pair<std::int64_t, double>> val_loss;
    bool aborted = false;
    std::string abort_reason;
    std::int64_t steps_done = 0;
    std::filesystem::path last_checkpoint;
};

/// Deterministic optimization over the (x_t, x_{t+1}) pairs of a normalized
/// sequence. The last `n_val` pairs are held out. The sample for update s and
/// accumulation slot j is a function of (seed, s, j) only, so resuming from a
/// checkpoint replays the same stream.
template <typename T>
class Trainer {
public:
    Trainer(config::RunConfig cfg, std::vector<data::VolumetricState> normalized);

    model::PearModel<T>& model() { return model_; }
    const model::PearModel<T>& model() const { return model_; }
    ad::AdamW<T>& optimizer() { return opt_; }
    const config::RunConfig& config() const { return cfg_; }
    std::int64_t step() const { return opt_.step_count(); }
    std::int64_t n_train_pairs() const { return n_train_; }
    std::int64_t n_val_pairs() const { return n_val_; }

    /// Pair index used by update `step` (0-based) at accumulation slot `slot`.
    std::int64_t sample_index(std::int64_t step, std::int64_t slot) const;

    /// Loss on one pair without recording gradients.
    double pair_loss(std::int64_t pair) const;
    double mean_train_loss() const;
    /// Mean loss over the held-out pairs; NaN when there are none.
    double validation_loss() const;

    /// Runs updates until step() == until_step. Writes loss.csv, periodic
    /// checkpoints and final.ckpt under run_dir. A non-finite loss or grad
    /// stops the run and writes last_good.ckpt holding the parameters from
    /// before the failing update.
    TrainLog run(const std::filesystem::path& run_dir, std::int64_t until_step,
                 const std::function<void(std::int64_t, double)>& on_step = {});

    /// Parameters, optimizer moments and the step counter.
    std::vector<ckpt::Record> state_records() const;
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    double learning_rate(std::int64_t step) const;

    config::RunConfig cfg_;
    std::vector<data::VolumetricState> states_;
    std::int64_t n_train_ = 0;
    std::int64_t n_val_ = 0;
    model::PearModel<T> model_;
    ad::AdamW<T> opt_;
};

struct RolloutReport {
    std::vector<metrics::MetricRow> rows;  // leads 1..completed_steps
    int requested_steps = 0;
    int completed_steps = 0;
    bool unstable = false;
    std::int64_t forward_count = 0;
};

inline constexpr int kMaxRolloutSteps = 10;

/// Iterated one-day forecasts from each initial index of a physical-unit
/// sequence. Model inputs and outputs are normalized with `stats`; outputs
/// are de-normalized before scoring against sequence[i + lead]. A
/// non-finite prediction truncates the report at the last finite lead for
/// all initial states and sets `unstable`.
template <typename T>
RolloutReport rollout(const model::PearModel<T>& model, const data::NormStats& stats,
                      std::span<const data::VolumetricState> sequence, std::span<const std::int64_t> initial,
                      int n_steps, const metrics::ClimatologyTable& clim,
                      const std::function<void()>& on_forward = {});

/// Restores model parameters from a checkpoint written by Trainer::save.
template <typename T>
void load_model(model::PearModel<T>& model, const std::filesystem::path& path);

}  // namespace pear::train
