#include "pear/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "pear/errors.hpp"
#include "pear/ops.hpp"

namespace pear::train {

using ad::Tensor;

template <typename T>
Tensor<T> surface_tensor(const data::VolumetricState& s) {
    return Tensor<T>::from({s.n_pix(), data::kSurfaceChannels}, std::vector<T>(s.surface.begin(), s.surface.end()));
}

template <typename T>
Tensor<T> upper_tensor(const data::VolumetricState& s) {
    return Tensor<T>::from({s.n_pix(), data::kUpperLevels, data::kUpperChannels},
                           std::vector<T>(s.upper.begin(), s.upper.end()));
}

template <typename T>
data::VolumetricState to_state(const model::Prediction<T>& pred, std::int64_t n_side, int day_of_year) {
    data::VolumetricState s;
    s.n_side = n_side;
    s.day_of_year = day_of_year;
    s.surface.assign(pred.surface.data().begin(), pred.surface.data().end());
    s.upper.assign(pred.upper.data().begin(), pred.upper.data().end());
    if (static_cast<std::int64_t>(s.surface.size()) != s.n_pix() * data::kSurfaceChannels ||
        static_cast<std::int64_t>(s.upper.size()) != s.n_pix() * data::kUpperLevels * data::kUpperChannels) {
        throw DimensionError("prediction does not match the state layout at n_side " + std::to_string(n_side));
    }
    return s;
}

template <typename T>
Tensor<T> weighted_l1(const model::Prediction<T>& pred, const Tensor<T>& target_surface,
                      const Tensor<T>& target_upper, double surface_weight) {
    if (pred.surface.shape() != target_surface.shape() || pred.upper.shape() != target_upper.shape()) {
        throw DimensionError("loss: prediction " + ad::shape_str(pred.surface.shape()) + "/" +
                             ad::shape_str(pred.upper.shape()) + " vs target " + ad::shape_str(target_surface.shape()) +
                             "/" + ad::shape_str(target_upper.shape()));
    }
    return ad::add(ad::scale(ad::l1(pred.surface, target_surface), static_cast<T>(surface_weight)),
                   ad::l1(pred.upper, target_upper));
}

namespace {

model::ModelConfig checked_model_config(const config::RunConfig& cfg, const std::vector<data::VolumetricState>& states) {
    cfg.train.validate();
    if (states.size() < 2) throw ContractError("training needs a sequence of at least two states");
    for (const auto& s : states) {
        if (s.n_side != cfg.model.n_side) {
            throw ConfigError("dataset n_side " + std::to_string(s.n_side) + " differs from model.n_side " +
                              std::to_string(cfg.model.n_side));
        }
    }
    return cfg.model;
}

ad::AdamWConfig adam_config(const config::TrainConfig& t) {
    ad::AdamWConfig a;
    a.lr = t.lr;
    a.weight_decay = t.weight_decay;
    a.beta1 = t.beta1;
    a.beta2 = t.beta2;
    a.eps = t.eps;
    return a;
}

constexpr std::int64_t kMaxExactStep = std::int64_t{1} << 24;

}  // namespace

template <typename T>
Trainer<T>::Trainer(config::RunConfig cfg, std::vector<data::VolumetricState> normalized)
    : cfg_(std::move(cfg)),
      states_(std::move(normalized)),
      model_(checked_model_config(cfg_, states_)),
      opt_(model_.parameters(), adam_config(cfg_.train)) {
    const auto pairs = static_cast<std::int64_t>(states_.size()) - 1;
    n_val_ = std::min(cfg_.train.n_val, pairs - 1);
    n_val_ = std::max<std::int64_t>(n_val_, 0);
    n_train_ = pairs - n_val_;
}

template <typename T>
std::int64_t Trainer<T>::sample_index(std::int64_t step, std::int64_t slot) const {
    const std::int64_t k = step * cfg_.train.batch_size + slot;
    const std::int64_t epoch = k / n_train_;
    std::vector<std::int64_t> order(static_cast<std::size_t>(n_train_));
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.train.seed), static_cast<std::uint32_t>(cfg_.train.seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order[static_cast<std::size_t>(k % n_train_)];
}

template <typename T>
double Trainer<T>::pair_loss(std::int64_t pair) const {
    ad::NoGradGuard guard;
    const auto& x = states_.at(static_cast<std::size_t>(pair));
    const auto& y = states_.at(static_cast<std::size_t>(pair + 1));
    const auto pred = model_.forward(surface_tensor<T>(x), upper_tensor<T>(x));
    return static_cast<double>(
        weighted_l1(pred, surface_tensor<T>(y), upper_tensor<T>(y), cfg_.train.surface_loss_weight).item());
}

template <typename T>
double Trainer<T>::mean_train_loss() const {
    double s = 0.0;
    for (std::int64_t i = 0; i < n_train_; ++i) s += pair_loss(i);
    return s / static_cast<double>(n_train_);
}

template <typename T>
double Trainer<T>::validation_loss() const {
    if (n_val_ == 0) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (std::int64_t i = n_train_; i < n_train_ + n_val_; ++i) s += pair_loss(i);
    return s / static_cast<double>(n_val_);
}

template <typename T>
double Trainer<T>::learning_rate(std::int64_t step) const {
    if (!cfg_.train.cosine_schedule || cfg_.train.steps == 0) return cfg_.train.lr;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg_.train.steps));
    return cfg_.train.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
TrainLog Trainer<T>::run(const std::filesystem::path& run_dir, std::int64_t until_step,
                         const std::function<void(std::int64_t, double)>& on_step) {
    std::filesystem::create_directories(run_dir);
    TrainLog log;
    const bool resumed = step() > 0;
    std::ofstream loss_csv(run_dir / "loss.csv", resumed ? std::ios::app : std::ios::trunc);
    if (!resumed) loss_csv << "step,loss\n";
    loss_csv << std::setprecision(17);

    const auto b = cfg_.train.batch_size;
    const T inv_b = T(1) / static_cast<T>(b);
    while (step() < until_step) {
        const auto s = step();
        opt_.zero_grad();
        double total = 0.0;
        bool finite = true;
        for (std::int64_t slot = 0; slot < b; ++slot) {
            const auto pair = sample_index(s, slot);
            const auto& x = states_[static_cast<std::size_t>(pair)];
            const auto& y = states_[static_cast<std::size_t>(pair + 1)];
            const auto pred = model_.forward(surface_tensor<T>(x), upper_tensor<T>(x));
            auto loss = weighted_l1(pred, surface_tensor<T>(y), upper_tensor<T>(y), cfg_.train.surface_loss_weight);
            const double value = static_cast<double>(loss.item());
            if (!std::isfinite(value)) {
                finite = false;
                break;
            }
            total += value;
            ad::backward(ad::scale(loss, inv_b));
        }
        if (finite) {
            try {
                opt_.set_lr(learning_rate(s));
                opt_.step();
            } catch (const NonFiniteError& e) {
                finite = false;
            }
        }
        if (!finite) {
            log.aborted = true;
            log.abort_reason = "non-finite loss or gradient at step " + std::to_string(s);
            log.last_checkpoint = run_dir / "last_good.ckpt";
            opt_.zero_grad();
            save(log.last_checkpoint);
            return log;
        }
        const double mean_loss = total / static_cast<double>(b);
        log.step_loss.emplace_back(step(), mean_loss);
        ++log.steps_done;
        loss_csv << step() << ',' << mean_loss << '\n';
        if (on_step) on_step(step(), mean_loss);
        if (cfg_.train.checkpoint_every > 0 && step() % cfg_.train.checkpoint_every == 0) {
            std::ostringstream name;
            name << "ckpt_step" << std::setw(6) << std::setfill('0') << step() << ".ckpt";
            log.last_checkpoint = run_dir / name.str();
            save(log.last_checkpoint);
        }
    }
    opt_.zero_grad();
    const double val = validation_loss();
    log.val_loss.emplace_back(step(), val);
    {
        std::ofstream val_csv(run_dir / "val_loss.csv", std::ios::trunc);
        val_csv << "step,val_loss\n" << std::setprecision(17) << step() << ',' << val << '\n';
    }
    log.last_checkpoint = run_dir / "final.ckpt";
    save(log.last_checkpoint);
    return log;
}

template <typename T>
std::vector<ckpt::Record> Trainer<T>::state_records() const {
    if (step() >= kMaxExactStep) throw ContractError("step counter too large to checkpoint exactly");
    auto records = model_.to_records();
    const auto named = model_.named_parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& m = opt_.first_moment(i);
        const auto& v = opt_.second_moment(i);
        records.push_back({"opt/m/" + named[i].name, {m.size()}, std::vector<float>(m.begin(), m.end())});
        records.push_back({"opt/v/" + named[i].name, {v.size()}, std::vector<float>(v.begin(), v.end())});
    }
    records.push_back({"train/step", {1}, {static_cast<float>(step())}});
    return records;
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) const {
    ckpt::write_checkpoint(path, state_records());
}

template <typename T>
void Trainer<T>::load(const std::filesystem::path& path) {
    const auto records = ckpt::read_checkpoint(path);
    model_.load_records(records);
    const auto named = model_.named_parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
        for (auto [prefix, dst] : {std::pair{"opt/m/", &opt_.first_moment(i)}, std::pair{"opt/v/", &opt_.second_moment(i)}}) {
            const auto* r = ckpt::find_record(records, prefix + named[i].name);
            if (!r) throw FormatError("checkpoint lacks optimizer state for " + named[i].name);
            if (r->values.size() != dst->size()) throw FormatError("optimizer state size mismatch for " + named[i].name);
            std::transform(r->values.begin(), r->values.end(), dst->begin(), [](float f) { return static_cast<T>(f); });
        }
    }
    const auto* st = ckpt::find_record(records, "train/step");
    if (!st || st->values.size() != 1) throw FormatError("checkpoint lacks train/step");
    opt_.set_step_count(static_cast<std::int64_t>(st->values[0]));
}

template <typename T>
RolloutReport rollout(const model::PearModel<T>& model, const data::NormStats& stats,
                      std::span<const data::VolumetricState> sequence, std::span<const std::int64_t> initial,
                      int n_steps, const metrics::ClimatologyTable& clim, const std::function<void()>& on_forward) {
    if (n_steps < 1 || n_steps > kMaxRolloutSteps) {
        throw ConfigError("rollout steps must lie in 1.." + std::to_string(kMaxRolloutSteps));
    }
    if (initial.empty()) throw ContractError("rollout needs at least one initial state");
    for (auto i : initial) {
        if (i < 0 || i + n_steps >= static_cast<std::int64_t>(sequence.size())) {
            throw ContractError("initial index " + std::to_string(i) + " leaves no verifying state for lead " +
                                std::to_string(n_steps));
        }
    }
    ad::NoGradGuard guard;
    RolloutReport report;
    report.requested_steps = n_steps;
    const auto n_side = model.config().n_side;

    // per_lead[k] holds one row set per initial state for lead k + 1.
    std::vector<std::vector<std::vector<metrics::MetricRow>>> per_lead(static_cast<std::size_t>(n_steps));
    int completed = n_steps;
    for (auto i0 : initial) {
        auto state = stats.normalize(sequence[static_cast<std::size_t>(i0)]);
        for (int lead = 1; lead <= completed; ++lead) {
            const auto& truth = sequence[static_cast<std::size_t>(i0 + lead)];
            const auto pred = model.forward(surface_tensor<T>(state), upper_tensor<T>(state));
            ++report.forward_count;
            if (on_forward) on_forward();
            auto next = to_state(pred, n_side, truth.day_of_year);
            if (!next.all_finite()) {
                completed = lead - 1;
                report.unstable = true;
                break;
            }
            const auto physical = stats.denormalize(next);
            per_lead[static_cast<std::size_t>(lead - 1)].push_back(
                metrics::state_metrics(truth, physical, clim.for_day(truth.day_of_year), lead));
            state = std::move(next);
        }
    }
    report.completed_steps = completed;
    std::vector<std::vector<metrics::MetricRow>> kept;
    for (int lead = 1; lead <= completed; ++lead) {
        for (auto& rows : per_lead[static_cast<std::size_t>(lead - 1)]) kept.push_back(std::move(rows));
    }
    report.rows = metrics::aggregate(kept);
    return report;
}

template <typename T>
void load_model(model::PearModel<T>& model, const std::filesystem::path& path) {
    model.load_records(ckpt::read_checkpoint(path));
}

#define PEAR_INSTANTIATE_TRAIN(T)                                                                                   \
    template Tensor<T> surface_tensor<T>(const data::VolumetricState&);                                            \
    template Tensor<T> upper_tensor<T>(const data::VolumetricState&);                                              \
    template data::VolumetricState to_state<T>(const model::Prediction<T>&, std::int64_t, int);                   \
    template Tensor<T> weighted_l1<T>(const model::Prediction<T>&, const Tensor<T>&, const Tensor<T>&, double);   \
    template class Trainer<T>;                                                                                      \
    template RolloutReport rollout<T>(const model::PearModel<T>&, const data::NormStats&,                          \
                                      std::span<const data::VolumetricState>, std::span<const std::int64_t>, int, \
                                      const metrics::ClimatologyTable&, const std::function<void()>&);             \
    template void load_model<T>(model::PearModel<T>&, const std::filesystem::path&);

PEAR_INSTANTIATE_TRAIN(float)
PEAR_INSTANTIATE_TRAIN(double)

}  // namespace pear::train
