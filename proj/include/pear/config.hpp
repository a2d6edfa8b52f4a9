#pragma once

// Run configuration: one human-readable `key = value` file, `#` comments.
//
//   seed = 7
//   model.n_side = 8
//   train.steps = 2000
//   data.angular_velocity = 0.2
//
// The top-level `seed` seeds weight init, data generation and shuffling. The
// PEAR_SEED environment variable, when set, replaces it.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>

#include "pear/data.hpp"
#include "pear/model.hpp"

namespace pear::config {

using KeyValues = std::map<std::string, std::string>;

/// Throws ConfigError on a line without '=' or a repeated key.
KeyValues parse_kv(std::istream& in);
KeyValues read_kv_file(const std::filesystem::path& path);

enum class Precision { f32, f64 };

struct TrainConfig {
    double lr = 5e-4;
    double weight_decay = 3e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double surface_loss_weight = 0.25;
    std::int64_t batch_size = 1;  // samples whose gradients are accumulated per update
    std::int64_t steps = 2000;
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;
    std::int64_t checkpoint_every = 500;  // 0 keeps only the final checkpoint
    std::int64_t log_every = 50;
    bool cosine_schedule = false;  // decay lr to 0 over `steps`
    std::int64_t n_val = 2;        // trailing pairs of the sequence held out for validation

    /// Throws ConfigError unless lr > 0, batch_size >= 1 and steps >= 0.
    void validate() const;
};

/// Synthetic data settings; the grid resolution is model.n_side.
struct DataConfig {
    std::int64_t n_steps = 16;
    double angular_velocity = 0.2;
    double noise = 0.01;
    int max_degree = 3;
    int start_day_of_year = 1;
};

struct RunConfig {
    std::uint64_t seed = 0;
    model::ModelConfig model;
    TrainConfig train;
    DataConfig data;

    /// Copies `seed` into the model, training and data seeds.
    void propagate_seed();
    data::SyntheticConfig synthetic() const;

    KeyValues to_kv() const;
    /// Unknown keys are rejected so typos surface early.
    static RunConfig from_kv(const KeyValues& kv);
    std::string to_text() const;
};

/// Reads a config file (or defaults for an empty path), applies PEAR_SEED and
/// propagates the seed.
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `key=value` overrides on top of a config's key-values.
RunConfig with_overrides(const RunConfig& base, const KeyValues& overrides);

}  // namespace pear::config
