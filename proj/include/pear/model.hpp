#pragma once

// Windowed-attention encoder/decoder operating on HEALPix voxels.
//
// Data flow (n = n_side, P = 3/4 n^2 patches, D = 8 vertical slots):
//
//   surface (12n^2, 4), upper (12n^2, 13, 5)
//     -> patch embed                       (P, D, 48)
//     -> 2 attention blocks                (P, D, 48)   -- kept as skip
//     -> downsample (4 nested siblings)    (P/4, D, 96)
//     -> 12 attention blocks               (P/4, D, 96)
//     -> upsample                          (P, D, 48)
//     -> 2 attention blocks                (P, D, 48)
//     -> concat skip                       (P, D, 96)
//     -> patch recovery                    (12n^2, 4), (12n^2, 13, 5)

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pear/checkpoint.hpp"
#include "pear/hpx_grid.hpp"
#include "pear/tensor.hpp"
#include "pear/window_shift.hpp"

namespace pear::model {

struct ModelConfig {
    std::int64_t n_side = 64;
    std::int64_t embed_dim = 48;
    std::int64_t bottleneck_dim = 96;
    std::array<std::int64_t, 3> depths{2, 12, 2};
    std::array<std::int64_t, 3> heads{6, 12, 6};
    std::int64_t window_hp = 64;
    std::int64_t window_d = 2;
    std::int64_t patch_hp = 16;
    std::int64_t patch_d = 2;
    std::int64_t surface_channels = 4;
    std::int64_t upper_channels = 5;
    std::int64_t upper_levels = 13;
    std::int64_t mlp_ratio = 4;
    bool shift_windows = true;
    std::uint64_t init_seed = 0;
    double init_std = 0.02;

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;

    hpx::GridSpec grid() const { return hpx::GridSpec::from_nside(n_side); }
    hpx::GridSpec patch_grid() const;
    hpx::GridSpec bottleneck_grid() const;
    std::int64_t padded_levels() const { return (upper_levels + patch_d - 1) / patch_d * patch_d; }
    std::int64_t upper_slots() const { return padded_levels() / patch_d; }
    /// Vertical extent of the latent: one surface slot plus the upper slots.
    std::int64_t depth() const { return upper_slots() + 1; }
    /// Window width actually used on a grid: window_hp, capped at one base face.
    std::int64_t effective_window_hp(const hpx::GridSpec& stage_grid) const;

    std::map<std::string, std::string> to_kv() const;
    /// Unknown keys are ignored; missing keys keep their defaults.
    static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

/// Trainable parameter count implied by a configuration.
std::int64_t count_parameters(const ModelConfig& cfg);

using ShapeTrace = std::vector<std::pair<std::string, ad::Shape>>;

template <typename T>
struct NamedTensor {
    std::string name;
    ad::Tensor<T> tensor;
};

template <typename T>
struct Prediction {
    ad::Tensor<T> surface;  // (12n^2, surface_channels)
    ad::Tensor<T> upper;    // (12n^2, upper_levels, upper_channels)
};

template <typename T>
struct AttentionBlock {
    std::int64_t dim = 0;
    std::int64_t heads = 0;
    std::shared_ptr<const window::WindowLayout> layout;
    ad::Tensor<T> qkv_w, qkv_b, proj_w, proj_b;
    ad::Tensor<T> norm1_g, norm1_b;
    ad::Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
    ad::Tensor<T> norm2_g, norm2_b;
    ad::Tensor<T> bias_table;  // (heads, W * W)

    /// x: (P * D, dim) rows in nested voxel order.
    ad::Tensor<T> forward(const ad::Tensor<T>& x) const;
};

template <typename T>
class PearModel {
public:
    explicit PearModel(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    /// One 24-hour step. Inputs must be finite and shaped like the outputs.
    Prediction<T> forward(const ad::Tensor<T>& surface, const ad::Tensor<T>& upper, ShapeTrace* trace = nullptr) const;

    ad::Tensor<T> patch_embed(const ad::Tensor<T>& surface, const ad::Tensor<T>& upper) const;
    ad::Tensor<T> encoder_stage(const ad::Tensor<T>& latent) const;
    ad::Tensor<T> downsample(const ad::Tensor<T>& latent) const;
    ad::Tensor<T> bottleneck(const ad::Tensor<T>& latent) const;
    ad::Tensor<T> upsample(const ad::Tensor<T>& latent) const;
    ad::Tensor<T> decoder_stage(const ad::Tensor<T>& latent) const;
    /// latent: decoder output concatenated with the encoder output, (P, D, 2 * embed_dim).
    Prediction<T> patch_recover(const ad::Tensor<T>& latent) const;

    std::vector<NamedTensor<T>> named_parameters() const;
    std::vector<ad::Tensor<T>> parameters() const;
    std::int64_t parameter_count() const;

    std::vector<ckpt::Record> to_records() const;
    /// Throws FormatError when a parameter is missing or has the wrong shape.
    void load_records(const std::vector<ckpt::Record>& records);

    const std::vector<AttentionBlock<T>>& blocks(int stage) const { return stages_.at(static_cast<std::size_t>(stage)); }
    std::vector<AttentionBlock<T>>& blocks(int stage) { return stages_.at(static_cast<std::size_t>(stage)); }

private:
    ad::Tensor<T> run_stage(int stage, const ad::Tensor<T>& latent) const;

    ModelConfig cfg_;
    ad::Tensor<T> embed_surface_w_, embed_surface_b_;
    ad::Tensor<T> embed_upper_w_, embed_upper_b_;
    ad::Tensor<T> down_w_, down_b_;
    ad::Tensor<T> up_w_, up_b_;
    ad::Tensor<T> recover_surface_w_, recover_surface_b_;
    ad::Tensor<T> recover_upper_w_, recover_upper_b_;
    std::array<std::vector<AttentionBlock<T>>, 3> stages_;
};

}  // namespace pear::model
