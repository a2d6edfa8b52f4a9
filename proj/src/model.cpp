#include "pear/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "pear/errors.hpp"
#include "pear/ops.hpp"

namespace pear::model {
namespace {

using ad::Shape;
using ad::Tensor;

bool is_power_of_four(std::int64_t v) {
    if (v <= 0 || (v & (v - 1)) != 0) return false;
    while (v > 1) {
        if (v % 4 != 0) return false;
        v /= 4;
    }
    return true;
}

std::int64_t log4(std::int64_t v) {
    std::int64_t k = 0;
    while (v > 1) {
        v /= 4;
        ++k;
    }
    return k;
}

template <typename T>
class Initializer {
public:
    Initializer(std::uint64_t seed, double stddev) : rng_(seed), normal_(0.0, stddev), stddev_(stddev) {}

    Tensor<T> weight(Shape shape) {
        std::vector<T> v(static_cast<std::size_t>(ad::numel(shape)));
        for (auto& x : v) {
            double s = 0.0;
            do {
                s = normal_(rng_);
            } while (std::abs(s) > 2.0 * stddev_);
            x = static_cast<T>(s);
        }
        return param(std::move(shape), std::move(v));
    }

    static Tensor<T> constant(Shape shape, T value) {
        const auto n = static_cast<std::size_t>(ad::numel(shape));
        return param(std::move(shape), std::vector<T>(n, value));
    }

private:
    static Tensor<T> param(Shape shape, std::vector<T> values) {
        auto t = Tensor<T>::from(std::move(shape), std::move(values));
        t.set_requires_grad(true);
        return t;
    }

    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
    double stddev_;
};

std::int64_t block_parameters(std::int64_t dim, std::int64_t heads, std::int64_t window, std::int64_t mlp_ratio) {
    const std::int64_t hidden = dim * mlp_ratio;
    return (3 * dim * dim + 3 * dim) + (dim * dim + dim) + 4 * dim + (dim * hidden + hidden) + (hidden * dim + dim) +
           heads * window * window;
}

std::int64_t parse_int(const std::map<std::string, std::string>& kv, const std::string& key, std::int64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        std::size_t used = 0;
        const long long v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + it->second + "'");
    }
}

std::array<std::int64_t, 3> parse_triple(const std::map<std::string, std::string>& kv, const std::string& key,
                                         std::array<std::int64_t, 3> fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::array<std::int64_t, 3> out{};
    std::string s = it->second;
    for (auto& ch : s) {
        if (ch == ',') ch = ' ';
    }
    std::istringstream is(s);
    for (auto& v : out) {
        if (!(is >> v)) throw ConfigError("config key '" + key + "': expected three integers, got '" + it->second + "'");
    }
    return out;
}

}  // namespace

hpx::GridSpec ModelConfig::patch_grid() const {
    const auto g = grid();
    return hpx::GridSpec::from_level(g.k - static_cast<int>(log4(patch_hp)));
}

hpx::GridSpec ModelConfig::bottleneck_grid() const { return hpx::GridSpec::from_level(patch_grid().k - 1); }

std::int64_t ModelConfig::effective_window_hp(const hpx::GridSpec& stage_grid) const {
    return std::min(window_hp, stage_grid.face_pixels());
}

void ModelConfig::validate() const {
    if (n_side <= 0 || (n_side & (n_side - 1)) != 0) throw ConfigError("n_side must be a power of two");
    if (!is_power_of_four(patch_hp)) throw ConfigError("patch_hp must be a power of 4");
    if (!is_power_of_four(window_hp)) throw ConfigError("window_hp must be a power of 4");
    // Patching consumes log4(patch_hp) nesting levels and the bottleneck one more.
    if (n_side * n_side < patch_hp) {
        throw ConfigError("n_side " + std::to_string(n_side) + " too small for patches of " + std::to_string(patch_hp) +
                          " pixels");
    }
    if (n_side * n_side < patch_hp * 4) {
        throw ConfigError("n_side " + std::to_string(n_side) + " leaves no room for the downsampling step");
    }
    if (patch_d <= 0 || upper_levels <= 0 || surface_channels <= 0 || upper_channels <= 0) {
        throw ConfigError("channel and level counts must be positive");
    }
    if (depth() % window_d != 0) {
        throw ConfigError("window_d " + std::to_string(window_d) + " does not divide the latent depth " +
                          std::to_string(depth()));
    }
    for (std::size_t s = 0; s < 3; ++s) {
        if (depths[s] < 0 || depths[s] % 2 != 0) throw ConfigError("stage depths must be even");
        const std::int64_t dim = s == 1 ? bottleneck_dim : embed_dim;
        if (heads[s] <= 0 || dim % heads[s] != 0) {
            throw ConfigError("stage " + std::to_string(s + 1) + ": heads must divide the embedding dimension");
        }
    }
    if (embed_dim <= 0 || bottleneck_dim <= 0 || mlp_ratio <= 0) throw ConfigError("dimensions must be positive");
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
    auto triple = [](const std::array<std::int64_t, 3>& a) {
        return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]);
    };
    std::ostringstream init_std_text;
    init_std_text.precision(17);
    init_std_text << init_std;
    return {
        {"model.n_side", std::to_string(n_side)},
        {"model.embed_dim", std::to_string(embed_dim)},
        {"model.bottleneck_dim", std::to_string(bottleneck_dim)},
        {"model.depths", triple(depths)},
        {"model.heads", triple(heads)},
        {"model.window_hp", std::to_string(window_hp)},
        {"model.window_d", std::to_string(window_d)},
        {"model.patch_hp", std::to_string(patch_hp)},
        {"model.patch_d", std::to_string(patch_d)},
        {"model.surface_channels", std::to_string(surface_channels)},
        {"model.upper_channels", std::to_string(upper_channels)},
        {"model.upper_levels", std::to_string(upper_levels)},
        {"model.mlp_ratio", std::to_string(mlp_ratio)},
        {"model.shift_windows", shift_windows ? "true" : "false"},
        {"model.init_seed", std::to_string(init_seed)},
        {"model.init_std", init_std_text.str()},
    };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
    ModelConfig c;
    c.n_side = parse_int(kv, "model.n_side", c.n_side);
    c.embed_dim = parse_int(kv, "model.embed_dim", c.embed_dim);
    c.bottleneck_dim = parse_int(kv, "model.bottleneck_dim", c.bottleneck_dim);
    c.depths = parse_triple(kv, "model.depths", c.depths);
    c.heads = parse_triple(kv, "model.heads", c.heads);
    c.window_hp = parse_int(kv, "model.window_hp", c.window_hp);
    c.window_d = parse_int(kv, "model.window_d", c.window_d);
    c.patch_hp = parse_int(kv, "model.patch_hp", c.patch_hp);
    c.patch_d = parse_int(kv, "model.patch_d", c.patch_d);
    c.surface_channels = parse_int(kv, "model.surface_channels", c.surface_channels);
    c.upper_channels = parse_int(kv, "model.upper_channels", c.upper_channels);
    c.upper_levels = parse_int(kv, "model.upper_levels", c.upper_levels);
    c.mlp_ratio = parse_int(kv, "model.mlp_ratio", c.mlp_ratio);
    if (auto it = kv.find("model.shift_windows"); it != kv.end()) {
        if (it->second != "true" && it->second != "false") {
            throw ConfigError("model.shift_windows must be true or false");
        }
        c.shift_windows = it->second == "true";
    }
    c.init_seed = static_cast<std::uint64_t>(parse_int(kv, "model.init_seed", static_cast<std::int64_t>(c.init_seed)));
    if (auto it = kv.find("model.init_std"); it != kv.end()) {
        try {
            c.init_std = std::stod(it->second);
        } catch (const std::exception&) {
            throw ConfigError("model.init_std: expected a number");
        }
    }
    return c;
}

std::int64_t count_parameters(const ModelConfig& cfg) {
    cfg.validate();
    const std::int64_t e = cfg.embed_dim;
    const std::int64_t b = cfg.bottleneck_dim;
    const std::int64_t surf_in = cfg.patch_hp * cfg.surface_channels;
    const std::int64_t upper_in = cfg.patch_hp * cfg.patch_d * cfg.upper_channels;
    std::int64_t total = (surf_in * e + e) + (upper_in * e + e);
    total += (4 * e * b + b) + (b * 4 * e + 4 * e);
    total += (2 * e * surf_in + surf_in) + (2 * e * upper_in + upper_in);
    const std::array<hpx::GridSpec, 3> grids{cfg.patch_grid(), cfg.bottleneck_grid(), cfg.patch_grid()};
    for (std::size_t s = 0; s < 3; ++s) {
        const std::int64_t dim = s == 1 ? b : e;
        const std::int64_t window = cfg.effective_window_hp(grids[s]) * cfg.window_d;
        total += cfg.depths[s] * block_parameters(dim, cfg.heads[s], window, cfg.mlp_ratio);
    }
    return total;
}

template <typename T>
Tensor<T> AttentionBlock<T>::forward(const Tensor<T>& x) const {
    const auto& lay = *layout;
    const std::int64_t nv = lay.n_voxels();
    if (x.rank() != 2 || x.dim(0) != nv || x.dim(1) != dim) {
        throw DimensionError("attention block: expected (" + std::to_string(nv) + ", " + std::to_string(dim) +
                             "), got " + ad::shape_str(x.shape()));
    }
    const std::int64_t nw = lay.n_windows();
    const std::int64_t w = lay.window_voxels();
    const std::int64_t hd = dim / heads;

    auto xw = ad::gather_rows(x, lay.shift_partition_index());
    auto qkv = ad::linear(xw, qkv_w, qkv_b);
    qkv = ad::permute(ad::reshape(qkv, {nw, w, 3, heads, hd}), {2, 0, 3, 1, 4});
    auto parts = ad::split(qkv, 0, {1, 1, 1});
    const Shape head_shape{nw, heads, w, hd};
    ad::MaskView mask;
    if (lay.has_mask()) mask = {lay.masks(), nw, w, w};
    auto a = ad::attention(ad::reshape(parts[0], head_shape), ad::reshape(parts[1], head_shape),
                           ad::reshape(parts[2], head_shape), bias_table, mask);
    a = ad::reshape(ad::permute(a, {0, 2, 1, 3}), {nv, dim});
    a = ad::linear(a, proj_w, proj_b);
    a = ad::gather_rows(a, lay.merge_unshift_index());
    auto y = ad::add(x, ad::layer_norm(a, norm1_g, norm1_b));
    auto m = ad::linear(ad::gelu(ad::linear(y, fc1_w, fc1_b)), fc2_w, fc2_b);
    return ad::add(y, ad::layer_norm(m, norm2_g, norm2_b));
}

template <typename T>
PearModel<T>::PearModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Initializer<T> init(cfg_.init_seed, cfg_.init_std);
    const std::int64_t e = cfg_.embed_dim;
    const std::int64_t b = cfg_.bottleneck_dim;
    const std::int64_t surf_in = cfg_.patch_hp * cfg_.surface_channels;
    const std::int64_t upper_in = cfg_.patch_hp * cfg_.patch_d * cfg_.upper_channels;

    embed_surface_w_ = init.weight({surf_in, e});
    embed_surface_b_ = Initializer<T>::constant({e}, T(0));
    embed_upper_w_ = init.weight({upper_in, e});
    embed_upper_b_ = Initializer<T>::constant({e}, T(0));

    const std::int64_t depth = cfg_.depth();
    const std::array<hpx::GridSpec, 3> grids{cfg_.patch_grid(), cfg_.bottleneck_grid(), cfg_.patch_grid()};
    std::array<std::shared_ptr<const window::WindowLayout>, 2> fine_layouts;
    std::array<std::shared_ptr<const window::WindowLayout>, 2> coarse_layouts;
    for (int s = 0; s < 2; ++s) {
        const auto& g = grids[static_cast<std::size_t>(s)];
        const std::int64_t w_hp = cfg_.effective_window_hp(g);
        auto& dst = s == 0 ? fine_layouts : coarse_layouts;
        dst[0] = std::make_shared<const window::WindowLayout>(window::WindowLayout::unshifted(g, depth, w_hp, cfg_.window_d));
        dst[1] = cfg_.shift_windows ? std::make_shared<const window::WindowLayout>(
                                          window::WindowLayout::shifted(g, depth, w_hp, cfg_.window_d))
                                    : dst[0];
    }

    for (std::size_t s = 0; s < 3; ++s) {
        const std::int64_t dim = s == 1 ? b : e;
        const auto& layouts = s == 1 ? coarse_layouts : fine_layouts;
        const std::int64_t hidden = dim * cfg_.mlp_ratio;
        for (std::int64_t i = 0; i < cfg_.depths[s]; ++i) {
            AttentionBlock<T> blk;
            blk.dim = dim;
            blk.heads = cfg_.heads[s];
            blk.layout = layouts[static_cast<std::size_t>(i % 2)];
            const std::int64_t w = blk.layout->window_voxels();
            blk.qkv_w = init.weight({dim, 3 * dim});
            blk.qkv_b = Initializer<T>::constant({3 * dim}, T(0));
            blk.proj_w = init.weight({dim, dim});
            blk.proj_b = Initializer<T>::constant({dim}, T(0));
            blk.norm1_g = Initializer<T>::constant({dim}, T(1));
            blk.norm1_b = Initializer<T>::constant({dim}, T(0));
            blk.fc1_w = init.weight({dim, hidden});
            blk.fc1_b = Initializer<T>::constant({hidden}, T(0));
            blk.fc2_w = init.weight({hidden, dim});
            blk.fc2_b = Initializer<T>::constant({dim}, T(0));
            blk.norm2_g = Initializer<T>::constant({dim}, T(1));
            blk.norm2_b = Initializer<T>::constant({dim}, T(0));
            blk.bias_table = Initializer<T>::constant({blk.heads, w * w}, T(0));
            stages_[s].push_back(std::move(blk));
        }
        if (s == 0) {
            down_w_ = init.weight({4 * e, b});
            down_b_ = Initializer<T>::constant({b}, T(0));
        } else if (s == 1) {
            up_w_ = init.weight({b, 4 * e});
            up_b_ = Initializer<T>::constant({4 * e}, T(0));
        }
    }

    recover_surface_w_ = init.weight({2 * e, surf_in});
    recover_surface_b_ = Initializer<T>::constant({surf_in}, T(0));
    recover_upper_w_ = init.weight({2 * e, upper_in});
    recover_upper_b_ = Initializer<T>::constant({upper_in}, T(0));
}

template <typename T>
Tensor<T> PearModel<T>::patch_embed(const Tensor<T>& surface, const Tensor<T>& upper) const {
    const auto g = cfg_.grid();
    if (surface.shape() != Shape{g.n_pix, cfg_.surface_channels}) {
        throw DimensionError("patch_embed: surface must be " + ad::shape_str({g.n_pix, cfg_.surface_channels}) +
                             ", got " + ad::shape_str(surface.shape()));
    }
    if (upper.shape() != Shape{g.n_pix, cfg_.upper_levels, cfg_.upper_channels}) {
        throw DimensionError("patch_embed: upper must be " +
                             ad::shape_str({g.n_pix, cfg_.upper_levels, cfg_.upper_channels}) + ", got " +
                             ad::shape_str(upper.shape()));
    }
    const std::int64_t p = g.n_pix / cfg_.patch_hp;
    const std::int64_t slots = cfg_.upper_slots();
    const std::int64_t e = cfg_.embed_dim;

    auto surf = ad::reshape(surface, {p, cfg_.patch_hp * cfg_.surface_channels});
    surf = ad::reshape(ad::linear(surf, embed_surface_w_, embed_surface_b_), {p, 1, e});

    // Pad the vertical axis by replicating the last level.
    Tensor<T> padded = upper;
    const std::int64_t pad = cfg_.padded_levels() - cfg_.upper_levels;
    if (pad > 0) {
        std::vector<Tensor<T>> pieces{upper};
        auto top = ad::slice(upper, 1, cfg_.upper_levels - 1, 1);
        for (std::int64_t i = 0; i < pad; ++i) pieces.push_back(top);
        padded = ad::concat(pieces, 1);
    }
    auto up = ad::reshape(padded, {p, cfg_.patch_hp, slots, cfg_.patch_d, cfg_.upper_channels});
    up = ad::permute(up, {0, 2, 1, 3, 4});
    up = ad::reshape(up, {p, slots, cfg_.patch_hp * cfg_.patch_d * cfg_.upper_channels});
    up = ad::linear(up, embed_upper_w_, embed_upper_b_);
    return ad::concat<T>({surf, up}, 1);
}

template <typename T>
Tensor<T> PearModel<T>::run_stage(int stage, const Tensor<T>& latent) const {
    if (latent.rank() != 3) throw DimensionError("stage input must be (P, D, C)");
    const Shape shape = latent.shape();
    auto x = ad::reshape(latent, {shape[0] * shape[1], shape[2]});
    for (const auto& blk : stages_[static_cast<std::size_t>(stage)]) x = blk.forward(x);
    return ad::reshape(x, shape);
}

template <typename T>
Tensor<T> PearModel<T>::encoder_stage(const Tensor<T>& latent) const {
    return run_stage(0, latent);
}

template <typename T>
Tensor<T> PearModel<T>::bottleneck(const Tensor<T>& latent) const {
    return run_stage(1, latent);
}

template <typename T>
Tensor<T> PearModel<T>::decoder_stage(const Tensor<T>& latent) const {
    return run_stage(2, latent);
}

template <typename T>
Tensor<T> PearModel<T>::downsample(const Tensor<T>& latent) const {
    const std::int64_t p = cfg_.patch_grid().n_pix;
    const std::int64_t d = cfg_.depth();
    const std::int64_t e = cfg_.embed_dim;
    if (latent.shape() != Shape{p, d, e}) {
        throw DimensionError("downsample: expected " + ad::shape_str({p, d, e}) + ", got " + ad::shape_str(latent.shape()));
    }
    auto x = ad::permute(ad::reshape(latent, {p / 4, 4, d, e}), {0, 2, 1, 3});
    return ad::linear(ad::reshape(x, {p / 4, d, 4 * e}), down_w_, down_b_);
}

template <typename T>
Tensor<T> PearModel<T>::upsample(const Tensor<T>& latent) const {
    const std::int64_t p = cfg_.bottleneck_grid().n_pix;
    const std::int64_t d = cfg_.depth();
    const std::int64_t e = cfg_.embed_dim;
    if (latent.shape() != Shape{p, d, cfg_.bottleneck_dim}) {
        throw DimensionError("upsample: expected " + ad::shape_str({p, d, cfg_.bottleneck_dim}) + ", got " +
                             ad::shape_str(latent.shape()));
    }
    auto x = ad::reshape(ad::linear(latent, up_w_, up_b_), {p, d, 4, e});
    return ad::reshape(ad::permute(x, {0, 2, 1, 3}), {4 * p, d, e});
}

template <typename T>
Prediction<T> PearModel<T>::patch_recover(const Tensor<T>& latent) const {
    if (!latent.defined()) throw ContractError("patch_recover: missing latent (skip concatenation not performed)");
    const std::int64_t p = cfg_.patch_grid().n_pix;
    const std::int64_t d = cfg_.depth();
    if (latent.shape() != Shape{p, d, 2 * cfg_.embed_dim}) {
        throw ContractError("patch_recover: expected the skip-concatenated latent " +
                            ad::shape_str({p, d, 2 * cfg_.embed_dim}) + ", got " + ad::shape_str(latent.shape()));
    }
    const std::int64_t n_pix = cfg_.grid().n_pix;
    const std::int64_t slots = cfg_.upper_slots();
    auto parts = ad::split(latent, 1, {1, slots});
    auto surf = ad::linear(parts[0], recover_surface_w_, recover_surface_b_);
    surf = ad::reshape(surf, {n_pix, cfg_.surface_channels});

    auto up = ad::linear(parts[1], recover_upper_w_, recover_upper_b_);
    up = ad::reshape(up, {p, slots, cfg_.patch_hp, cfg_.patch_d, cfg_.upper_channels});
    up = ad::permute(up, {0, 2, 1, 3, 4});
    up = ad::reshape(up, {n_pix, cfg_.padded_levels(), cfg_.upper_channels});
    if (cfg_.padded_levels() != cfg_.upper_levels) up = ad::slice(up, 1, 0, cfg_.upper_levels);
    return {surf, up};
}

template <typename T>
Prediction<T> PearModel<T>::forward(const Tensor<T>& surface, const Tensor<T>& upper, ShapeTrace* trace) const {
    for (const Tensor<T>* t : {&surface, &upper}) {
        for (T v : t->data()) {
            if (!std::isfinite(v)) throw NonFiniteError("forward: non-finite value in the input state");
        }
    }
    auto record = [trace](const char* name, const Tensor<T>& t) {
        if (trace) trace->emplace_back(name, t.shape());
    };
    record("input.surface", surface);
    record("input.upper", upper);
    auto x = patch_embed(surface, upper);
    record("patch_embed", x);
    auto skip = encoder_stage(x);
    record("encoder_stage", skip);
    x = downsample(skip);
    record("downsample", x);
    x = bottleneck(x);
    record("bottleneck", x);
    x = upsample(x);
    record("upsample", x);
    x = decoder_stage(x);
    record("decoder_stage", x);
    x = ad::concat<T>({x, skip}, 2);
    record("skip_concat", x);
    auto out = patch_recover(x);
    record("output.surface", out.surface);
    record("output.upper", out.upper);
    return out;
}

template <typename T>
std::vector<NamedTensor<T>> PearModel<T>::named_parameters() const {
    std::vector<NamedTensor<T>> out{
        {"embed.surface.weight", embed_surface_w_}, {"embed.surface.bias", embed_surface_b_},
        {"embed.upper.weight", embed_upper_w_},     {"embed.upper.bias", embed_upper_b_},
    };
    const std::array<const char*, 3> stage_names{"encoder", "bottleneck", "decoder"};
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t i = 0; i < stages_[s].size(); ++i) {
            const auto& b = stages_[s][i];
            const std::string prefix = std::string(stage_names[s]) + "." + std::to_string(i) + ".";
            out.push_back({prefix + "qkv.weight", b.qkv_w});
            out.push_back({prefix + "qkv.bias", b.qkv_b});
            out.push_back({prefix + "proj.weight", b.proj_w});
            out.push_back({prefix + "proj.bias", b.proj_b});
            out.push_back({prefix + "norm1.gamma", b.norm1_g});
            out.push_back({prefix + "norm1.beta", b.norm1_b});
            out.push_back({prefix + "fc1.weight", b.fc1_w});
            out.push_back({prefix + "fc1.bias", b.fc1_b});
            out.push_back({prefix + "fc2.weight", b.fc2_w});
            out.push_back({prefix + "fc2.bias", b.fc2_b});
            out.push_back({prefix + "norm2.gamma", b.norm2_g});
            out.push_back({prefix + "norm2.beta", b.norm2_b});
            out.push_back({prefix + "position_bias", b.bias_table});
        }
        if (s == 0) {
            out.push_back({"downsample.weight", down_w_});
            out.push_back({"downsample.bias", down_b_});
        } else if (s == 1) {
            out.push_back({"upsample.weight", up_w_});
            out.push_back({"upsample.bias", up_b_});
        }
    }
    out.push_back({"recover.surface.weight", recover_surface_w_});
    out.push_back({"recover.surface.bias", recover_surface_b_});
    out.push_back({"recover.upper.weight", recover_upper_w_});
    out.push_back({"recover.upper.bias", recover_upper_b_});
    return out;
}

template <typename T>
std::vector<Tensor<T>> PearModel<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& np : named_parameters()) out.push_back(np.tensor);
    return out;
}

template <typename T>
std::int64_t PearModel<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& np : named_parameters()) n += np.tensor.numel();
    return n;
}

template <typename T>
std::vector<ckpt::Record> PearModel<T>::to_records() const {
    std::vector<ckpt::Record> records;
    for (const auto& np : named_parameters()) {
        ckpt::Record r;
        r.name = np.name;
        for (auto e : np.tensor.shape()) r.extents.push_back(static_cast<std::uint64_t>(e));
        r.values.assign(np.tensor.data().begin(), np.tensor.data().end());
        records.push_back(std::move(r));
    }
    return records;
}

template <typename T>
void PearModel<T>::load_records(const std::vector<ckpt::Record>& records) {
    for (auto& np : named_parameters()) {
        const ckpt::Record* r = ckpt::find_record(records, np.name);
        if (!r) throw FormatError("checkpoint lacks parameter " + np.name);
        if (r->values.size() != static_cast<std::size_t>(np.tensor.numel())) {
            throw FormatError("checkpoint parameter " + np.name + " has the wrong size");
        }
        auto dst = np.tensor.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(r->values[i]);
    }
}

template struct AttentionBlock<float>;
template struct AttentionBlock<double>;
template class PearModel<float>;
template class PearModel<double>;

}  // namespace pear::model
