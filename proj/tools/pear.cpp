#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pear/config.hpp"
#include "pear/data.hpp"
#include "pear/errors.hpp"
#include "pear/hpx_grid.hpp"
#include "pear/metrics.hpp"
#include "pear/model.hpp"
#include "pear/train.hpp"
#include "pear/window_shift.hpp"

using namespace pear;
namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
    std::string path;
    std::vector<std::string> sets;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", path, "key = value config file");
        app->add_option("--set", sets, "override a config key (key=value), repeatable");
    }

    config::RunConfig load() const {
        auto rc = config::load_run_config(path);
        config::KeyValues kv;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            kv[s.substr(0, eq)] = s.substr(eq + 1);
        }
        return kv.empty() ? rc : config::with_overrides(rc, kv);
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path.string());
    os << text;
}

config::RunConfig run_config(const fs::path& run_dir) {
    const auto path = run_dir / "config.txt";
    if (!fs::exists(path)) throw ConfigError(run_dir.string() + " has no config.txt; run `pear train` first");
    return config::RunConfig::from_kv(config::read_kv_file(path));
}

// Dataset for a run: --data when given, else the copy stored in the run directory.
data::Dataset run_dataset(const fs::path& run_dir, const std::string& data_dir) {
    auto ds = data::load_dataset(data_dir.empty() ? run_dir / "data" : fs::path(data_dir));
    if (!ds.stats) ds.stats = data::NormStats::compute(ds.states);
    return ds;
}

fs::path latest_checkpoint(const fs::path& run_dir) {
    if (fs::exists(run_dir / "final.ckpt")) return run_dir / "final.ckpt";
    fs::path best;
    for (const auto& e : fs::directory_iterator(run_dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("ckpt_step", 0) == 0 && (best.empty() || name > best.filename().string())) best = e.path();
    }
    if (best.empty()) throw FormatError("no checkpoint in " + run_dir.string());
    return best;
}

// Pairs held out for validation, as in the trainer.
std::pair<std::int64_t, std::int64_t> split(const config::RunConfig& rc, std::size_t n_states) {
    const auto pairs = static_cast<std::int64_t>(n_states) - 1;
    const auto n_val = std::min(rc.train.n_val, pairs - 1);
    return {pairs - n_val, n_val};
}

std::vector<data::VolumetricState> normalized(const data::Dataset& ds) {
    std::vector<data::VolumetricState> out;
    for (const auto& s : ds.states) out.push_back(ds.stats->normalize(s));
    return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const ConfigArgs& ca, const std::string& out) {
    const auto rc = ca.load();
    data::Dataset ds;
    ds.states = data::gen_synthetic(rc.synthetic());
    ds.stats = data::NormStats::compute(ds.states);
    data::save_dataset(out, ds);
    write_text(fs::path(out) / "config.txt", rc.to_text());
    std::cout << "wrote " << ds.states.size() << " states at n_side " << rc.model.n_side << " to " << out << "\n"
              << "persistence L1 (physical units): " << data::persistence_l1(ds.states, rc.train.surface_loss_weight) << "\n";
    return 0;
}

int cmd_resample(const std::string& in, std::int64_t n_side, const std::string& out) {
    const auto src = data::read_sphere_file(in);
    const auto& h = src.header;
    if (h.grid != "latlon") throw FormatError(in + " is not a lat-lon file");
    if (h.shape.size() < 2 || h.shape.size() > 3 || h.shape[0] != h.n_lat || h.shape[1] != h.n_lon) {
        throw FormatError("lat-lon files must have shape (n_lat, n_lon[, channels]) matching n_lat and n_lon");
    }
    data::LatLonGrid g;
    g.n_lat = h.n_lat;
    g.n_lon = h.n_lon;
    g.channels = h.shape.size() == 3 ? h.shape[2] : 1;
    g.values = src.payload;
    const auto spec = hpx::GridSpec::from_nside(n_side);
    const auto r = data::latlon_to_hpx(g, spec);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    data::SphereTensorFile dst;
    dst.header = h;
    dst.header.grid = "healpix";
    dst.header.ordering = "nested";
    dst.header.n_side = n_side;
    dst.header.n_lat = dst.header.n_lon = 0;
    dst.header.shape = {spec.n_pix, g.channels};
    dst.payload = r.values;
    data::write_sphere_file(out, dst);
    std::cout << "resampled " << g.n_lat << "x" << g.n_lon << " to n_side " << n_side << " (" << spec.n_pix << " pixels), "
              << r.nan_count << " NaN values\n";
    return 0;
}

template <typename T>
int train_with(const config::RunConfig& rc, const data::Dataset& ds, const fs::path& run, bool resume, std::int64_t until) {
    train::Trainer<T> trainer(rc, normalized(ds));
    if (resume) {
        const auto ckpt = latest_checkpoint(run);
        trainer.load(ckpt);
        std::cout << "resumed from " << ckpt.filename().string() << " at step " << trainer.step() << "\n";
    }
    std::cout << "training " << trainer.model().parameter_count() << " parameters on " << trainer.n_train_pairs()
              << " pairs (" << trainer.n_val_pairs() << " held out) for " << until << " steps\n";
    const auto log_every = std::max<std::int64_t>(1, rc.train.log_every);
    const auto log = trainer.run(run, until, [&](std::int64_t step, double loss) {
        if (step % log_every == 0 || step == until) std::cout << "step " << step << " loss " << loss << "\n" << std::flush;
    });
    if (log.aborted) {
        std::cerr << "aborted: " << log.abort_reason << "; parameters saved to " << log.last_checkpoint.string() << "\n";
        return 2;
    }
    if (!log.val_loss.empty()) std::cout << "validation L1 " << log.val_loss.back().second << "\n";
    std::cout << "final checkpoint " << log.last_checkpoint.string() << "\n";
    return 0;
}

int cmd_train(const ConfigArgs& ca, const std::string& data_dir, const std::string& run_dir, bool resume, std::int64_t steps) {
    const fs::path run(run_dir);
    auto rc = resume ? run_config(run) : ca.load();
    if (steps >= 0) rc.train.steps = steps;
    fs::create_directories(run);
    write_text(run / "config.txt", rc.to_text());
    data::Dataset ds;
    if (!data_dir.empty()) {
        ds = run_dataset(run, data_dir);
    } else if (resume || fs::exists(run / "data" / "surface.stf")) {
        ds = run_dataset(run, "");
    } else {
        ds.states = data::gen_synthetic(rc.synthetic());
        ds.stats = data::NormStats::compute(ds.states);
    }
    data::save_dataset(run / "data", ds);
    return rc.train.precision == config::Precision::f64 ? train_with<double>(rc, ds, run, resume, rc.train.steps)
                                                         : train_with<float>(rc, ds, run, resume, rc.train.steps);
}

template <typename T>
train::RolloutReport rollout_with(const config::RunConfig& rc, const data::Dataset& ds, const fs::path& ckpt,
                                  const std::vector<std::int64_t>& init, int steps, const metrics::ClimatologyTable& clim) {
    model::PearModel<T> m(rc.model);
    train::load_model(m, ckpt);
    return train::rollout<T>(m, *ds.stats, ds.states, init, steps, clim);
}

// Climatology from the given dataset directories, or from the run's training states.
train::RolloutReport run_rollout(const config::RunConfig& rc, const data::Dataset& ds, const fs::path& ckpt,
                                 const std::vector<std::int64_t>& init, int steps, const std::vector<std::string>& clim_dirs) {
    const auto [n_train, n_val] = split(rc, ds.states.size());
    std::vector<data::VolumetricState> years;
    for (const auto& dir : clim_dirs) {
        auto extra = data::load_dataset(dir).states;
        years.insert(years.end(), extra.begin(), extra.end());
    }
    if (clim_dirs.empty()) years.assign(ds.states.begin(), ds.states.begin() + n_train + 1);
    const auto clim = metrics::ClimatologyTable::build(years);
    for (const auto& w : clim.warnings()) std::cerr << "climatology: " << w << "\n";
    return rc.train.precision == config::Precision::f64 ? rollout_with<double>(rc, ds, ckpt, init, steps, clim)
                                                         : rollout_with<float>(rc, ds, ckpt, init, steps, clim);
}

void print_summary(const train::RolloutReport& rep) {
    std::cout << "lead  variable  rmse          acc\n";
    for (const auto& r : rep.rows) {
        if (r.level != metrics::kSurfaceLevel && r.level != metrics::kLevelMean) continue;
        std::cout << std::setw(4) << r.lead_time_days << "  " << std::setw(8) << std::left << r.variable << std::right << "  "
                  << std::setw(12) << r.rmse << "  " << (r.acc ? std::to_string(*r.acc) : std::string("n/a")) << "\n";
    }
    if (rep.unstable) std::cout << "unstable: report truncated after lead " << rep.completed_steps << "\n";
}

int cmd_eval(const std::string& run_dir, const std::string& data_dir, const std::string& ckpt_arg,
             const std::vector<std::string>& clim_dirs) {
    const fs::path run(run_dir);
    const auto rc = run_config(run);
    const auto ds = run_dataset(run, data_dir);
    const auto ckpt = ckpt_arg.empty() ? latest_checkpoint(run) : fs::path(ckpt_arg);
    const auto [n_train, n_val] = split(rc, ds.states.size());
    std::vector<std::int64_t> init;
    for (std::int64_t i = n_train; i < n_train + n_val; ++i) init.push_back(i);
    if (init.empty()) throw ContractError("the run holds out no validation pairs (train.n_val = 0)");
    const auto rep = run_rollout(rc, ds, ckpt, init, 1, clim_dirs);
    metrics::write_metrics_csv(run / "metrics_eval.csv", rep.rows);
    print_summary(rep);
    std::cout << "wrote " << (run / "metrics_eval.csv").string() << "\n";
    return 0;
}

int cmd_rollout(const std::string& run_dir, const std::string& data_dir, const std::string& ckpt_arg, int steps,
                std::vector<std::int64_t> init, const std::vector<std::string>& clim_dirs) {
    const fs::path run(run_dir);
    const auto rc = run_config(run);
    const auto ds = run_dataset(run, data_dir);
    const auto ckpt = ckpt_arg.empty() ? latest_checkpoint(run) : fs::path(ckpt_arg);
    if (init.empty()) init.push_back(0);
    const auto rep = run_rollout(rc, ds, ckpt, init, steps, clim_dirs);
    metrics::write_metrics_csv(run / "metrics_rollout.csv", rep.rows);
    print_summary(rep);
    std::cout << rep.forward_count << " forward passes; wrote " << (run / "metrics_rollout.csv").string() << "\n";
    return rep.unstable ? 3 : 0;
}

int cmd_project(const std::string& in, const std::string& out, std::int64_t n_lat, std::int64_t n_lon, std::int64_t channel,
                std::int64_t index) {
    const auto f = data::read_sphere_file(in);
    const auto& h = f.header;
    if (h.grid != "healpix") throw FormatError(in + " is not a HEALPix file");
    const auto spec = hpx::GridSpec::from_nside(h.n_side);
    // Shape (..., n_pix, ...): flatten leading dims to the record index and
    // trailing dims to channels.
    std::size_t pix_axis = 0;
    while (pix_axis < h.shape.size() && h.shape[pix_axis] != spec.n_pix) ++pix_axis;
    if (pix_axis == h.shape.size()) throw FormatError("no axis of length 12 n_side^2 in " + in);
    std::int64_t records = 1, channels = 1;
    for (std::size_t i = 0; i < pix_axis; ++i) records *= h.shape[i];
    for (std::size_t i = pix_axis + 1; i < h.shape.size(); ++i) channels *= h.shape[i];
    if (index < 0 || index >= records) throw RangeError("--index out of range (file holds " + std::to_string(records) + ")");
    if (channel < 0 || channel >= channels) throw RangeError("--channel out of range (file holds " + std::to_string(channels) + ")");
    const auto stride = spec.n_pix * channels;
    std::vector<float> field(static_cast<std::size_t>(spec.n_pix));
    for (std::int64_t p = 0; p < spec.n_pix; ++p) {
        field[static_cast<std::size_t>(p)] = f.payload[static_cast<std::size_t>(index * stride + p * channels + channel)];
    }
    const auto g = data::hpx_to_latlon(field, spec, 1, n_lat, n_lon);
    data::write_pgm(out + ".pgm", g, 0);
    data::write_csv(out + ".csv", g, 0);
    std::cout << "wrote " << out << ".pgm and " << out << ".csv (" << n_lat << "x" << n_lon << ")\n";
    return 0;
}

int cmd_grid_info(std::int64_t n_side, bool as_json) {
    const auto spec = hpx::GridSpec::from_nside(n_side);
    const double res_deg = std::sqrt(spec.pixel_area) * 180.0 / std::numbers::pi;
    const auto census = hpx::ring_census(spec);
    nlohmann::json j{{"n_side", spec.n_side},       {"level", spec.k},
                     {"n_pix", spec.n_pix},         {"n_rings", spec.n_rings()},
                     {"pixel_area_sr", spec.pixel_area}, {"resolution_deg", res_deg},
                     {"polar_cap_pixels", spec.n_cap()}, {"face_pixels", spec.face_pixels()},
                     {"max_ring_pixels", *std::max_element(census.begin(), census.end())}};
    if (as_json) {
        std::cout << j.dump(2) << "\n";
    } else {
        for (const auto& [k, v] : j.items()) std::cout << std::setw(18) << std::left << k << v << "\n";
    }
    return 0;
}

int cmd_mask_dump(std::int64_t n_side, std::int64_t depth, std::int64_t w_hp, std::int64_t w_d, bool unshifted,
                  const std::string& out) {
    const auto spec = hpx::GridSpec::from_nside(n_side);
    const auto layout = unshifted ? window::WindowLayout::unshifted(spec, depth, w_hp, w_d)
                                  : window::WindowLayout::shifted(spec, depth, w_hp, w_d);
    std::map<int, std::int64_t> by_regions;
    for (std::int64_t w = 0; w < layout.n_windows(); ++w) ++by_regions[layout.regions_in_window(w)];
    std::cout << layout.n_windows() << " windows of " << layout.window_voxels() << " voxels\n";
    for (const auto& [r, n] : by_regions) std::cout << "  " << n << " windows with " << r << " region(s)\n";
    if (!out.empty()) {
        std::ofstream os(out, std::ios::trunc);
        if (!os) throw FormatError("cannot write " + out);
        const auto w = layout.window_voxels();
        const auto masks = layout.masks();
        os << "window,row,col,mask\n";
        for (std::int64_t g = 0; g < layout.n_windows(); ++g) {
            for (std::int64_t i = 0; i < w; ++i) {
                for (std::int64_t k = 0; k < w; ++k) {
                    const float m = masks[static_cast<std::size_t>((g * w + i) * w + k)];
                    if (m != 0.0f) os << g << ',' << i << ',' << k << ',' << m << '\n';
                }
            }
        }
        std::cout << "wrote non-zero mask entries to " << out << "\n";
    }
    return 0;
}

int cmd_params_count(const ConfigArgs& ca, bool breakdown) {
    const auto rc = ca.load();
    const auto total = model::count_parameters(rc.model);
    std::cout << total << "\n";
    if (breakdown) {
        const model::PearModel<float> m(rc.model);
        std::map<std::string, std::int64_t> groups;
        for (const auto& np : m.named_parameters()) {
            const auto dot = np.name.find('.');
            auto key = np.name.substr(0, dot);
            if (np.name.find("position_bias") != std::string::npos) key += " (position bias)";
            groups[key] += np.tensor.numel();
        }
        for (const auto& [k, n] : groups) std::cout << "  " << std::setw(28) << std::left << k << n << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PEAR: windowed attention on HEALPix for medium-range weather prediction"};
    app.require_subcommand(1);

    ConfigArgs gen_cfg;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic state sequence");
    gen_cfg.attach(gen);
    gen->add_option("-o,--out", gen_out, "output dataset directory")->required();

    std::string rs_in, rs_out;
    std::int64_t rs_nside = 64;
    auto* rs = app.add_subcommand("resample", "lat-lon sphere-tensor file to HEALPix");
    rs->add_option("--in", rs_in)->required();
    rs->add_option("--nside", rs_nside)->required();
    rs->add_option("--out", rs_out)->required();

    ConfigArgs tr_cfg;
    std::string tr_data, tr_run;
    bool tr_resume = false;
    std::int64_t tr_steps = -1;
    auto* tr = app.add_subcommand("train", "train a model; outputs go to the run directory");
    tr_cfg.attach(tr);
    tr->add_option("--data", tr_data, "dataset directory (default: generate from the config)");
    tr->add_option("--run", tr_run, "run directory")->required();
    tr->add_option("--steps", tr_steps, "total optimizer steps (overrides train.steps)");
    tr->add_flag("--resume", tr_resume, "continue from the newest checkpoint in the run directory");

    std::string ev_run, ev_data, ev_ckpt;
    std::vector<std::string> ev_clim;
    auto* ev = app.add_subcommand("eval", "one-day metrics on the held-out pairs");
    ev->add_option("--run", ev_run)->required();
    ev->add_option("--data", ev_data);
    ev->add_option("--checkpoint", ev_ckpt);
    ev->add_option("--clim", ev_clim, "dataset directories for the climatology (default: the training states)");

    std::string ro_run, ro_data, ro_ckpt;
    int ro_steps = 10;
    std::vector<std::int64_t> ro_init;
    std::vector<std::string> ro_clim;
    auto* ro = app.add_subcommand("rollout", "iterated forecasts scored at each lead day");
    ro->add_option("--run", ro_run)->required();
    ro->add_option("--data", ro_data);
    ro->add_option("--checkpoint", ro_ckpt);
    ro->add_option("--steps", ro_steps, "lead days, 1..10");
    ro->add_option("--clim", ro_clim, "dataset directories for the climatology (default: the training states)");
    ro->add_option("--init", ro_init, "initial state indices (default 0)")->delimiter(',');

    std::string pj_in, pj_out;
    std::int64_t pj_lat = 181, pj_lon = 360, pj_channel = 0, pj_index = 0;
    auto* pj = app.add_subcommand("project", "HEALPix field to a lat-lon raster (PGM and CSV)");
    pj->add_option("--in", pj_in)->required();
    pj->add_option("--out", pj_out, "output path without extension")->required();
    pj->add_option("--n-lat", pj_lat);
    pj->add_option("--n-lon", pj_lon);
    pj->add_option("--channel", pj_channel, "channel after the pixel axis (flattened)");
    pj->add_option("--index", pj_index, "record before the pixel axis (flattened)");

    auto* grid = app.add_subcommand("grid", "grid utilities");
    grid->require_subcommand(1);
    std::int64_t gi_nside = 64;
    bool gi_json = false;
    auto* gi = grid->add_subcommand("info", "HEALPix grid facts");
    gi->add_option("--nside", gi_nside);
    gi->add_flag("--json", gi_json);

    auto* mask = app.add_subcommand("mask", "attention mask utilities");
    mask->require_subcommand(1);
    std::int64_t md_nside = 4, md_depth = 8, md_w = 16, md_wd = 2;
    bool md_unshifted = false;
    std::string md_out;
    auto* md = mask->add_subcommand("dump", "window and region statistics of a shift mask");
    md->add_option("--nside-patch", md_nside);
    md->add_option("--depth", md_depth);
    md->add_option("--window", md_w);
    md->add_option("--window-d", md_wd);
    md->add_flag("--unshifted", md_unshifted);
    md->add_option("--out", md_out, "CSV of non-zero mask entries");

    auto* params = app.add_subcommand("params", "parameter utilities");
    params->require_subcommand(1);
    ConfigArgs pc_cfg;
    bool pc_breakdown = false;
    auto* pc = params->add_subcommand("count", "trainable parameters of a configuration");
    pc_cfg.attach(pc);
    pc->add_flag("--breakdown", pc_breakdown);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_gen_data(gen_cfg, gen_out);
        if (*rs) return cmd_resample(rs_in, rs_nside, rs_out);
        if (*tr) return cmd_train(tr_cfg, tr_data, tr_run, tr_resume, tr_steps);
        if (*ev) return cmd_eval(ev_run, ev_data, ev_ckpt, ev_clim);
        if (*ro) return cmd_rollout(ro_run, ro_data, ro_ckpt, ro_steps, ro_init, ro_clim);
        if (*pj) return cmd_project(pj_in, pj_out, pj_lat, pj_lon, pj_channel, pj_index);
        if (*gi) return cmd_grid_info(gi_nside, gi_json);
        if (*md) return cmd_mask_dump(md_nside, md_depth, md_w, md_wd, md_unshifted, md_out);
        if (*pc) return cmd_params_count(pc_cfg, pc_breakdown);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
