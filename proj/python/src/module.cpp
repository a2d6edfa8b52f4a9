#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

#include "pear/checkpoint.hpp"
#include "pear/config.hpp"
#include "pear/data.hpp"
#include "pear/errors.hpp"
#include "pear/hpx_grid.hpp"
#include "pear/metrics.hpp"
#include "pear/model.hpp"
#include "pear/train.hpp"

namespace py = pybind11;
using namespace pear;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using I64 = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_numpy(std::vector<T> v, std::vector<py::ssize_t> shape) {
    auto* heap = new std::vector<T>(std::move(v));
    py::capsule owner(heap, [](void* p) { delete static_cast<std::vector<T>*>(p); });
    return py::array_t<T>(shape, heap->data(), owner);
}

std::vector<float> from_numpy(const F32& a, std::vector<py::ssize_t> expect, const char* what) {
    std::vector<py::ssize_t> got(a.shape(), a.shape() + a.ndim());
    if (got != expect) {
        std::string e = std::string(what) + ": expected shape (";
        for (std::size_t i = 0; i < expect.size(); ++i) e += (i ? ", " : "") + std::to_string(expect[i]);
        throw DimensionError(e + ")");
    }
    return {a.data(), a.data() + a.size()};
}

config::RunConfig make_config(const std::map<std::string, py::object>& overrides) {
    config::KeyValues kv;
    for (const auto& [k, v] : overrides) {
        if (py::isinstance<py::bool_>(v)) {
            kv[k] = v.cast<bool>() ? "true" : "false";
        } else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
            std::string s;
            for (auto item : v) s += (s.empty() ? "" : ",") + py::str(item).cast<std::string>();
            kv[k] = s;
        } else {
            kv[k] = py::str(v).cast<std::string>();
        }
    }
    return config::with_overrides(config::RunConfig{}, kv);
}

py::dict state_to_dict(const data::VolumetricState& s) {
    const auto n = static_cast<py::ssize_t>(s.n_pix());
    py::dict d;
    d["surface"] = to_numpy(s.surface, {n, 4});
    d["upper"] = to_numpy(s.upper, {n, 13, 5});
    d["day_of_year"] = s.day_of_year;
    d["n_side"] = s.n_side;
    return d;
}

data::VolumetricState dict_to_state(const py::dict& d) {
    data::VolumetricState s;
    s.n_side = d["n_side"].cast<std::int64_t>();
    const auto n = static_cast<py::ssize_t>(s.n_pix());
    s.surface = from_numpy(d["surface"].cast<F32>(), {n, 4}, "surface");
    s.upper = from_numpy(d["upper"].cast<F32>(), {n, 13, 5}, "upper");
    s.day_of_year = d.contains("day_of_year") ? d["day_of_year"].cast<int>() : 1;
    return s;
}

class PyModel {
public:
    explicit PyModel(const std::map<std::string, py::object>& overrides) : rc_(make_config(overrides)), model_(rc_.model) {}

    std::int64_t parameter_count() const { return model_.parameter_count(); }
    std::int64_t n_side() const { return rc_.model.n_side; }
    std::map<std::string, std::string> config() const { return rc_.to_kv(); }

    py::tuple forward(const F32& surface, const F32& upper) const {
        const auto n = 12 * rc_.model.n_side * rc_.model.n_side;
        auto s = from_numpy(surface, {n, 4}, "surface");
        auto u = from_numpy(upper, {n, 13, 5}, "upper");
        model::Prediction<float> out;
        {
            py::gil_scoped_release release;
            ad::NoGradGuard guard;
            out = model_.forward(ad::Tensor<float>::from({n, 4}, std::move(s)), ad::Tensor<float>::from({n, 13, 5}, std::move(u)));
        }
        return py::make_tuple(to_numpy(out.surface.values(), {n, 4}), to_numpy(out.upper.values(), {n, 13, 5}));
    }

    std::vector<std::pair<std::string, std::vector<std::int64_t>>> shape_trace() const {
        const auto n = 12 * rc_.model.n_side * rc_.model.n_side;
        model::ShapeTrace trace;
        ad::NoGradGuard guard;
        model_.forward(ad::Tensor<float>::zeros({n, 4}), ad::Tensor<float>::zeros({n, 13, 5}), &trace);
        return {trace.begin(), trace.end()};
    }

    std::map<std::string, py::array_t<float>> parameters() const {
        std::map<std::string, py::array_t<float>> out;
        for (const auto& np : model_.named_parameters()) {
            std::vector<py::ssize_t> shape(np.tensor.shape().begin(), np.tensor.shape().end());
            out.emplace(np.name, to_numpy(np.tensor.values(), shape));
        }
        return out;
    }

    void load(const std::filesystem::path& path) { train::load_model(model_, path); }
    void save(const std::filesystem::path& path) const { ckpt::write_checkpoint(path, model_.to_records()); }

private:
    config::RunConfig rc_;
    model::PearModel<float> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "HEALPix windowed-attention weather model";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<RangeError>(m, "RangeError", PyExc_IndexError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
    py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_FloatingPointError);

    m.def("n_pix", [](std::int64_t n_side) { return hpx::GridSpec::from_nside(n_side).n_pix; }, py::arg("n_side"));
    m.def("pixel_area", [](std::int64_t n_side) { return hpx::GridSpec::from_nside(n_side).pixel_area; }, py::arg("n_side"));
    m.def(
        "nest2ring",
        [](std::int64_t n_side, const I64& idx) {
            const auto spec = hpx::GridSpec::from_nside(n_side);
            std::vector<std::int64_t> out(static_cast<std::size_t>(idx.size()));
            for (py::ssize_t i = 0; i < idx.size(); ++i) out[static_cast<std::size_t>(i)] = hpx::nest2ring(spec, idx.data()[i]);
            return to_numpy(std::move(out), {idx.size()});
        },
        py::arg("n_side"), py::arg("nested"));
    m.def(
        "ring2nest",
        [](std::int64_t n_side, const I64& idx) {
            const auto spec = hpx::GridSpec::from_nside(n_side);
            std::vector<std::int64_t> out(static_cast<std::size_t>(idx.size()));
            for (py::ssize_t i = 0; i < idx.size(); ++i) out[static_cast<std::size_t>(i)] = hpx::ring2nest(spec, idx.data()[i]);
            return to_numpy(std::move(out), {idx.size()});
        },
        py::arg("n_side"), py::arg("ring"));
    m.def(
        "pixel_centers",
        [](std::int64_t n_side) {
            const auto spec = hpx::GridSpec::from_nside(n_side);
            std::vector<double> out(static_cast<std::size_t>(2 * spec.n_pix));
            for (std::int64_t p = 0; p < spec.n_pix; ++p) {
                const auto c = hpx::pixel_center(spec, {hpx::Scheme::nested, p});
                out[static_cast<std::size_t>(2 * p)] = c.theta;
                out[static_cast<std::size_t>(2 * p + 1)] = c.phi;
            }
            return to_numpy(std::move(out), {spec.n_pix, 2});
        },
        py::arg("n_side"), "(colatitude, longitude) in radians of every pixel, nested order");
    m.def(
        "ang2pix",
        [](std::int64_t n_side, double theta, double phi) {
            return hpx::ang2pix_nested(hpx::GridSpec::from_nside(n_side), {theta, phi});
        },
        py::arg("n_side"), py::arg("theta"), py::arg("phi"));

    m.def(
        "count_parameters", [](const std::map<std::string, py::object>& cfg) { return model::count_parameters(make_config(cfg).model); },
        py::arg("config") = std::map<std::string, py::object>{});

    m.def(
        "gen_synthetic",
        [](std::uint64_t seed, std::int64_t n_side, std::int64_t n_steps, double angular_velocity, double noise, int max_degree,
           int start_day_of_year) {
            data::SyntheticConfig c{seed, n_side, n_steps, angular_velocity, noise, max_degree, start_day_of_year};
            py::list out;
            for (const auto& s : data::gen_synthetic(c)) out.append(state_to_dict(s));
            return out;
        },
        py::arg("seed") = 0, py::arg("n_side") = 8, py::arg("n_steps") = 16, py::arg("angular_velocity") = 0.2,
        py::arg("noise") = 0.01, py::arg("max_degree") = 3, py::arg("start_day_of_year") = 1);

    m.def(
        "latlon_to_hpx",
        [](const F32& values, std::int64_t n_side) {
            if (values.ndim() != 2 && values.ndim() != 3) throw DimensionError("values must be (n_lat, n_lon[, channels])");
            data::LatLonGrid g;
            g.n_lat = values.shape(0);
            g.n_lon = values.shape(1);
            g.channels = values.ndim() == 3 ? values.shape(2) : 1;
            g.values.assign(values.data(), values.data() + values.size());
            const auto spec = hpx::GridSpec::from_nside(n_side);
            auto r = data::latlon_to_hpx(g, spec);
            return py::make_tuple(to_numpy(std::move(r.values), {spec.n_pix, g.channels}), r.nan_count, r.warnings);
        },
        py::arg("values"), py::arg("n_side"), "Bilinear resampling; returns (field, nan_count, warnings).");
    m.def(
        "hpx_to_latlon",
        [](const F32& field, std::int64_t n_side, std::int64_t n_lat, std::int64_t n_lon) {
            const auto spec = hpx::GridSpec::from_nside(n_side);
            const std::int64_t channels = field.ndim() == 2 ? field.shape(1) : 1;
            std::vector<float> f(field.data(), field.data() + field.size());
            auto g = data::hpx_to_latlon(f, spec, channels, n_lat, n_lon);
            return to_numpy(std::move(g.values), {n_lat, n_lon, channels});
        },
        py::arg("field"), py::arg("n_side"), py::arg("n_lat"), py::arg("n_lon"));

    m.def(
        "rmse",
        [](const F32& y, const F32& yhat) {
            return metrics::rmse({y.data(), static_cast<std::size_t>(y.size())}, {yhat.data(), static_cast<std::size_t>(yhat.size())});
        },
        py::arg("y"), py::arg("yhat"));
    m.def(
        "acc",
        [](const F32& y, const F32& yhat, const F32& clim) {
            return metrics::acc({y.data(), static_cast<std::size_t>(y.size())}, {yhat.data(), static_cast<std::size_t>(yhat.size())},
                                {clim.data(), static_cast<std::size_t>(clim.size())});
        },
        py::arg("y"), py::arg("yhat"), py::arg("clim"), "Anomaly correlation, or None when an anomaly norm is zero.");
    m.def(
        "persistence_l1",
        [](const py::list& states, double w) {
            std::vector<data::VolumetricState> s;
            for (auto item : states) s.push_back(dict_to_state(item.cast<py::dict>()));
            return data::persistence_l1(s, w);
        },
        py::arg("states"), py::arg("surface_weight") = 0.25);

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::map<std::string, py::object>&>(), py::arg("config") = std::map<std::string, py::object>{},
             "Config keys as in the CLI config file, e.g. {'model.n_side': 8, 'seed': 3}.")
        .def_property_readonly("parameter_count", &PyModel::parameter_count)
        .def_property_readonly("n_side", &PyModel::n_side)
        .def_property_readonly("config", &PyModel::config)
        .def("forward", &PyModel::forward, py::arg("surface"), py::arg("upper"))
        .def("shape_trace", &PyModel::shape_trace)
        .def("parameters", &PyModel::parameters)
        .def("load", &PyModel::load, py::arg("path"))
        .def("save", &PyModel::save, py::arg("path"));

    m.def(
        "train",
        [](const std::map<std::string, py::object>& cfg, const std::filesystem::path& run_dir, std::int64_t steps) {
            const auto rc = make_config(cfg);
            const auto raw = data::gen_synthetic(rc.synthetic());
            const auto stats = data::NormStats::compute(raw);
            std::vector<data::VolumetricState> norm;
            for (const auto& s : raw) norm.push_back(stats.normalize(s));
            train::Trainer<float> trainer(rc, norm);
            train::TrainLog log;
            {
                py::gil_scoped_release release;
                log = trainer.run(run_dir, steps < 0 ? rc.train.steps : steps);
            }
            py::dict out;
            std::vector<double> losses;
            for (const auto& [step, loss] : log.step_loss) losses.push_back(loss);
            out["losses"] = losses;
            out["val_loss"] = log.val_loss.empty() ? py::object(py::none()) : py::cast(log.val_loss.back().second);
            out["aborted"] = log.aborted;
            out["checkpoint"] = log.last_checkpoint;
            return out;
        },
        py::arg("config"), py::arg("run_dir"), py::arg("steps") = -1,
        "Train on synthetic data generated from the config; returns the loss log.");
}
