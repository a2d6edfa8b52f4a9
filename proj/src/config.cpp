#include "pear/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pear/errors.hpp"

namespace pear::config {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double get_double(const KeyValues& kv, const std::string& key, double fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + it->second + "'");
    }
}

std::int64_t get_int(const KeyValues& kv, const std::string& key, std::int64_t fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        std::size_t used = 0;
        const long long v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + it->second + "'");
    }
}

bool get_bool(const KeyValues& kv, const std::string& key, bool fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError(key + ": expected true or false");
}

}  // namespace

KeyValues parse_kv(std::istream& in) {
    KeyValues kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (!kv.emplace(key, value).second) throw ConfigError("config key '" + key + "' given twice");
    }
    return kv;
}

KeyValues read_kv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    return parse_kv(in);
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
    if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
    if (steps < 0) throw ConfigError("train.steps must be non-negative");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be non-negative");
    if (n_val < 0) throw ConfigError("train.n_val must be non-negative");
}

void RunConfig::propagate_seed() {
    model.init_seed = seed;
    train.seed = seed;
}

data::SyntheticConfig RunConfig::synthetic() const {
    data::SyntheticConfig s;
    s.seed = seed;
    s.n_side = model.n_side;
    s.n_steps = data.n_steps;
    s.angular_velocity = data.angular_velocity;
    s.noise = data.noise;
    s.max_degree = data.max_degree;
    s.start_day_of_year = data.start_day_of_year;
    return s;
}

KeyValues RunConfig::to_kv() const {
    KeyValues kv = model.to_kv();
    kv["seed"] = std::to_string(seed);
    kv["train.lr"] = fmt(train.lr);
    kv["train.weight_decay"] = fmt(train.weight_decay);
    kv["train.beta1"] = fmt(train.beta1);
    kv["train.beta2"] = fmt(train.beta2);
    kv["train.eps"] = fmt(train.eps);
    kv["train.surface_loss_weight"] = fmt(train.surface_loss_weight);
    kv["train.batch_size"] = std::to_string(train.batch_size);
    kv["train.steps"] = std::to_string(train.steps);
    kv["train.precision"] = train.precision == Precision::f32 ? "f32" : "f64";
    kv["train.checkpoint_every"] = std::to_string(train.checkpoint_every);
    kv["train.log_every"] = std::to_string(train.log_every);
    kv["train.cosine_schedule"] = train.cosine_schedule ? "true" : "false";
    kv["train.n_val"] = std::to_string(train.n_val);
    kv["data.n_steps"] = std::to_string(data.n_steps);
    kv["data.angular_velocity"] = fmt(data.angular_velocity);
    kv["data.noise"] = fmt(data.noise);
    kv["data.max_degree"] = std::to_string(data.max_degree);
    kv["data.start_day_of_year"] = std::to_string(data.start_day_of_year);
    // The model seed is always the run seed.
    kv.erase("model.init_seed");
    return kv;
}

RunConfig RunConfig::from_kv(const KeyValues& kv) {
    const RunConfig defaults;
    const auto known = defaults.to_kv();
    for (const auto& [key, value] : kv) {
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    RunConfig c;
    c.model = model::ModelConfig::from_kv(kv);
    c.seed = static_cast<std::uint64_t>(get_int(kv, "seed", 0));
    auto& t = c.train;
    t.lr = get_double(kv, "train.lr", t.lr);
    t.weight_decay = get_double(kv, "train.weight_decay", t.weight_decay);
    t.beta1 = get_double(kv, "train.beta1", t.beta1);
    t.beta2 = get_double(kv, "train.beta2", t.beta2);
    t.eps = get_double(kv, "train.eps", t.eps);
    t.surface_loss_weight = get_double(kv, "train.surface_loss_weight", t.surface_loss_weight);
    t.batch_size = get_int(kv, "train.batch_size", t.batch_size);
    t.steps = get_int(kv, "train.steps", t.steps);
    if (const auto it = kv.find("train.precision"); it != kv.end()) {
        if (it->second == "f32") {
            t.precision = Precision::f32;
        } else if (it->second == "f64") {
            t.precision = Precision::f64;
        } else {
            throw ConfigError("train.precision must be f32 or f64");
        }
    }
    t.checkpoint_every = get_int(kv, "train.checkpoint_every", t.checkpoint_every);
    t.log_every = get_int(kv, "train.log_every", t.log_every);
    t.cosine_schedule = get_bool(kv, "train.cosine_schedule", t.cosine_schedule);
    t.n_val = get_int(kv, "train.n_val", t.n_val);
    auto& d = c.data;
    d.n_steps = get_int(kv, "data.n_steps", d.n_steps);
    d.angular_velocity = get_double(kv, "data.angular_velocity", d.angular_velocity);
    d.noise = get_double(kv, "data.noise", d.noise);
    d.max_degree = static_cast<int>(get_int(kv, "data.max_degree", d.max_degree));
    d.start_day_of_year = static_cast<int>(get_int(kv, "data.start_day_of_year", d.start_day_of_year));
    c.train.validate();
    c.propagate_seed();
    return c;
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [key, value] : to_kv()) os << key << " = " << value << "\n";
    return os.str();
}

RunConfig load_run_config(const std::filesystem::path& path) {
    KeyValues kv = path.empty() ? KeyValues{} : read_kv_file(path);
    if (const char* env = std::getenv("PEAR_SEED"); env != nullptr && *env != '\0') kv["seed"] = env;
    return RunConfig::from_kv(kv);
}

RunConfig with_overrides(const RunConfig& base, const KeyValues& overrides) {
    auto kv = base.to_kv();
    for (const auto& [key, value] : overrides) kv[key] = value;
    return RunConfig::from_kv(kv);
}

}  // namespace pear::config
