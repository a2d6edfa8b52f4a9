#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pear/data.hpp"
#include "pear/errors.hpp"

namespace pear::data {
namespace {

using nlohmann::json;

constexpr std::uint64_t kMaxHeaderBytes = 1ull << 24;

json header_to_json(const SphereTensorHeader& h) {
    return json{{"grid", h.grid},          {"n_side", h.n_side},       {"n_lat", h.n_lat},
                {"n_lon", h.n_lon},        {"ordering", h.ordering},   {"shape", h.shape},
                {"variables", h.variables}, {"units", h.units},         {"norm_mean", h.norm_mean},
                {"norm_std", h.norm_std},  {"day_of_year", h.day_of_year}, {"timestamp", h.timestamp},
                {"dtype", "float32"},      {"count", h.element_count()}};
}

SphereTensorHeader header_from_json(const json& j) {
    SphereTensorHeader h;
    try {
        h.grid = j.at("grid").get<std::string>();
        h.n_side = j.value("n_side", std::int64_t{0});
        h.n_lat = j.value("n_lat", std::int64_t{0});
        h.n_lon = j.value("n_lon", std::int64_t{0});
        h.ordering = j.value("ordering", std::string("nested"));
        h.shape = j.at("shape").get<std::vector<std::int64_t>>();
        h.variables = j.value("variables", std::vector<std::string>{});
        h.units = j.value("units", std::vector<std::string>{});
        h.norm_mean = j.value("norm_mean", std::vector<double>{});
        h.norm_std = j.value("norm_std", std::vector<double>{});
        h.day_of_year = j.value("day_of_year", std::vector<int>{});
        h.timestamp = j.value("timestamp", std::string{});
        if (j.value("dtype", std::string("float32")) != "float32") throw FormatError("only float32 payloads are supported");
        if (j.contains("count") && j.at("count").get<std::int64_t>() != h.element_count()) {
            throw FormatError("header count disagrees with shape");
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad sphere-tensor header: ") + e.what());
    }
    if (h.grid != "healpix" && h.grid != "latlon") throw FormatError("unknown grid kind '" + h.grid + "'");
    return h;
}

void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("sphere-tensor file truncated in header length");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

std::int64_t SphereTensorHeader::element_count() const {
    std::int64_t n = 1;
    for (auto e : shape) {
        if (e < 0) throw FormatError("negative extent in sphere-tensor shape");
        n *= e;
    }
    return n;
}

void write_sphere_file(const std::filesystem::path& path, const SphereTensorFile& file) {
    if (static_cast<std::int64_t>(file.payload.size()) != file.header.element_count()) {
        throw FormatError("payload has " + std::to_string(file.payload.size()) + " values, header declares " +
                          std::to_string(file.header.element_count()));
    }
    const std::string text = header_to_json(file.header).dump();
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
        os.write(kSphereMagic, sizeof(kSphereMagic));
        put_u64(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        std::vector<char> bytes(file.payload.size() * 4);
        for (std::size_t i = 0; i < file.payload.size(); ++i) {
            const auto u = std::bit_cast<std::uint32_t>(file.payload[i]);
            for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xff);
        }
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw FormatError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

SphereTensorFile read_sphere_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    char magic[sizeof(kSphereMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kSphereMagic, sizeof(magic)) != 0) {
        throw FormatError(path.string() + " is not a sphere-tensor file (bad magic)");
    }
    const auto len = get_u64(is);
    if (len > kMaxHeaderBytes) throw FormatError("implausible sphere-tensor header length");
    std::string text(len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("sphere-tensor header truncated");

    SphereTensorFile out;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("sphere-tensor header is not JSON: ") + e.what());
    }
    out.header = header_from_json(j);

    const auto count = static_cast<std::size_t>(out.header.element_count());
    std::vector<unsigned char> bytes(count * 4);
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw FormatError("sphere-tensor payload shorter than the declared " + std::to_string(count) + " values");
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after sphere-tensor payload");
    out.payload.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        out.payload[i] = std::bit_cast<float>(u);
    }
    return out;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    if (ds.states.empty()) throw ContractError("cannot save an empty dataset");
    std::filesystem::create_directories(dir);
    const auto n_side = ds.states.front().n_side;
    const auto n_pix = 12 * n_side * n_side;
    const auto t = static_cast<std::int64_t>(ds.states.size());

    SphereTensorFile surface, upper;
    surface.header.n_side = upper.header.n_side = n_side;
    surface.header.shape = {t, n_pix, kSurfaceChannels};
    upper.header.shape = {t, n_pix, kUpperLevels, kUpperChannels};
    surface.header.variables.assign(kSurfaceVariables.begin(), kSurfaceVariables.end());
    surface.header.units.assign(kSurfaceUnits.begin(), kSurfaceUnits.end());
    upper.header.variables.assign(kUpperVariables.begin(), kUpperVariables.end());
    upper.header.units.assign(kUpperUnits.begin(), kUpperUnits.end());
    if (ds.stats) {
        surface.header.norm_mean.assign(ds.stats->surface_mean.begin(), ds.stats->surface_mean.end());
        surface.header.norm_std.assign(ds.stats->surface_std.begin(), ds.stats->surface_std.end());
        upper.header.norm_mean.assign(ds.stats->upper_mean.begin(), ds.stats->upper_mean.end());
        upper.header.norm_std.assign(ds.stats->upper_std.begin(), ds.stats->upper_std.end());
    }
    for (const auto& s : ds.states) {
        if (s.n_side != n_side) throw DimensionError("dataset mixes grid resolutions");
        surface.header.day_of_year.push_back(s.day_of_year);
        surface.payload.insert(surface.payload.end(), s.surface.begin(), s.surface.end());
        upper.payload.insert(upper.payload.end(), s.upper.begin(), s.upper.end());
    }
    upper.header.day_of_year = surface.header.day_of_year;
    write_sphere_file(dir / "surface.stf", surface);
    write_sphere_file(dir / "upper.stf", upper);
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto surface = read_sphere_file(dir / "surface.stf");
    const auto upper = read_sphere_file(dir / "upper.stf");
    const auto& hs = surface.header;
    const auto& hu = upper.header;
    if (hs.grid != "healpix" || hu.grid != "healpix") throw FormatError("dataset files must be on a HEALPix grid");
    const auto n_side = hs.n_side;
    const auto n_pix = 12 * n_side * n_side;
    if (hs.shape.size() != 3 || hs.shape[1] != n_pix || hs.shape[2] != kSurfaceChannels) {
        throw FormatError("surface.stf shape must be (T, 12 n_side^2, 4)");
    }
    const auto t = hs.shape[0];
    if (hu.n_side != n_side ||
        hu.shape != std::vector<std::int64_t>{t, n_pix, kUpperLevels, kUpperChannels}) {
        throw FormatError("upper.stf shape must be (T, 12 n_side^2, 13, 5) matching surface.stf");
    }
    if (!hs.day_of_year.empty() && static_cast<std::int64_t>(hs.day_of_year.size()) != t) {
        throw FormatError("day_of_year list length differs from the sample count");
    }

    Dataset ds;
    const auto ss = static_cast<std::size_t>(n_pix * kSurfaceChannels);
    const auto su = static_cast<std::size_t>(n_pix * kUpperLevels * kUpperChannels);
    for (std::int64_t i = 0; i < t; ++i) {
        VolumetricState s;
        s.n_side = n_side;
        const auto k = static_cast<std::size_t>(i);
        s.surface.assign(surface.payload.begin() + static_cast<std::ptrdiff_t>(k * ss),
                         surface.payload.begin() + static_cast<std::ptrdiff_t>((k + 1) * ss));
        s.upper.assign(upper.payload.begin() + static_cast<std::ptrdiff_t>(k * su),
                       upper.payload.begin() + static_cast<std::ptrdiff_t>((k + 1) * su));
        s.day_of_year = hs.day_of_year.empty() ? 1 : hs.day_of_year[k];
        ds.states.push_back(std::move(s));
    }
    if (hs.norm_mean.size() == kSurfaceChannels && hs.norm_std.size() == kSurfaceChannels &&
        hu.norm_mean.size() == kUpperChannels && hu.norm_std.size() == kUpperChannels) {
        NormStats st;
        std::copy(hs.norm_mean.begin(), hs.norm_mean.end(), st.surface_mean.begin());
        std::copy(hs.norm_std.begin(), hs.norm_std.end(), st.surface_std.begin());
        std::copy(hu.norm_mean.begin(), hu.norm_mean.end(), st.upper_mean.begin());
        std::copy(hu.norm_std.begin(), hu.norm_std.end(), st.upper_std.begin());
        ds.stats = st;
    }
    return ds;
}

}  // namespace pear::data
