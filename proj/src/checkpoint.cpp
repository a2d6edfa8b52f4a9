#include "pear/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "pear/errors.hpp"

namespace pear::ckpt {
namespace {

template <typename U>
void put_le(std::ostream& os, U value) {
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is, const char* what) {
    std::array<unsigned char, sizeof(U)> bytes{};
    if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
        throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<Record>& records) {
    // Write to a sibling and rename so a crash never leaves a torn checkpoint behind.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
        os.write(kMagic, sizeof(kMagic));
        put_le<std::uint32_t>(os, kVersion);
        for (const auto& r : records) {
            std::uint64_t count = 1;
            for (auto e : r.extents) count *= e;
            if (count != r.values.size()) throw FormatError("record " + r.name + ": extents do not match payload");
            put_le<std::uint64_t>(os, r.name.size());
            os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
            put_le<std::uint64_t>(os, r.extents.size());
            for (auto e : r.extents) put_le<std::uint64_t>(os, e);
            for (float f : r.values) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f));
        }
        if (!os) throw FormatError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<Record> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    char magic[sizeof(kMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(path.string() + " is not a checkpoint (bad magic)");
    }
    const auto version = get_le<std::uint32_t>(is, "version");
    if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));

    std::vector<Record> records;
    while (is.peek() != std::char_traits<char>::eof()) {
        Record r;
        const auto name_len = get_le<std::uint64_t>(is, "name length");
        if (name_len > (1u << 20)) throw FormatError("implausible record name length");
        r.name.resize(name_len);
        if (!is.read(r.name.data(), static_cast<std::streamsize>(name_len))) throw FormatError("truncated name");
        const auto rank = get_le<std::uint64_t>(is, "rank");
        if (rank > 16) throw FormatError("implausible rank in record " + r.name);
        std::uint64_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            r.extents.push_back(get_le<std::uint64_t>(is, "extent"));
            count *= r.extents.back();
        }
        r.values.resize(count);
        for (auto& f : r.values) f = std::bit_cast<float>(get_le<std::uint32_t>(is, "payload"));
        records.push_back(std::move(r));
    }
    return records;
}

const Record* find_record(const std::vector<Record>& records, const std::string& name) {
    for (const auto& r : records) {
        if (r.name == name) return &r;
    }
    return nullptr;
}

}  // namespace pear::ckpt
