#pragma once

// Binary checkpoint files:
//
//   "PEARCKPT" | u32 version | records...
//   record := u64 name_len | name (UTF-8) | u64 rank | u64 extents[rank] | f32 payload[prod(extents)]
//
// All integers and floats are little-endian. Optimizer state uses names
// prefixed with "opt/".

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pear::ckpt {

inline constexpr char kMagic[8] = {'P', 'E', 'A', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct Record {
    std::string name;
    std::vector<std::uint64_t> extents;
    std::vector<float> values;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<Record>& records);
std::vector<Record> read_checkpoint(const std::filesystem::path& path);

const Record* find_record(const std::vector<Record>& records, const std::string& name);

}  // namespace pear::ckpt
