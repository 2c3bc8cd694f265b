#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "evlf/config.hpp"
#include "evlf/tensor.hpp"

namespace evlf {

// "EVLC" container: u32 version, u64 config hash, the serialized config
// text, ordered named tensor blocks (each an embedded EVLT record), and a
// trailing CRC32 over the payload. Round-trips bitwise.
struct Checkpoint {
    std::uint64_t config_hash = 0;
    RunConfig config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const;  // throws DataError if absent
    bool has(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const RunConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace evlf
