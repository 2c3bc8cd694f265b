#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evlf/tensor.hpp"

namespace evlf {

// "EVLT" tensor record: magic, u32 version=1, u8 rank, rank x u64 LE dims,
// f64 LE row-major payload.
std::vector<std::uint8_t> evlt_encode(const Tensor& t);
// Decodes one record starting at `offset`; advances it past the record.
Tensor evlt_decode(const std::vector<std::uint8_t>& bytes, std::size_t& offset);
Tensor evlt_decode(const std::vector<std::uint8_t>& bytes);

void save_evlt(const std::filesystem::path& path, const Tensor& t);
Tensor load_evlt(const std::filesystem::path& path);

// Whole-file helpers; writes go through a temp file + rename.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace evlf
