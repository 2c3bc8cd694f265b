#include "evlf/checkpoint.hpp"

#include <cstring>

#include <zlib.h>

#include "evlf/errors.hpp"
#include "evlf/tensor_io.hpp"

namespace evlf {

namespace {

constexpr std::uint32_t kEvlcVersion = 1;
const char kEvlcMagic[4] = {'E', 'V', 'L', 'C'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw DataError("EVLC: truncated file");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw DataError("checkpoint: missing tensor block '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return true;
    }
    return false;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const RunConfig& config) {
    std::vector<std::uint8_t> payload;
    put<std::uint32_t>(payload, kEvlcVersion);
    put<std::uint64_t>(payload, config_hash(config));
    const std::string cfg_text = serialize_config(config);
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(cfg_text.size()));
    payload.insert(payload.end(), cfg_text.begin(), cfg_text.end());
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xFFFF) throw DataError("checkpoint: block name too long");
        put<std::uint16_t>(payload, static_cast<std::uint16_t>(name.size()));
        payload.insert(payload.end(), name.begin(), name.end());
        const auto rec = evlt_encode(t);
        put<std::uint32_t>(payload, static_cast<std::uint32_t>(rec.size()));
        payload.insert(payload.end(), rec.begin(), rec.end());
    }

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kEvlcMagic, kEvlcMagic + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    put<std::uint32_t>(out, crc32_of(payload.data(), payload.size()));
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kEvlcMagic, 4) != 0) {
        throw DataError("EVLC: bad magic in " + path.string());
    }
    const std::size_t payload_len = bytes.size() - 8;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (crc32_of(bytes.data() + 4, payload_len) != stored_crc) {
        throw DataError("EVLC: checksum mismatch, " + path.string() + " is corrupted");
    }

    std::size_t off = 4;
    const auto version = take<std::uint32_t>(bytes, off);
    if (version != kEvlcVersion) {
        throw DataError("EVLC: version " + std::to_string(version) + " unsupported (expected " +
                        std::to_string(kEvlcVersion) + ")");
    }
    Checkpoint ck;
    ck.config_hash = take<std::uint64_t>(bytes, off);
    const auto cfg_len = take<std::uint32_t>(bytes, off);
    if (off + cfg_len > bytes.size()) throw DataError("EVLC: truncated config text");
    ck.config = parse_config_text(std::string(bytes.begin() + off, bytes.begin() + off + cfg_len));
    off += cfg_len;
    const auto num_blocks = take<std::uint32_t>(bytes, off);
    for (std::uint32_t b = 0; b < num_blocks; ++b) {
        const auto name_len = take<std::uint16_t>(bytes, off);
        if (off + name_len > bytes.size()) throw DataError("EVLC: truncated block name");
        std::string name(bytes.begin() + off, bytes.begin() + off + name_len);
        off += name_len;
        const auto rec_len = take<std::uint32_t>(bytes, off);
        if (off + rec_len > bytes.size()) throw DataError("EVLC: truncated tensor block");
        std::size_t rec_off = off;
        Tensor t = evlt_decode(bytes, rec_off);
        if (rec_off != off + rec_len) throw DataError("EVLC: tensor block length mismatch");
        off += rec_len;
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (off + 4 != bytes.size()) throw DataError("EVLC: trailing bytes");
    return ck;
}

}  // namespace evlf
