#include "evlf/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "evlf/errors.hpp"

namespace evlf {

namespace {

constexpr std::uint32_t kEvltVersion = 1;
const char kEvltMagic[4] = {'E', 'V', 'L', 'T'};

static_assert(std::endian::native == std::endian::little,
              "EVLT serialization assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw DataError("EVLT: truncated record");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

std::vector<std::uint8_t> evlt_encode(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + 8 * t.rank() + 8 * t.numel());
    out.insert(out.end(), kEvltMagic, kEvltMagic + 4);
    put<std::uint32_t>(out, kEvltVersion);
    if (t.rank() > 255) throw DataError("EVLT: rank exceeds u8");
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : t.data()) put<double>(out, v);
    return out;
}

Tensor evlt_decode(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
    if (offset + 4 > bytes.size() || std::memcmp(bytes.data() + offset, kEvltMagic, 4) != 0) {
        throw DataError("EVLT: bad magic");
    }
    offset += 4;
    const auto version = take<std::uint32_t>(bytes, offset);
    if (version != kEvltVersion) {
        throw DataError("EVLT: unsupported version " + std::to_string(version));
    }
    const auto rank = take<std::uint8_t>(bytes, offset);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(take<std::uint64_t>(bytes, offset));
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (auto& v : data) v = take<double>(bytes, offset);
    return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor evlt_decode(const std::vector<std::uint8_t>& bytes) {
    std::size_t off = 0;
    Tensor t = evlt_decode(bytes, off);
    if (off != bytes.size()) throw DataError("EVLT: trailing bytes after record");
    return t;
}

void save_evlt(const std::filesystem::path& path, const Tensor& t) {
    write_file_atomic(path, evlt_encode(t));
}

Tensor load_evlt(const std::filesystem::path& path) { return evlt_decode(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw DataError("short read on " + path.string());
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("short write on " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace evlf
