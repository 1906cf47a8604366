#include "asfda/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "asfda/errors.hpp"

namespace asfda {

namespace {

constexpr std::array<char, 4> kMagic{'A', 'S', 'F', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::size_t kPreamble = 7;

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

}  // namespace

std::string encode_tensor(const Tensor& t) {
    require(t.ndim() >= 1 && t.ndim() <= 4, ErrorKind::Dimension, "tensor files hold 1 to 4 dimensions");
    std::string out(kMagic.begin(), kMagic.end());
    out.push_back(static_cast<char>(kVersion));
    out.push_back(static_cast<char>(kDtypeF32));
    out.push_back(static_cast<char>(t.ndim()));
    for (auto d : t.shape()) {
        require(d <= 0xFFFFFFFFu, ErrorKind::Dimension, "dimension exceeds u32");
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    const std::size_t header = out.size();
    out.resize(header + 4 * t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const float f = static_cast<float>(t[i]);
        std::memcpy(out.data() + header + 4 * i, &f, 4);
    }
    return out;
}

Tensor decode_tensor(std::string_view bytes) {
    require(bytes.size() >= kPreamble, ErrorKind::Format, "tensor file shorter than its header");
    require(std::equal(kMagic.begin(), kMagic.end(), bytes.begin()), ErrorKind::Format, "bad magic bytes");
    require(static_cast<std::uint8_t>(bytes[4]) == kVersion, ErrorKind::Format, "unsupported tensor version");
    require(static_cast<std::uint8_t>(bytes[5]) == kDtypeF32, ErrorKind::Format, "unsupported dtype");
    const std::size_t ndim = static_cast<std::uint8_t>(bytes[6]);
    require(ndim >= 1 && ndim <= 4, ErrorKind::Format, "ndim must be 1-4");
    const std::size_t header = kPreamble + 4 * ndim;
    require(bytes.size() >= header, ErrorKind::Corruption, "truncated tensor header");

    Shape shape(ndim);
    for (std::size_t i = 0; i < ndim; ++i) shape[i] = get_u32(bytes, kPreamble + 4 * i);
    const std::size_t n = element_count(shape);
    require(bytes.size() - header == 4 * n, ErrorKind::Corruption,
            "payload holds " + std::to_string((bytes.size() - header) / 4) + " values, header declares " +
                std::to_string(n));

    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + header + 4 * i, 4);
        data[i] = f;
    }
    return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const Tensor& t, const fs::path& path) { write_file_atomic(path, encode_tensor(t)); }

Tensor read_tensor(const fs::path& path) { return decode_tensor(read_file(path)); }

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::Io, "cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(static_cast<bool>(out), ErrorKind::Io, "short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path, ec);
    require(!ec, ErrorKind::Io, "cannot rename onto '" + path.string() + "': " + ec.message());
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

std::string file_checksum(const fs::path& path) { return fnv1a64_hex(read_file(path)); }

}  // namespace asfda
