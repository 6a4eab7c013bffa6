#include "crowdscene/cstf.hpp"

#include "crowdscene/audio.hpp"

#include <bit>
#include <cstring>

namespace crowdscene::cstf {

static_assert(sizeof(float) == 4, "CSTF payloads are binary32");

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

}  // namespace

std::vector<unsigned char> encode(const Tensor& t) {
    if (t.dims.size() > 255) throw FormatError("CSTF supports at most 255 dimensions");
    if (t.data.size() != t.element_count()) {
        throw FormatError("CSTF payload has " + std::to_string(t.data.size()) + " values, dims imply " +
                          std::to_string(t.element_count()));
    }
    std::vector<unsigned char> out;
    out.reserve(7 + 4 * t.dims.size() + 4 * t.data.size());
    out.insert(out.end(), {'C', 'S', 'T', 'F', kVersion, kDtypeF32, static_cast<unsigned char>(t.dims.size())});
    for (auto d : t.dims) put_u32(out, d);
    for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Tensor decode(std::span<const unsigned char> bytes) {
    if (bytes.size() < 7 || std::memcmp(bytes.data(), "CSTF", 4) != 0) throw FormatError("missing CSTF magic");
    if (bytes[4] != kVersion) throw FormatError("unsupported CSTF version " + std::to_string(bytes[4]));
    if (bytes[5] != kDtypeF32) throw FormatError("unsupported CSTF dtype " + std::to_string(bytes[5]));
    const std::size_t ndim = bytes[6];
    const std::size_t header = 7 + 4 * ndim;
    if (bytes.size() < header) throw FormatError("truncated CSTF header");
    Tensor t;
    t.dims.resize(ndim);
    for (std::size_t i = 0; i < ndim; ++i) t.dims[i] = get_u32(bytes, 7 + 4 * i);
    const std::size_t n = t.element_count();
    if (bytes.size() != header + 4 * n) {
        throw FormatError("CSTF payload is " + std::to_string(bytes.size() - header) + " bytes, expected " +
                          std::to_string(4 * n));
    }
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
    return t;
}

void write(const std::filesystem::path& path, const Tensor& t) { write_file_bytes(path, encode(t)); }

Tensor read(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> to_matrix(const Tensor& t) {
    if (t.dims.empty()) throw FormatError("rank-0 tensor has no matrix view");
    const Eigen::Index rows = t.dims[0];
    const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(t.element_count()) / rows;
    return Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.data.data(), rows, cols);
}

}  // namespace crowdscene::cstf
