#pragma once

#include "crowdscene/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace crowdscene::cstf {

CROWDSCENE_DEFINE_ERROR(FormatError);

/// Container layout, all integers little-endian:
///   "CSTF" | version u8 (1) | dtype u8 (0 = f32) | ndim u8 | ndim x u32 dims | payload
/// The payload holds product(dims) IEEE-754 binary32 values in row-major order.
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t element_count() const;
};

std::vector<unsigned char> encode(const Tensor& t);
Tensor decode(std::span<const unsigned char> bytes);

void write(const std::filesystem::path& path, const Tensor& t);
Tensor read(const std::filesystem::path& path);

/// Copies a row-major view of any Eigen matrix into a rank-2 tensor.
template <typename Derived>
Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.size()));
    Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.data.data(), m.rows(), m.cols()) = m.template cast<float>();
    return t;
}

/// Rank-2 tensor as a row-major float matrix; higher ranks fold trailing dims into columns.
Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> to_matrix(const Tensor& t);

}  // namespace crowdscene::cstf
