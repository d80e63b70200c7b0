#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pbdw/linalg.hpp"

namespace pbdw::io {

/// Dense arrays: raw little-endian float64, column-major, with a JSON
/// sidecar manifest `<path>.json` holding shape, role and checksum.
/// Sparse matrices: coordinate triplets (int64 row, int64 col, float64 value).
void save_dense(const std::filesystem::path& path, const MatrixXd& m, const std::string& role);
MatrixXd load_dense(const std::filesystem::path& path, const std::string& expect_role = "");

void save_vector(const std::filesystem::path& path, const VectorXd& v, const std::string& role);
VectorXd load_vector(const std::filesystem::path& path, const std::string& expect_role = "");

void save_sparse(const std::filesystem::path& path, const SpMat& m, const std::string& role);
SpMat load_sparse(const std::filesystem::path& path, const std::string& expect_role = "");

std::uint64_t fnv1a(const void* data, std::size_t n);
std::string checksum_hex(const void* data, std::size_t n);

}  // namespace pbdw::io
