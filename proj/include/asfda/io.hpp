#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "asfda/tensor.hpp"

namespace asfda {

namespace fs = std::filesystem;

/// ASFT tensor container: "ASFT", version 1, dtype 0 (float32 LE), ndim 1-4,
/// ndim u32 LE dims, then the row-major payload.
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes);

void write_tensor(const Tensor& t, const fs::path& path);
Tensor read_tensor(const fs::path& path);

std::string read_file(const fs::path& path);
/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const fs::path& path, std::string_view bytes);

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);
std::string file_checksum(const fs::path& path);

}  // namespace asfda
