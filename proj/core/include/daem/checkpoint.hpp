// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "daem/tensor.hpp"

namespace daem {

/// Named tensors plus named byte blobs, stored as a versioned binary
/// container:
///
///   "DAEMCKPT" | u32 version | u32 entry count |
///   entries: u32 name length, name, u8 kind (0 tensor, 1 blob),
///            tensor: u32 rank, u64 dims..., f64 payload
///            blob:   u64 length, bytes
///   | u32 CRC-32 of everything before it
///
/// All integers and doubles are little-endian.
struct Archive {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> blobs;

  const Tensor& tensor(const std::string& name) const;
  const std::string& blob(const std::string& name) const;

  friend bool operator==(const Archive&, const Archive&) = default;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

std::string serialize_archive(const Archive& a);
/// Throws kValidation on bad magic, version or structure and kChecksum on a
/// CRC mismatch or truncation.
Archive parse_archive(const std::string& bytes);

void write_archive(const Archive& a, const std::filesystem::path& path);
/// Throws kMissing if the file does not exist.
Archive read_archive(const std::filesystem::path& path);

/// 64-bit FNV-1a, printed as 16 hex digits by hex64.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace daem
