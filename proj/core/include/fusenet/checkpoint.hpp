#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fusenet/tensor.hpp"

namespace fusenet::io {

/// Binary layout, all integers little-endian:
///   "FUSENETC" | u32 version | u64 n + n bytes of "key=value\n" config text
///   | u64 blob count | per blob: u64 n + name, u64 ndim + ndim x u64 dims,
///   u64 count + count x float32.
struct Blob {
  std::string name;
  nd::Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  std::map<std::string, std::string> config;
  std::vector<Blob> blobs;

  const Blob* find(const std::string& name) const;
  /// Throws DataError naming the key when absent.
  const std::string& value(const std::string& key) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws DataError on a bad magic, unknown version, or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Flat `key=value` lines; '#' starts a comment, blank lines are skipped.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin);
std::string format_key_values(const std::map<std::string, std::string>& kv);

}  // namespace fusenet::io
