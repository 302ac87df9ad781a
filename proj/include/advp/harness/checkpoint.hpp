#pragma once

// Binary layout: "ADVP", u32 version, u64 config hash, u64 record count, then
// records of (u32 name length, name bytes, u8 rank, u64 dims..., payload).
// All integers little-endian. Version 1 stores f32 payloads, version 2 f64.
// Integer data is stored as 16-bit halves so both versions hold it exactly.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advp/autodiff/narray.hpp"

namespace advp::harness {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointLatest = 2;

struct Record {
  std::string name;
  Shape dims;
  std::vector<double> values;
};

class Checkpoint {
 public:
  std::uint32_t version = kCheckpointLatest;
  std::uint64_t config_hash = 0;

  void put(const std::string& name, const NArray& value);
  void put_words(const std::string& name, const std::vector<std::uint32_t>& words);
  void put_u64(const std::string& name, std::uint64_t v);
  void put_text(const std::string& name, const std::string& text);

  bool has(const std::string& name) const;
  /// Throws CheckpointError when missing.
  const Record& get(const std::string& name) const;
  NArray get_array(const std::string& name) const;
  std::vector<std::uint32_t> get_words(const std::string& name) const;
  std::uint64_t get_u64(const std::string& name) const;
  std::string get_text(const std::string& name) const;

  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
};

/// Serialized bytes. Values are rounded to f32 for version 1.
std::string encode_checkpoint(const Checkpoint& ckpt);
/// Rejects bad magic, unknown versions and truncated or oversized data; the
/// message names the file version and the offending offset.
Checkpoint decode_checkpoint(const std::string& bytes);

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace advp::harness
