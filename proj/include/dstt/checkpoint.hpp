// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dstt/tensor.hpp"

namespace dstt {

/// Binary layout, all integers little-endian:
///   "DSTT" | u32 version | u64 record count |
///   records: u32 name length | name bytes | u8 dtype | u8 rank |
///            u64 dims[rank] | payload (product(dims) elements).
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU64 = 2, kBytes = 3 };

std::size_t dtype_size(DType t);

struct Record {
  std::string name;
  DType dtype = DType::kF32;
  Shape dims;
  std::vector<std::uint8_t> payload;  // little-endian element bytes
};

class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  /// Throws ContractError on a duplicate name.
  void add(Record record);
  void add_f32(const std::string& name, const Tensorf& tensor);
  void add_u64(const std::string& name, std::uint64_t value);
  void add_bytes(const std::string& name, const std::string& bytes);

  bool contains(const std::string& name) const;
  /// Lookups throw DataError when the record is missing or of another dtype.
  const Record& get(const std::string& name) const;
  Tensorf get_f32(const std::string& name) const;
  std::uint64_t get_u64(const std::string& name) const;
  std::string get_bytes(const std::string& name) const;

  const std::vector<Record>& records() const { return records_; }

  std::vector<std::uint8_t> serialize() const;
  /// Throws ParseError on bad magic or truncation and DataError on an
  /// unsupported version or duplicate names. Never returns partial state.
  static Checkpoint deserialize(std::span<const std::uint8_t> bytes);

  /// Writes to a sibling temp file, then renames over `path`.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<Record> records_;
};

}  // namespace dstt
