// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <unordered_set>

#include "dstt/errors.hpp"

namespace dstt {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'T', 'T'};
constexpr std::size_t kMaxRank = 8;


// Appends the little-endian bytes of an unsigned integer.
template <typename U>
void put_uint(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

// Element bytes of a trivially copyable value in little-endian order.
template <typename V>
void put_value(std::vector<std::uint8_t>& out, V value) {
  using U = std::conditional_t<sizeof(V) == 4, std::uint32_t, std::uint64_t>;
  put_uint(out, std::bit_cast<U>(value));
}

template <typename V>
V get_value(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(V) == 4, std::uint32_t, std::uint64_t>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<V>(u);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("checkpoint truncated in ") + what, bytes_.size());
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U uint(const char* what) {
    return get_value<U>(take(sizeof(U), what));
  }
  std::uint8_t byte(const char* what) { return *take(1, what); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU64: return 8;
    case DType::kBytes: return 1;
  }
  throw ContractError("unknown dtype");
}

void Checkpoint::add(Record record) {
  if (contains(record.name)) throw ContractError("duplicate checkpoint record '" + record.name + "'");
  if (record.payload.size() != shape_numel(record.dims) * dtype_size(record.dtype)) {
    throw ContractError("checkpoint record '" + record.name + "' payload does not match its dims");
  }
  records_.push_back(std::move(record));
}

void Checkpoint::add_f32(const std::string& name, const Tensorf& tensor) {
  Record r{name, DType::kF32, tensor.shape(), {}};
  r.payload.reserve(tensor.numel() * 4);
  for (float v : tensor.data()) put_value(r.payload, v);
  add(std::move(r));
}

void Checkpoint::add_u64(const std::string& name, std::uint64_t value) {
  Record r{name, DType::kU64, {1}, {}};
  put_uint(r.payload, value);
  add(std::move(r));
}

void Checkpoint::add_bytes(const std::string& name, const std::string& bytes) {
  add(Record{name, DType::kBytes, {bytes.size()}, {bytes.begin(), bytes.end()}});
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& r : records_) {
    if (r.name == name) return true;
  }
  return false;
}

const Record& Checkpoint::get(const std::string& name) const {
  for (const auto& r : records_) {
    if (r.name == name) return r;
  }
  throw DataError("checkpoint has no record '" + name + "'");
}

Tensorf Checkpoint::get_f32(const std::string& name) const {
  const Record& r = get(name);
  if (r.dtype != DType::kF32) throw DataError("checkpoint record '" + name + "' is not f32");
  std::vector<float> values(shape_numel(r.dims));
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_value<float>(r.payload.data() + 4 * i);
  return Tensorf(r.dims, std::move(values));
}

std::uint64_t Checkpoint::get_u64(const std::string& name) const {
  const Record& r = get(name);
  if (r.dtype != DType::kU64 || r.payload.size() != 8) {
    throw DataError("checkpoint record '" + name + "' is not a u64 scalar");
  }
  return get_value<std::uint64_t>(r.payload.data());
}

std::string Checkpoint::get_bytes(const std::string& name) const {
  const Record& r = get(name);
  if (r.dtype != DType::kBytes) throw DataError("checkpoint record '" + name + "' is not a byte string");
  return std::string(r.payload.begin(), r.payload.end());
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_uint<std::uint32_t>(out, kVersion);
  put_uint<std::uint64_t>(out, records_.size());
  for (const auto& r : records_) {
    put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.dtype));
    out.push_back(static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims) put_uint<std::uint64_t>(out, d);
    out.insert(out.end(), r.payload.begin(), r.payload.end());
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const std::uint8_t* magic = in.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a checkpoint (bad magic)", 0);
  const auto version = in.uint<std::uint32_t>("version");
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kVersion) + ")");
  }
  const auto count = in.uint<std::uint64_t>("record count");
  Checkpoint ckpt;
  std::unordered_set<std::string> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = in.offset();
    const auto name_len = in.uint<std::uint32_t>("record name length");
    const auto* name_bytes = in.take(name_len, "record name");
    Record r;
    r.name.assign(reinterpret_cast<const char*>(name_bytes), name_len);
    if (!seen.insert(r.name).second) throw DataError("duplicate checkpoint record '" + r.name + "'");
    const std::uint8_t tag = in.byte("dtype");
    if (tag > static_cast<std::uint8_t>(DType::kBytes)) {
      throw ParseError("unknown dtype tag " + std::to_string(tag), in.offset() - 1);
    }
    r.dtype = static_cast<DType>(tag);
    const std::uint8_t rank = in.byte("rank");
    if (rank > kMaxRank) throw ParseError("rank " + std::to_string(rank) + " too large", in.offset() - 1);
    std::uint64_t elements = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = in.uint<std::uint64_t>("dims");
      if (d != 0 && elements > std::numeric_limits<std::uint64_t>::max() / d) {
        throw ParseError("record dims overflow", in.offset() - 8);
      }
      elements *= d;
      r.dims.push_back(static_cast<std::size_t>(d));
    }
    const std::size_t width = dtype_size(r.dtype);
    if (elements > in.remaining() / width) {
      throw ParseError("checkpoint truncated in payload of '" + r.name + "'", bytes.size());
    }
    const std::size_t n = static_cast<std::size_t>(elements) * width;
    const auto* payload = in.take(n, "payload");
    r.payload.assign(payload, payload + n);
    if (r.dims.empty() || shape_numel(r.dims) == 0) {
      if (r.dtype != DType::kBytes) throw ParseError("record '" + r.name + "' has no elements", at);
    }
    ckpt.records_.push_back(std::move(r));
  }
  if (in.remaining() != 0) throw ParseError("trailing bytes after last record", in.offset());
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  return deserialize(bytes);
}

}  // namespace dstt
