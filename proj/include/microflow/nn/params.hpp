#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/nn/tensor.hpp"
#include "microflow/util/rng.hpp"

namespace microflow::nn {

using ParamId = std::size_t;

// Named parameter tensors in insertion order. Each entry carries its gradient
// accumulator. Non-trainable entries (e.g. a fixed hypersphere center) are
// serialized but skipped by the optimizer.
class ModelParams {
public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  ParamId add(const std::string& name, Tensor value, bool trainable = true) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    require_finite(value, "parameter " + name);
    Tensor grad(value.rows(), value.cols());
    entries_.push_back(Entry{name, std::move(value), std::move(grad), trainable});
    index_.emplace(name, entries_.size() - 1);
    return entries_.size() - 1;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  ParamId id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw NotFoundError("no parameter named '" + name + "'");
    return it->second;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  Entry& operator[](ParamId i) { return entries_.at(i); }
  const Entry& operator[](ParamId i) const { return entries_.at(i); }
  Tensor& value(ParamId i) { return entries_.at(i).value; }
  const Tensor& value(ParamId i) const { return entries_.at(i).value; }
  Tensor& value(const std::string& name) { return value(id(name)); }
  const Tensor& value(const std::string& name) const { return value(id(name)); }

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  std::size_t count_scalars(bool trainable_only = true) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
      if (!trainable_only || e.trainable) n += e.value.size();
    }
    return n;
  }

  // Copies every entry present in `other` by name (shape must agree).
  void assign_from(const ModelParams& other) {
    for (const auto& e : other.entries_) {
      auto& mine = value(e.name);
      if (!mine.same_shape(e.value)) {
        throw DimensionError("parameter '" + e.name + "' shape " + mine.shape_string() +
                             " vs " + e.value.shape_string());
      }
      mine = e.value;
    }
  }

  bool operator==(const ModelParams& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = o.entries_[i];
      if (a.name != b.name || a.trainable != b.trainable || !(a.value == b.value)) return false;
    }
    return true;
  }

private:
  std::vector<Entry> entries_;
  std::map<std::string, ParamId> index_;
};

// Xavier/Glorot uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(fan_in, fan_out);
  for (auto& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

// Adam moments, persisted alongside parameters.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  bool operator==(const AdamState&) const = default;
};

// ---------------------------------------------------------------------------
// Checkpoint format (all integers and doubles little-endian):
//   magic "MFLWCKPT" (8 bytes), u32 version = 1
//   u32 n_meta, then n_meta x (u32 len, key bytes, u32 len, value bytes)
//   u32 n_params, then per parameter:
//     u32 name_len, name bytes, u8 trainable, u32 rank (= 2),
//     u64 rows, u64 cols, rows*cols f64 values
//   u8 has_adam; if 1: f64 lr, beta1, beta2, eps; u64 step;
//     then for each parameter in order: m values, v values (f64, same shape)
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'M', 'F', 'L', 'W', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> meta;
  ModelParams params;
  std::optional<AdamState> adam;
};

namespace detail {

class LeWriter {
public:
  explicit LeWriter(std::vector<std::uint8_t>& buf) : buf_(buf) {}
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void tensor_values(const Tensor& t) {
    for (double v : t.values()) f64(v);
  }

private:
  std::vector<std::uint8_t>& buf_;
};

class LeReader {
public:
  LeReader(const std::vector<std::uint8_t>& buf, std::string source) : buf_(buf), source_(std::move(source)) {}
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError(source_ + ": truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void read_values(Tensor& t) {
    for (auto& v : t.values()) v = f64();
  }
  bool at_end() const { return pos_ == buf_.size(); }
  const std::string& source() const { return source_; }

private:
  const std::vector<std::uint8_t>& buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  std::vector<std::uint8_t> buf;
  detail::LeWriter w(buf);
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    w.str(k);
    w.str(v);
  }
  const auto& entries = ck.params.entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u8(e.trainable ? 1 : 0);
    w.u32(2);
    w.u64(e.value.rows());
    w.u64(e.value.cols());
    w.tensor_values(e.value);
  }
  w.u8(ck.adam ? 1 : 0);
  if (ck.adam) {
    const AdamState& a = *ck.adam;
    if (a.m.size() != entries.size() || a.v.size() != entries.size()) {
      throw InvariantError("adam state not aligned with parameters");
    }
    w.f64(a.lr);
    w.f64(a.beta1);
    w.f64(a.beta2);
    w.f64(a.eps);
    w.u64(a.step);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      w.tensor_values(a.m[i]);
      w.tensor_values(a.v[i]);
    }
  }
  return buf;
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& buf, const std::string& source) {
  detail::LeReader r(buf, source);
  for (char c : kCheckpointMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw FormatError(source + ": not a microflow checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ck.meta[k] = r.str();
  }
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const bool trainable = r.u8() != 0;
    const std::uint32_t rank = r.u32();
    if (rank != 2) throw FormatError(source + ": parameter '" + name + "' has unsupported rank");
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    r.need(rows * cols * 8);
    Tensor t(rows, cols);
    r.read_values(t);
    ck.params.add(name, std::move(t), trainable);
  }
  if (r.u8() != 0) {
    AdamState a;
    a.lr = r.f64();
    a.beta1 = r.f64();
    a.beta2 = r.f64();
    a.eps = r.f64();
    a.step = r.u64();
    for (const auto& e : ck.params.entries()) {
      Tensor m(e.value.rows(), e.value.cols()), v(e.value.rows(), e.value.cols());
      r.read_values(m);
      r.read_values(v);
      a.m.push_back(std::move(m));
      a.v.push_back(std::move(v));
    }
    ck.adam = std::move(a);
  }
  if (!r.at_end()) throw FormatError(source + ": trailing bytes in checkpoint");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto buf = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(buf, path);
}

}  // namespace microflow::nn
