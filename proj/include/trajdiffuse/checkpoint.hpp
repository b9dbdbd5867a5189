#pragma once

// Binary checkpoint: "TDFK", u32 version, u64 record count, then records of
//   u32 name length, UTF-8 name, u32 rank, rank x u64 dims, f32 values
// all little-endian. Parameter tensors come first, then the schedule
// ("schedule.*") and the architecture descriptor ("arch.*").

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajdiffuse/denoiser.hpp"
#include "trajdiffuse/schedule.hpp"

namespace trajdiffuse {

inline constexpr std::array<char, 4> kCheckpointMagic{'T', 'D', 'F', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
public:
  enum class Kind { io, bad_magic, bad_version, truncated, inconsistent };

  CheckpointError(Kind kind, const std::string& what) : Error(describe(kind) + ": " + what), kind_(kind) {}
  Kind kind() const { return kind_; }

  static std::string describe(Kind k) {
    switch (k) {
      case Kind::io: return "checkpoint i/o error";
      case Kind::bad_magic: return "bad magic";
      case Kind::bad_version: return "unsupported checkpoint version";
      case Kind::truncated: return "truncated checkpoint";
      case Kind::inconsistent: return "inconsistent checkpoint";
    }
    return "checkpoint error";
  }

private:
  Kind kind_;
};

using ModelParams = DenoiserParams<float>;

struct Checkpoint {
  ModelParams params;
  NoiseSchedule schedule;
};

namespace detail {

struct Record {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

class ByteWriter {
public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void record(const Record& r) {
    u32(static_cast<std::uint32_t>(r.name.size()));
    raw(r.name);
    u32(static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) u64(d);
    for (float v : r.values) f32(v);
  }
  const std::vector<char>& bytes() const { return bytes_; }

private:
  std::vector<char> bytes_;
};

class ByteReader {
public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw CheckpointError(CheckpointError::Kind::truncated,
                            std::string("reading ") + what + " at offset " + std::to_string(pos_));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  Record record() {
    Record r;
    r.name = raw(u32("name length"), "record name");
    const std::uint32_t rank = u32("rank");
    need(static_cast<std::size_t>(rank) * 8, "dims");
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.dims.push_back(u64("dim"));
      if (r.dims.back() != 0 && count > (remaining() / 4) / r.dims.back())
        throw CheckpointError(CheckpointError::Kind::truncated, "values of " + r.name + " exceed file size");
      count *= r.dims.back();
    }
    r.values.resize(count);
    for (auto& v : r.values) v = f32("value");
    return r;
  }

private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

inline Record scalar_record(std::string name, double v) { return {std::move(name), {1}, {static_cast<float>(v)}}; }

inline Record vector_record(std::string name, const std::vector<double>& v) {
  Record r{std::move(name), {v.size()}, {}};
  for (double x : v) r.values.push_back(static_cast<float>(x));
  return r;
}

inline std::size_t as_size(const Record& r) {
  if (r.values.size() != 1) throw CheckpointError(CheckpointError::Kind::inconsistent, r.name + " must be a scalar");
  const float v = r.values[0];
  if (!(v >= 0.0f) || v != std::floor(v))
    throw CheckpointError(CheckpointError::Kind::inconsistent, r.name + " must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const NoiseSchedule& schedule,
                            const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic.data(), kCheckpointMagic.size()));
  w.u32(kCheckpointVersion);

  std::vector<detail::Record> records;
  for (const auto& e : params.layout().entries()) {
    const auto t = params.tensor(e);
    records.push_back({e.name, {e.shape.begin(), e.shape.end()}, {t.begin(), t.end()}});
  }
  records.push_back(detail::vector_record("schedule.alphas", schedule.alphas()));
  records.push_back(detail::vector_record("schedule.alpha_bars", schedule.alpha_bars()));
  records.push_back(detail::vector_record("schedule.posterior_vars", schedule.posterior_vars()));
  records.push_back(detail::vector_record("schedule.loss_weights", schedule.loss_weights()));
  records.push_back(detail::scalar_record("schedule.offset", schedule.offset()));

  const auto& a = params.arch();
  records.push_back(detail::scalar_record("arch.horizon", static_cast<double>(a.horizon)));
  records.push_back(detail::scalar_record("arch.n_steps", static_cast<double>(a.n_steps)));
  {
    detail::Record widths{"arch.widths", {a.widths.size()}, {}};
    for (auto x : a.widths) widths.values.push_back(static_cast<float>(x));
    records.push_back(std::move(widths));
  }
  records.push_back(detail::scalar_record("arch.blocks_per_level", static_cast<double>(a.blocks_per_level)));
  records.push_back(detail::scalar_record("arch.kernel", static_cast<double>(a.kernel)));
  records.push_back(detail::scalar_record("arch.groups", static_cast<double>(a.groups)));
  records.push_back(detail::scalar_record("arch.embed_dim", static_cast<double>(a.embed_dim)));
  records.push_back(detail::scalar_record("arch.channels", static_cast<double>(a.channels)));

  w.u64(records.size());
  for (const auto& r : records) w.record(r);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  using Kind = CheckpointError::Kind;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open " + path.string());
  detail::ByteReader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  const std::string magic = r.raw(kCheckpointMagic.size(), "magic");
  if (magic != std::string_view(kCheckpointMagic.data(), kCheckpointMagic.size()))
    throw CheckpointError(Kind::bad_magic, path.string());
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::bad_version, "file has version " + std::to_string(version) + ", expected " +
                                                 std::to_string(kCheckpointVersion));

  const std::uint64_t count = r.u64("record count");
  std::map<std::string, detail::Record> records;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto rec = r.record();
    auto name = rec.name;
    if (!records.emplace(name, std::move(rec)).second) throw CheckpointError(Kind::inconsistent, "duplicate record " + name);
  }
  if (r.remaining() != 0) throw CheckpointError(Kind::inconsistent, "trailing bytes after last record");

  auto take = [&](const std::string& name) -> detail::Record& {
    auto it = records.find(name);
    if (it == records.end()) throw CheckpointError(Kind::inconsistent, "missing record " + name);
    return it->second;
  };

  Architecture a;
  a.horizon = detail::as_size(take("arch.horizon"));
  a.n_steps = detail::as_size(take("arch.n_steps"));
  a.widths.clear();
  for (float v : take("arch.widths").values) a.widths.push_back(detail::as_size({"arch.widths", {1}, {v}}));
  a.blocks_per_level = detail::as_size(take("arch.blocks_per_level"));
  a.kernel = detail::as_size(take("arch.kernel"));
  a.groups = detail::as_size(take("arch.groups"));
  a.embed_dim = detail::as_size(take("arch.embed_dim"));
  a.channels = detail::as_size(take("arch.channels"));

  std::optional<ModelParams> params;
  try {
    params.emplace(a);
  } catch (const ShapeError& e) {
    throw CheckpointError(Kind::inconsistent, std::string("architecture descriptor: ") + e.what());
  }
  for (const auto& e : params->layout().entries()) {
    const auto& rec = take(e.name);
    if (!std::equal(rec.dims.begin(), rec.dims.end(), e.shape.begin(), e.shape.end()))
      throw CheckpointError(Kind::inconsistent, "shape of " + e.name + " does not match the architecture");
    std::copy(rec.values.begin(), rec.values.end(), params->tensor(e).begin());
  }

  const auto& offset = take("schedule.offset");
  if (offset.values.size() != 1) throw CheckpointError(Kind::inconsistent, "schedule.offset must be a scalar");
  const auto& bars = take("schedule.alpha_bars").values;
  NoiseSchedule schedule;
  try {
    schedule = build_cosine_schedule(bars.size(), static_cast<double>(offset.values[0]));
  } catch (const Error& e) {
    throw CheckpointError(Kind::inconsistent, std::string("schedule: ") + e.what());
  }
  for (std::size_t i = 0; i < bars.size(); ++i)
    if (std::abs(static_cast<double>(bars[i]) - schedule.alpha_bars()[i]) > 1e-6 * schedule.alpha_bars()[i] + 1e-12)
      throw CheckpointError(Kind::inconsistent, "stored schedule does not match its cosine parameters");
  for (const char* n : {"schedule.alphas", "schedule.posterior_vars", "schedule.loss_weights"})
    if (take(n).values.size() != bars.size()) throw CheckpointError(Kind::inconsistent, std::string(n) + " length");
  if (schedule.n_steps() != a.n_steps)
    throw CheckpointError(Kind::inconsistent, "schedule length differs from arch.n_steps");

  const std::size_t expected = params->layout().entries().size() + 5 + 8;
  if (records.size() != expected) throw CheckpointError(Kind::inconsistent, "unexpected extra records");

  return {std::move(*params), std::move(schedule)};
}

}  // namespace trajdiffuse
