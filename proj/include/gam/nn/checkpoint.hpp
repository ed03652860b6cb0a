#pragma once

// Binary checkpoint: "GAMCKPT1", u64 block count, then per block
// u64 name length, name bytes, u64 rows, u64 cols, rows*cols f64 in row-major
// order. All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "gam/error.hpp"
#include "gam/nn/param_store.hpp"

namespace gam::nn {

inline constexpr char kCheckpointMagic[8] = {'G', 'A', 'M', 'C', 'K', 'P', 'T', '1'};

struct NamedTensor {
  std::string name;
  Matrix value;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

inline void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw ConfigError("checkpoint truncated");
  return v;
}
inline double get_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw ConfigError("checkpoint truncated");
  return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write(kCheckpointMagic, 8);
  detail::put_u64(os, tensors.size());
  for (const auto& t : tensors) {
    detail::put_u64(os, t.name.size());
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_u64(os, static_cast<std::uint64_t>(t.value.rows()));
    detail::put_u64(os, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) detail::put_f64(os, t.value(r, c));
  }
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ConfigError("not a GAMCKPT1 checkpoint");
  const auto n = detail::get_u64(is);
  std::vector<NamedTensor> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedTensor t;
    const auto len = detail::get_u64(is);
    if (len > (1u << 20)) throw ConfigError("checkpoint block name too long");
    t.name.resize(static_cast<std::size_t>(len));
    if (!is.read(t.name.data(), static_cast<std::streamsize>(len))) throw ConfigError("checkpoint truncated");
    const auto rows = detail::get_u64(is);
    const auto cols = detail::get_u64(is);
    if (rows * cols > (1ull << 32)) throw ConfigError("checkpoint block too large");
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) t.value(r, c) = detail::get_f64(is);
    out.push_back(std::move(t));
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw PreconditionError("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, tensors);
  if (!os) throw PreconditionError("failed writing checkpoint: " + path);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PreconditionError("missing checkpoint: " + path);
  return read_checkpoint(is);
}

/// Appends the values of `store` under "<prefix><block name>". With
/// `with_optimizer`, the moment slots ("@m", "@v") and the step counter
/// ("<prefix>@step") are included so training can resume exactly.
inline void export_store(const ParamStore& store, const std::string& prefix,
                         std::vector<NamedTensor>& out, bool with_optimizer = false) {
  for (const auto& b : store.blocks()) {
    out.push_back({prefix + b.name, b.value});
    if (with_optimizer) {
      out.push_back({prefix + b.name + "@m", b.m});
      out.push_back({prefix + b.name + "@v", b.v});
    }
  }
  if (with_optimizer) {
    Matrix step(1, 1);
    step(0, 0) = static_cast<double>(store.step_count());
    out.push_back({prefix + "@step", step});
  }
}

/// Restores every block of `store` from tensors named "<prefix><block name>";
/// optimizer slots are restored when present.
inline void import_store(ParamStore& store, const std::string& prefix,
                         const std::vector<NamedTensor>& tensors) {
  auto find = [&](const std::string& name) -> const NamedTensor* {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  };
  for (auto& b : store.blocks()) {
    const auto* t = find(prefix + b.name);
    if (!t) throw ConfigError("checkpoint lacks block '" + prefix + b.name + "'");
    if (t->value.rows() != b.value.rows() || t->value.cols() != b.value.cols())
      throw DimensionError("checkpoint block '" + t->name + "' has the wrong shape");
    b.value = t->value;
    if (const auto* m = find(prefix + b.name + "@m")) b.m = m->value;
    if (const auto* v = find(prefix + b.name + "@v")) b.v = v->value;
  }
  if (const auto* s = find(prefix + "@step")) store.set_step_count(static_cast<std::int64_t>(s->value(0, 0)));
}

}  // namespace gam::nn
