#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cxr/core/error.hpp"
#include "cxr/nn/layers.hpp"

namespace cxr::nn {

// Binary container for named float32 tensors, little-endian:
//   "CXRW" u32 version=1 u32 count
//   count x { u32 name_len, name, u32 rank, rank x i64 dim, f32 data... }
inline constexpr char kWeightsMagic[4] = {'C', 'X', 'R', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

using NamedTensors = std::map<std::string, Tensor<float>>;

namespace detail {

template <typename V>
void put(std::ostream& out, V value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::string& what) {
  V value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(V));
  if (!in) throw DataError("truncated weights stream while reading " + what);
  return value;
}

}  // namespace detail

inline void write_tensors(std::ostream& out, const NamedTensors& tensors) {
  out.write(kWeightsMagic, 4);
  detail::put<std::uint32_t>(out, kWeightsVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) detail::put<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
}

inline NamedTensors read_tensors(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0) throw DataError("not a CXRW weights stream");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kWeightsVersion) throw DataError("unsupported weights version " + std::to_string(version));
  const auto count = detail::get<std::uint32_t>(in, "count");
  NamedTensors out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::get<std::uint32_t>(in, "name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = detail::get<std::uint32_t>(in, name + " rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r)
      shape.push_back(static_cast<int>(detail::get<std::int64_t>(in, name + " dims")));
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw DataError("truncated data for tensor " + name);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

inline NamedTensors read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open weights file " + path.string());
  return read_tensors(in);
}

template <typename T>
NamedTensors snapshot(const std::vector<ParamRef<T>>& params) {
  NamedTensors out;
  for (const auto& p : params) out.emplace(p.name, p.value->template cast<float>());
  return out;
}

/// Copy tensors into matching parameters. Every parameter whose name does not
/// start with one of `skip_prefixes` must be present with the same shape;
/// tensors in `source` that match no parameter are ignored.
template <typename T>
void assign(const std::vector<ParamRef<T>>& params, const NamedTensors& source,
            const std::vector<std::string>& skip_prefixes = {}) {
  for (const auto& p : params) {
    bool skip = false;
    for (const auto& prefix : skip_prefixes) skip = skip || p.name.rfind(prefix, 0) == 0;
    if (skip) continue;
    const auto it = source.find(p.name);
    if (it == source.end()) throw DataError("weights are missing tensor " + p.name);
    if (it->second.shape() != p.value->shape()) {
      throw ShapeError("weights tensor " + p.name + " has shape " + to_string(it->second.shape()) +
                       ", model expects " + to_string(p.value->shape()));
    }
    *p.value = it->second.template cast<T>();
  }
}

}  // namespace cxr::nn
