// SPDX-License-Identifier: Apache-2.0
//
// "RMT1" named-array container. Layout (little-endian):
//   magic "RMT1" | u32 version | u32 entry count | u64 metadata length |
//   metadata JSON | entry table | payload
// Each table entry: u32 name length, name bytes, u8 dtype, u32 ndim,
// i64 dims[ndim], u64 payload offset, u64 byte size.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "radarmesh/errors.hpp"

namespace radarmesh {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i32 = 3, u8 = 4, i64 = 5 };

std::size_t dtype_size(DType t);
std::string dtype_name(DType t);

template <typename T>
constexpr DType dtype_of();
template <> constexpr DType dtype_of<float>() { return DType::f32; }
template <> constexpr DType dtype_of<double>() { return DType::f64; }
template <> constexpr DType dtype_of<std::int32_t>() { return DType::i32; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::u8; }
template <> constexpr DType dtype_of<std::int64_t>() { return DType::i64; }

struct ArrayEntry {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> bytes;

  [[nodiscard]] std::int64_t numel() const;
};

class ArrayContainer {
 public:
  nlohmann::json meta = nlohmann::json::object();

  template <typename T>
  void put(const std::string& name, const std::vector<std::int64_t>& shape, const T* data) {
    ArrayEntry e;
    e.name = name;
    e.dtype = dtype_of<T>();
    e.shape = shape;
    e.bytes.resize(static_cast<std::size_t>(e.numel()) * sizeof(T));
    if (!e.bytes.empty()) std::memcpy(e.bytes.data(), data, e.bytes.size());
    add(std::move(e));
  }

  template <typename T>
  void put(const std::string& name, const std::vector<std::int64_t>& shape, const std::vector<T>& data) {
    require(static_cast<std::int64_t>(data.size()) == shape_numel(shape), "data size does not match shape for " + name);
    put(name, shape, data.data());
  }

  template <typename T>
  [[nodiscard]] std::vector<T> get(const std::string& name) const {
    const ArrayEntry& e = at(name);
    if (e.dtype != dtype_of<T>()) throw IoError("entry '" + name + "' has dtype " + dtype_name(e.dtype));
    std::vector<T> out(static_cast<std::size_t>(e.numel()));
    if (!out.empty()) std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
  }

  void add(ArrayEntry e);
  [[nodiscard]] bool has(const std::string& name) const;
  [[nodiscard]] const ArrayEntry& at(const std::string& name) const;
  [[nodiscard]] const std::vector<ArrayEntry>& entries() const { return entries_; }

  static std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

 private:
  std::vector<ArrayEntry> entries_;
};

std::vector<std::uint8_t> serialize(const ArrayContainer& c);
ArrayContainer deserialize(const std::vector<std::uint8_t>& bytes);

void write_container(const std::filesystem::path& path, const ArrayContainer& c);
ArrayContainer read_container(const std::filesystem::path& path);

}  // namespace radarmesh
