// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/container.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <set>

namespace radarmesh {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'M', 'T', '1'};

class Writer {
 public:
  std::vector<std::uint8_t> buf;
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf_(b) {}
  template <typename T>
  T pod() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw IoError("container truncated in header");
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i32: return 4;
    case DType::u8: return 1;
    case DType::i64: return 8;
  }
  throw IoError("unknown dtype code");
}

std::string dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i32: return "i32";
    case DType::u8: return "u8";
    case DType::i64: return "i64";
  }
  return "?";
}

std::int64_t ArrayContainer::shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw IoError("negative dimension");
    n *= d;
  }
  return n;
}

std::int64_t ArrayEntry::numel() const { return ArrayContainer::shape_numel(shape); }

void ArrayContainer::add(ArrayEntry e) {
  require(!e.name.empty(), "entry name must be non-empty");
  require(!has(e.name), "duplicate entry name '" + e.name + "'");
  require(e.bytes.size() == static_cast<std::size_t>(e.numel()) * dtype_size(e.dtype),
          "entry '" + e.name + "' byte size does not match its shape");
  entries_.push_back(std::move(e));
}

bool ArrayContainer::has(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const ArrayEntry& ArrayContainer::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw IoError("container has no entry '" + name + "'");
}

std::vector<std::uint8_t> serialize(const ArrayContainer& c) {
  Writer w;
  w.raw(kMagic, 4);
  w.pod<std::uint32_t>(kContainerVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.entries().size()));
  const std::string meta = c.meta.dump();
  w.pod<std::uint64_t>(meta.size());
  w.raw(meta.data(), meta.size());
  std::uint64_t offset = 0;
  for (const auto& e : c.entries()) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.pod<std::int64_t>(d);
    w.pod<std::uint64_t>(offset);
    w.pod<std::uint64_t>(e.bytes.size());
    offset += e.bytes.size();
  }
  for (const auto& e : c.entries()) w.raw(e.bytes.data(), e.bytes.size());
  return std::move(w.buf);
}

ArrayContainer deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw IoError("bad container magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kContainerVersion) throw IoError("unsupported container version " + std::to_string(version));
  const auto count = r.pod<std::uint32_t>();
  const auto meta_len = r.pod<std::uint64_t>();
  if (meta_len > bytes.size()) throw IoError("container metadata length exceeds file size");
  ArrayContainer c;
  try {
    c.meta = nlohmann::json::parse(r.str(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("container metadata is not valid JSON: ") + e.what());
  }
  struct Slot {
    ArrayEntry entry;
    std::uint64_t offset;
    std::uint64_t size;
  };
  std::vector<Slot> slots;
  for (std::uint32_t i = 0; i < count; ++i) {
    Slot s;
    const auto name_len = r.pod<std::uint32_t>();
    s.entry.name = r.str(name_len);
    const auto code = r.pod<std::uint8_t>();
    if (code < 1 || code > 5) throw IoError("unknown dtype code " + std::to_string(code));
    s.entry.dtype = static_cast<DType>(code);
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 16) throw IoError("implausible rank for entry '" + s.entry.name + "'");
    for (std::uint32_t d = 0; d < ndim; ++d) s.entry.shape.push_back(r.pod<std::int64_t>());
    s.offset = r.pod<std::uint64_t>();
    s.size = r.pod<std::uint64_t>();
    if (s.size != static_cast<std::uint64_t>(s.entry.numel()) * dtype_size(s.entry.dtype)) {
      throw IoError("entry '" + s.entry.name + "' size does not match its shape");
    }
    slots.push_back(std::move(s));
  }
  const std::size_t payload = r.pos();
  std::uint64_t expect = 0;
  std::set<std::string> names;
  for (auto& s : slots) {
    if (s.offset != expect) throw IoError("entry '" + s.entry.name + "' has an inconsistent offset");
    if (payload + s.offset + s.size > bytes.size()) throw IoError("container payload truncated");
    if (!names.insert(s.entry.name).second) throw IoError("duplicate entry '" + s.entry.name + "'");
    const auto* b = bytes.data() + payload + s.offset;
    s.entry.bytes.assign(b, b + s.size);
    expect += s.size;
    c.add(std::move(s.entry));
  }
  if (payload + expect != bytes.size()) throw IoError("trailing bytes after container payload");
  return c;
}

void write_container(const std::filesystem::path& path, const ArrayContainer& c) {
  const auto bytes = serialize(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ArrayContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace radarmesh
