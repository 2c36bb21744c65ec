#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "moprior/errors.hpp"

namespace moprior {

// Self-describing binary container used by every native file format: an
// 8-byte magic, a format version, a JSON header, then raw little-endian
// blobs in the order the header declares them.
//
//   bytes 0..7   : "MOPRBIN\0"
//   bytes 8..11  : u32 container version (currently 1)
//   bytes 12..19 : u64 header length in bytes
//   header bytes : UTF-8 JSON; must carry "type" and a "blobs" array of
//                  {name, dtype ("f32"|"f64"|"u8"), count}
//   blob bytes   : concatenated payloads
//
// This code only targets little-endian hosts; a guard below enforces it.
namespace container {

constexpr char kMagic[8] = {'M', 'O', 'P', 'R', 'B', 'I', 'N', '\0'};
constexpr std::uint32_t kVersion = 1;

inline void require_little_endian() {
  const std::uint32_t probe = 1;
  if (*reinterpret_cast<const std::uint8_t*>(&probe) != 1)
    throw Error("native container requires a little-endian host");
}

struct Blob {
  std::string name;
  std::string dtype;
  std::vector<std::uint8_t> bytes;

  static Blob from_f32(const std::string& name, const std::vector<float>& v) {
    Blob b;
    b.name = name;
    b.dtype = "f32";
    b.bytes.resize(v.size() * sizeof(float));
    std::memcpy(b.bytes.data(), v.data(), b.bytes.size());
    return b;
  }
  static Blob from_f64(const std::string& name, const std::vector<double>& v) {
    Blob b;
    b.name = name;
    b.dtype = "f64";
    b.bytes.resize(v.size() * sizeof(double));
    std::memcpy(b.bytes.data(), v.data(), b.bytes.size());
    return b;
  }
  std::size_t count() const {
    if (dtype == "f32") return bytes.size() / 4;
    if (dtype == "f64") return bytes.size() / 8;
    return bytes.size();
  }
  std::vector<float> as_f32() const {
    if (dtype != "f32") throw VersionError("blob '" + name + "' is not f32");
    std::vector<float> v(bytes.size() / sizeof(float));
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
  }
  std::vector<double> as_f64() const {
    if (dtype != "f64") throw VersionError("blob '" + name + "' is not f64");
    std::vector<double> v(bytes.size() / sizeof(double));
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
  }
};

struct File {
  nlohmann::json header;
  std::vector<Blob> blobs;

  const Blob& blob(const std::string& name) const {
    for (const Blob& b : blobs)
      if (b.name == name) return b;
    throw VersionError("container is missing blob '" + name + "'");
  }
  bool has_blob(const std::string& name) const {
    for (const Blob& b : blobs)
      if (b.name == name) return true;
    return false;
  }
};

inline void write(const std::string& path, const std::string& type, nlohmann::json header,
                  const std::vector<Blob>& blobs) {
  require_little_endian();
  header["type"] = type;
  auto& blob_list = header["blobs"] = nlohmann::json::array();
  for (const Blob& b : blobs)
    blob_list.push_back({{"name", b.name}, {"dtype", b.dtype}, {"count", b.count()}});
  const std::string hdr = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, 8);
  std::uint32_t ver = kVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  std::uint64_t hlen = hdr.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  for (const Blob& b : blobs)
    out.write(reinterpret_cast<const char*>(b.bytes.data()),
              static_cast<std::streamsize>(b.bytes.size()));
  if (!out) throw IoError("short write: " + path);
}

inline File read(const std::string& path, const std::string& expected_type) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("not a native container file: " + path);
  std::uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  if (ver != kVersion)
    throw VersionError("unsupported container version " + std::to_string(ver) + " in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in || hlen > (1ull << 30)) throw ParseError("corrupt container header length: " + path);
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError("truncated container header: " + path);

  File f;
  try {
    f.header = nlohmann::json::parse(hdr);
  } catch (const std::exception& e) {
    throw ParseError(std::string("bad container header json: ") + e.what());
  }
  const std::string type = f.header.value("type", "");
  if (type != expected_type)
    throw VersionError("container type '" + type + "' where '" + expected_type +
                       "' was expected: " + path);
  for (const auto& d : f.header.at("blobs")) {
    Blob b;
    b.name = d.at("name").get<std::string>();
    b.dtype = d.at("dtype").get<std::string>();
    std::size_t count = d.at("count").get<std::size_t>();
    std::size_t unit = b.dtype == "f32" ? 4 : b.dtype == "f64" ? 8 : 1;
    b.bytes.resize(count * unit);
    in.read(reinterpret_cast<char*>(b.bytes.data()), static_cast<std::streamsize>(b.bytes.size()));
    if (!in) throw ParseError("truncated blob '" + b.name + "' in " + path);
    f.blobs.push_back(std::move(b));
  }
  return f;
}

}  // namespace container

// FNV-1a 64-bit digest; used for artifact drift detection in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

inline std::string digest_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace moprior
