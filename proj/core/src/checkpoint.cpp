// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "daem/bag.hpp"
#include "daem/error.hpp"

namespace daem {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'E', 'M', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "archive IO assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    require(n <= end_ - pos_, ErrorKind::kValidation, "archive entry runs past the end");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const std::string& bytes, std::size_t n) {
  return crc32({reinterpret_cast<const unsigned char*>(bytes.data()), n});
}

}  // namespace

const Tensor& Archive::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  require(it != tensors.end(), ErrorKind::kValidation, "archive has no tensor '" + name + "'");
  return it->second;
}

const std::string& Archive::blob(const std::string& name) const {
  const auto it = blobs.find(name);
  require(it != blobs.end(), ErrorKind::kValidation, "archive has no blob '" + name + "'");
  return it->second;
}

std::string serialize_archive(const Archive& a) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(a.tensors.size() + a.blobs.size()));
  for (const auto& [name, t] : a.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.values()) put<double>(out, v);
  }
  for (const auto& [name, b] : a.blobs) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, 1);
    put<std::uint64_t>(out, b.size());
    out += b;
  }
  put<std::uint32_t>(out, checksum(out, out.size()));
  return out;
}

Archive parse_archive(const std::string& bytes) {
  require(bytes.size() >= sizeof(kMagic) + 12, ErrorKind::kChecksum, "archive is truncated");
  require(std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0, ErrorKind::kValidation,
          "not a checkpoint archive (bad magic)");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 4);
  require(stored == checksum(bytes, body), ErrorKind::kChecksum,
          "checkpoint CRC-32 mismatch (corrupt or truncated file)");

  Reader r(bytes, body);
  r.take(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  require(version == kArchiveVersion, ErrorKind::kValidation,
          "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  Archive a;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.take(r.get<std::uint32_t>());
    const auto kind = r.get<std::uint8_t>();
    if (kind == 0) {
      const auto rank = r.get<std::uint32_t>();
      require(rank <= 8, ErrorKind::kValidation, "tensor rank too large in '" + name + "'");
      std::vector<std::size_t> shape(rank);
      std::size_t n = 1;
      for (auto& d : shape) {
        d = static_cast<std::size_t>(r.get<std::uint64_t>());
        require(d == 0 || n <= body / d, ErrorKind::kValidation, "tensor '" + name + "' too large");
        n *= d;
      }
      std::vector<double> data(n);
      for (double& v : data) v = r.get<double>();
      a.tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
    } else if (kind == 1) {
      const auto len = r.get<std::uint64_t>();
      a.blobs.emplace(name, r.take(static_cast<std::size_t>(len)));
    } else {
      fail(ErrorKind::kValidation, "unknown entry kind in '" + name + "'");
    }
  }
  require(r.done(), ErrorKind::kValidation, "trailing bytes after archive entries");
  return a;
}

void write_archive(const Archive& a, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_archive(a);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kMissing,
          "checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_archive(ss.str());
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace daem
