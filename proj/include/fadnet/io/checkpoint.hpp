#pragma once

// Checkpoint layout (all integers little-endian u32):
//   "FADN" | version | config length | config JSON |
//   record count | { name length | name | n c h w | binary32 payload }* |
//   CRC32 of every preceding byte

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "fadnet/io/pgm.hpp"
#include "fadnet/model/params.hpp"

namespace fadnet {

constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointCrcError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointStructureError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

inline std::uint32_t crc32_of(const std::vector<std::uint8_t>& v) { return crc32_of(v.data(), v.size()); }

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (end_ - pos_ < n) throw CheckpointStructureError(std::string("checkpoint truncated while reading ") + what);
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) { return get_u32(take(4, what)); }
  bool done() const { return pos_ == end_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const FadNetParams<float>& params) {
  std::vector<std::uint8_t> out = {'F', 'A', 'D', 'N'};
  detail::put_u32(out, kCheckpointVersion);
  const std::string cfg = nlohmann::json(params.config()).dump();
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSpec& s = params.spec(i);
    detail::put_u32(out, static_cast<std::uint32_t>(s.name.size()));
    out.insert(out.end(), s.name.begin(), s.name.end());
    for (std::size_t d : {s.shape.n, s.shape.c, s.shape.h, s.shape.w}) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : params[i].vec()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      detail::put_u32(out, bits);
    }
  }
  detail::put_u32(out, crc32_of(out));
  return out;
}

inline FadNetParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FADN", 4) != 0) throw CheckpointMagicError("checkpoint: bad magic");
  if (bytes.size() < 12) throw CheckpointStructureError("checkpoint: file too short");
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint: version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  }
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = detail::get_u32(bytes.data() + body);
  if (stored != crc32_of(bytes.data(), body)) throw CheckpointCrcError("checkpoint: CRC32 mismatch");

  detail::Reader r(bytes, body);
  r.take(8, "header");
  const std::uint32_t cfg_len = r.u32("config length");
  const auto* cfg_bytes = r.take(cfg_len, "config");
  FadNetConfig cfg;
  try {
    cfg = nlohmann::json::parse(cfg_bytes, cfg_bytes + cfg_len).get<FadNetConfig>();
    cfg.validate();
  } catch (const std::exception& e) {
    throw CheckpointStructureError(std::string("checkpoint: bad config block: ") + e.what());
  }
  FadNetParams<float> params(cfg);
  const std::uint32_t count = r.u32("record count");
  if (count != params.size()) {
    throw CheckpointStructureError("checkpoint: " + std::to_string(count) + " records, config implies " +
                                   std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSpec& s = params.spec(i);
    const std::uint32_t nlen = r.u32("name length");
    const auto* np = r.take(nlen, "name");
    const std::string name(np, np + nlen);
    if (name != s.name) throw CheckpointStructureError("checkpoint: record " + std::to_string(i) + " is '" + name + "', expected '" + s.name + "'");
    Shape4 shape;
    shape.n = r.u32("shape");
    shape.c = r.u32("shape");
    shape.h = r.u32("shape");
    shape.w = r.u32("shape");
    if (!(shape == s.shape)) {
      throw CheckpointStructureError("checkpoint: '" + name + "' has shape " + shape.str() + ", config implies " + s.shape.str());
    }
    const auto* payload = r.take(4 * shape.size(), "payload");
    auto& dst = params[i].vec();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      const std::uint32_t bits = detail::get_u32(payload + 4 * k);
      std::memcpy(&dst[k], &bits, 4);
    }
  }
  if (!r.done()) throw CheckpointStructureError("checkpoint: trailing bytes after the last record");
  return params;
}

inline void save_checkpoint(const FadNetParams<float>& params, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(params));
}

inline FadNetParams<float> load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace fadnet
