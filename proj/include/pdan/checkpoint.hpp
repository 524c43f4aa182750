#pragma once

#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "pdan/model.hpp"

namespace pdan {

namespace detail {

constexpr char kCkptMagic[8] = {'P', 'D', 'A', 'N', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCkptVersion = 1;

inline std::uint32_t crc_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline void write_name(std::ostream& os, const std::string& name) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  write_bytes(os, name.data(), name.size());
}

inline std::string read_name(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  if (n > 4096) throw IoError("checkpoint: implausible name length");
  std::string s(n, '\0');
  read_bytes(is, s.data(), n);
  return s;
}

template <typename T>
void write_named_tensor(std::ostream& os, const std::string& name, const Tensor<T>& t) {
  write_name(os, name);
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int a = 0; a < t.rank(); ++a) write_u32(os, static_cast<std::uint32_t>(t.extent(a)));
  for (long long i = 0; i < t.numel(); ++i) write_scalar_le(os, static_cast<float>(t[i]));
}

inline void read_named_tensor(std::istream& is, const std::string& expect_name,
                              Tensor<float>& out) {
  const std::string name = read_name(is);
  if (name != expect_name)
    throw ValidationError("checkpoint: expected tensor '" + expect_name + "', found '" + name +
                          "' (config mismatch?)");
  const std::uint32_t rank = read_u32(is);
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<int>(read_u32(is));
  if (shape != out.shape())
    throw ValidationError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                          ", model expects " + shape_str(out.shape()));
  for (long long i = 0; i < out.numel(); ++i) out[i] = read_scalar_le<float>(is);
}

}  // namespace detail

/// Checkpoint file: magic, format version, the canonical serialized
/// NetworkConfig, every parameter in graph order as little-endian 32-bit
/// floats with per-tensor name/shape headers, the batch-norm running stats,
/// and a trailing whole-file CRC32.
inline void save_checkpoint(const Model<float>& m, const std::string& path) {
  std::ostringstream body;
  detail::write_bytes(body, detail::kCkptMagic, sizeof(detail::kCkptMagic));
  detail::write_u32(body, detail::kCkptVersion);
  const std::string cfg = m.graph.config.serialize();
  detail::write_u32(body, static_cast<std::uint32_t>(cfg.size()));
  detail::write_bytes(body, cfg.data(), cfg.size());
  detail::write_u32(body, static_cast<std::uint32_t>(m.params.size()));
  for (size_t i = 0; i < m.params.size(); ++i)
    detail::write_named_tensor(body, m.graph.params[i].name, m.params[i]);
  detail::write_u32(body, static_cast<std::uint32_t>(m.bn_buffers.size()));
  for (size_t i = 0; i < m.bn_buffers.size(); ++i) {
    const auto& bn = m.bn_buffers[i];
    detail::write_named_tensor(body, m.graph.bns[i].name + ".running_mean", bn.running_mean);
    detail::write_named_tensor(body, m.graph.bns[i].name + ".running_var", bn.running_var);
    detail::write_u64(body, static_cast<std::uint64_t>(bn.update_count));
  }
  const std::string bytes = body.str();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::ostringstream crc;
  detail::write_u32(crc, detail::crc_of(bytes));
  const std::string tail = crc.str();
  f.write(tail.data(), static_cast<std::streamsize>(tail.size()));
  if (!f) throw IoError("short write on checkpoint '" + path + "'");
}

/// Loads and fully validates a checkpoint. When `expect` is given, its config
/// must equal the embedded one (e.g. the eval scale must match). Corruption
/// anywhere fails the CRC and no partial model is returned.
inline Model<float> load_checkpoint(const std::string& path,
                                    const NetworkConfig* expect = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  std::string bytes = buf.str();
  if (bytes.size() < sizeof(detail::kCkptMagic) + 12) throw IoError("checkpoint truncated");
  const std::string tail = bytes.substr(bytes.size() - 4);
  bytes.resize(bytes.size() - 4);
  std::istringstream tail_is(tail);
  const std::uint32_t stored_crc = detail::read_u32(tail_is);
  if (stored_crc != detail::crc_of(bytes))
    throw IoError("checkpoint '" + path + "' failed integrity check");

  std::istringstream is(bytes);
  char magic[sizeof(detail::kCkptMagic)];
  detail::read_bytes(is, magic, sizeof(magic));
  if (std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) != 0)
    throw IoError("not a checkpoint file: bad magic");
  const std::uint32_t version = detail::read_u32(is);
  if (version != detail::kCkptVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t cfg_len = detail::read_u32(is);
  std::string cfg_text(cfg_len, '\0');
  detail::read_bytes(is, cfg_text.data(), cfg_len);
  const NetworkConfig cfg = NetworkConfig::parse(cfg_text);
  if (expect && !(cfg == *expect))
    throw ValidationError("checkpoint config does not match the requested one (scale " +
                          std::to_string(cfg.scale) + " vs " + std::to_string(expect->scale) +
                          ", attention " + to_string(cfg.attention) + " vs " +
                          to_string(expect->attention) + ", ...)");

  Model<float> m = instantiate<float>(build_network(cfg));
  const std::uint32_t n_params = detail::read_u32(is);
  if (n_params != m.params.size())
    throw ValidationError("checkpoint parameter count mismatch");
  for (size_t i = 0; i < m.params.size(); ++i)
    detail::read_named_tensor(is, m.graph.params[i].name, m.params[i]);
  const std::uint32_t n_bns = detail::read_u32(is);
  if (n_bns != m.bn_buffers.size()) throw ValidationError("checkpoint batch-norm count mismatch");
  for (size_t i = 0; i < m.bn_buffers.size(); ++i) {
    auto& bn = m.bn_buffers[i];
    detail::read_named_tensor(is, m.graph.bns[i].name + ".running_mean", bn.running_mean);
    detail::read_named_tensor(is, m.graph.bns[i].name + ".running_var", bn.running_var);
    bn.update_count = static_cast<long long>(detail::read_u64(is));
  }
  return m;
}

}  // namespace pdan
