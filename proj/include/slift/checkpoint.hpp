#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "config.hpp"
#include "error.hpp"
#include "model.hpp"
#include "tensor_io.hpp"
#include "train.hpp"

namespace slift {

// SLCK layout:
//   0..3  magic "SLCK"
//   4..7  u32 LE header length H
//   8..   H bytes of UTF-8 JSON header: arch, train, slice_stats, epoch,
//         rng_digest, and a tensor table {name, offset, size} whose offsets
//         are relative to the end of the header
//   ...   concatenated SLT1 records
inline Bytes encode_checkpoint(const Checkpoint& ck) {
  Bytes blobs;
  json table = json::array();
  for (const auto& p : ck.net.params()) {
    const auto rec = encode_tensor(p.var.value());
    table.push_back({{"name", p.name}, {"offset", blobs.size()}, {"size", rec.size()}});
    blobs.insert(blobs.end(), rec.begin(), rec.end());
  }
  const json header = {{"format", "SLCK"},
                       {"version", 1},
                       {"arch", to_json(ck.arch)},
                       {"train", to_json(ck.train)},
                       {"slice_stats",
                        {{"per_slice_loss", ck.stats.per_slice_loss},
                         {"selected", ck.stats.selected},
                         {"s", ck.stats.s}}},
                       {"epoch", ck.epoch},
                       {"rng_digest", ck.rng_digest},
                       {"tensors", table}};
  const std::string text = header.dump();
  if (text.size() > 0xffffffffu) throw FormatError("SLCK: header too large", 4);
  Bytes out{'S', 'L', 'C', 'K'};
  detail::put_le(out, text.size(), 4);
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

inline Checkpoint decode_checkpoint(const Bytes& bytes) {
  if (bytes.size() < 8) throw FormatError("SLCK: truncated header", bytes.size());
  if (std::memcmp(bytes.data(), "SLCK", 4) != 0) throw FormatError("SLCK: bad magic", 0);
  const std::size_t hlen = detail::get_le(bytes.data() + 4, 4);
  if (bytes.size() - 8 < hlen) throw FormatError("SLCK: truncated header", bytes.size());
  json h;
  try {
    h = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const json::exception& e) {
    throw FormatError(std::string("SLCK: header is not valid JSON: ") + e.what(), 8);
  }
  const std::size_t base = 8 + hlen;
  Checkpoint ck;
  try {
    if (h.at("format") != "SLCK" || h.at("version") != 1) throw FormatError("SLCK: unsupported version", 8);
    ck.arch = arch_from_json(h.at("arch"));
    ck.train = train_from_json(h.at("train"));
    const auto& st = h.at("slice_stats");
    ck.stats.per_slice_loss = st.at("per_slice_loss").get<std::vector<double>>();
    ck.stats.selected = st.at("selected").get<std::vector<std::size_t>>();
    ck.stats.s = st.at("s").get<std::size_t>();
    ck.epoch = h.at("epoch").get<std::size_t>();
    ck.rng_digest = h.at("rng_digest").get<std::uint64_t>();
    ck.net = Network<float>::build(ck.arch, 0);
    const auto& table = h.at("tensors");
    if (table.size() != ck.net.params().size())
      throw FormatError("SLCK: tensor table has " + std::to_string(table.size()) + " entries, architecture needs " +
                        std::to_string(ck.net.params().size()),
                        8);
    for (const auto& rec : table) {
      const auto name = rec.at("name").get<std::string>();
      const std::size_t off = base + rec.at("offset").get<std::size_t>();
      const std::size_t size = rec.at("size").get<std::size_t>();
      if (off > bytes.size() || bytes.size() - off < size) throw FormatError("SLCK: tensor " + name + " out of bounds", off);
      std::size_t pos = off;
      auto t = expect_dtype<float>(decode_tensor(bytes.data(), off + size, pos), "SLCK tensor " + name);
      if (pos != off + size) throw FormatError("SLCK: tensor " + name + " size mismatch", pos);
      auto& var = ck.net.param(name);
      if (t.dims() != var.dims())
        throw FormatError("SLCK: tensor " + name + " has dims " + dims_str(t.dims()) + ", expected " +
                          dims_str(var.dims()),
                          off);
      var.mutable_value() = std::move(t);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("SLCK: malformed header: ") + e.what(), 8);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("SLCK: ") + e.what(), 8);
  }
  if (ck.stats.selected.size() != ck.stats.s || ck.stats.per_slice_loss.size() != ck.arch.lift_depth)
    throw FormatError("SLCK: slice statistics do not match the architecture", 8);
  check_selection(ck.stats.selected, ck.arch.lift_depth);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

// FNV-1a 64 of a byte string, rendered as 16 hex digits.
inline std::string digest_hex(const Bytes& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace slift
