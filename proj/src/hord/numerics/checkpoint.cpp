#include "hord/numerics/checkpoint.hpp"

#include <algorithm>

#include "hord/binary_io.hpp"
#include "hord/error.hpp"

namespace hord::num {

std::vector<std::uint8_t> encode_checkpoint(const TensorMap& entries) {
  io::ByteWriter w;
  w.magic("HORD");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.text(name);
    w.u32(static_cast<std::uint32_t>(tensor.rank()));
    for (auto extent : tensor.shape()) w.u32(static_cast<std::uint32_t>(extent));
    for (double v : tensor.values()) w.f64(v);
  }
  return w.take();
}

TensorMap decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes, "checkpoint");
  r.expect_magic("HORD");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.u32();
  TensorMap out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.u32();
    if (name_len > r.remaining()) throw FormatError("checkpoint: truncated");
    std::string name = r.text(name_len);
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) {
      throw FormatError("checkpoint: entry '" + name + "' has invalid rank " +
                        std::to_string(rank));
    }
    Shape shape(rank);
    std::size_t total = 1;
    for (auto& extent : shape) {
      extent = r.u32();
      if (extent == 0) throw FormatError("checkpoint: entry '" + name + "' has a zero extent");
      total *= extent;
    }
    if (total > r.remaining() / 8) throw FormatError("checkpoint: truncated");
    std::vector<double> values(total);
    for (auto& v : values) v = r.f64();
    if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw FormatError("checkpoint: duplicate entry '" + name + "'");
    }
  }
  r.expect_end();
  return out;
}

void save_checkpoint(const std::string& path, const TensorMap& entries) {
  io::write_file(path, encode_checkpoint(entries));
}

TensorMap load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

TensorMap snapshot(const ParamStore& store) {
  TensorMap out;
  for (const auto& name : store.names()) out.emplace(name, store.get(name).detach());
  return out;
}

void restore(ParamStore& store, const TensorMap& entries) {
  for (const auto& name : store.names()) {
    auto it = entries.find(name);
    if (it == entries.end()) throw FormatError("checkpoint: missing entry '" + name + "'");
    Tensor& dst = store.get(name);
    if (dst.shape() != it->second.shape()) {
      throw FormatError("checkpoint: entry '" + name + "' has shape " +
                        to_string(it->second.shape()) + ", expected " + to_string(dst.shape()));
    }
    std::ranges::copy(it->second.values(), dst.data().begin());
  }
}

}  // namespace hord::num
