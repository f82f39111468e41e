#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hord/numerics/param_store.hpp"
#include "hord/numerics/tensor.hpp"

// "HORD" checkpoint container:
//   magic "HORD" | version u32 | entry count u32 |
//   per entry: name length u32, UTF-8 name, rank u32, extents u32 each,
//              values as f64.
// All integers and floats little-endian; entries are written in name order.
namespace hord::num {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor>;

std::vector<std::uint8_t> encode_checkpoint(const TensorMap& entries);
TensorMap decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const TensorMap& entries);
TensorMap load_checkpoint(const std::string& path);

// Every entry of the store, parameters and buffers alike.
TensorMap snapshot(const ParamStore& store);
// Copies values into an already-registered store; names and shapes must match.
void restore(ParamStore& store, const TensorMap& entries);

}  // namespace hord::num
