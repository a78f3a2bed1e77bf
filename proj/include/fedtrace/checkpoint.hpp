#pragma once

#include <map>
#include <string>

#include "fedtrace/tensor.hpp"

namespace fedtrace {

// Flat binary checkpoint: named tensors with shapes and raw 64-bit float data,
// plus string metadata (scheme, vocabulary, sequence length, ...). Round-trips
// bit-exactly.
struct Checkpoint {
  ParamSet params;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::map<std::string, std::string>& metadata);
Checkpoint load_checkpoint(const std::string& path);

} // namespace fedtrace
