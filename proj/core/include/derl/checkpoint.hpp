#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "derl/nn.hpp"

namespace derl::ckpt {

// Flat little-endian binary container for named parameter bundles.
// Layout:
//   magic   "DERLNET1"                      (8 bytes)
//   step    u64   training step counter
//   count   u32   number of named networks
//   per network:
//     name_len u32, name bytes
//     seed     u64
//     n_layers u32
//     per layer:
//       out u32, in u32, activation u32 (0 relu, 1 linear, 2 tanh)
//       weights f64[out*in] row-major, bias f64[out]
struct Checkpoint {
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, nn::DenseNet>> networks;

  const nn::DenseNet& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace derl::ckpt
