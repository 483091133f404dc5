#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stal/nn.hpp"
#include "stal/tensor.hpp"

namespace stal::nn {

// Flat binary tensor container:
//   magic "STLC", format version u32 (little-endian),
//   then per-tensor records: name length u32, UTF-8 name bytes, rank u32,
//   extents u32 each, payload as raw little-endian 64-bit floats.
// Writing the same tensors twice produces byte-identical files.

struct NamedTensor {
  std::string name;
  Tensor value;
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_container(std::istream& is);

void save_container(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_container(const std::string& path);

// Checkpoint = container of model parameters in registration order.
void save_checkpoint(const std::string& path, const std::vector<Param*>& params);

// Strict load: every model parameter must be present with the exact shape and
// no unknown records may remain. Errors name the first offending parameter.
void load_checkpoint(const std::string& path, const std::vector<Param*>& params);

}  // namespace stal::nn
