#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sage/ad/tensor.hpp"

namespace sage::ad {

// Checkpoint layout:
//
//   sage-checkpoint 1\n
//   tensors <count>\n
//   <name> <rank> <dim_0> ... <dim_{rank-1}>\n     (one line per tensor)
//   data\n
//   <little-endian IEEE-754 doubles, tensors concatenated in manifest order>
//
// Names are whitespace-free. Gradients are not stored.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace sage::ad
