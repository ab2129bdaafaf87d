#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cato/autodiff.hpp"
#include "cato/tensor.hpp"

namespace cato {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// "CATO1" file layout (all integers u64 little-endian, payload f64 little-endian):
//   magic "CATO1"
//   repeated until EOF: name_len, name bytes, rank, dims[rank], values[prod(dims)]
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

void save_parameters(const std::filesystem::path& path, const std::vector<Parameter*>& params);
/// Loads values by name; every parameter must be present with a matching shape.
void load_parameters(const std::filesystem::path& path, const std::vector<Parameter*>& params);

/// FNV-1a 64 of a file's bytes, hex encoded.
std::string file_digest(const std::filesystem::path& path);

}  // namespace cato
