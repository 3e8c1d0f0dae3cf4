#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "tnhg/nn_core.hpp"

namespace tnhg::nn {

// Binary layout (little-endian):
//   "TNHGCKPT" | u32 version=1 | u64 header_len | header JSON bytes |
//   u64 tensor_count | per tensor: u32 name_len | name | u64 rows | u64 cols |
//   rows*cols f64 in row-major order
inline constexpr std::string_view kCheckpointMagic = "TNHGCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const;
};

std::string serialize_checkpoint(const nlohmann::json& header, const std::vector<const Parameter*>& params);
Checkpoint parse_checkpoint(std::string_view bytes);

/// Copies tensors into same-named parameters. Every parameter must be present
/// with a matching shape.
void restore_parameters(const Checkpoint& ckpt, const ParameterList& params);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace tnhg::nn
