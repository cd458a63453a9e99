#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xing/graph.hpp"

// Binary checkpoint: "XGPP", u32 version, u32 record count, then records of
// {u32 name length, utf-8 name, u32 rank, u64 dims[rank], f64 data[]}.
// All integers and floats little-endian.

namespace xing {

constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor>;

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_tensors(const std::filesystem::path& path);

/// Copies matching values into `store`. Every parameter must be present
/// with an identical shape.
void load_into(ParamStore& store, const TensorMap& tensors);
void add_params(TensorMap& out, const ParamStore& store);

}  // namespace xing
