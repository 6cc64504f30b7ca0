#pragma once

#include <string>
#include <vector>

#include "selfqa/tensor.hpp"

namespace selfqa {

/// Checkpoint = JSON manifest {name, shape, dtype:"f64", offset} entries plus
/// one little-endian raw blob of concatenated values.
void save_checkpoint(const std::vector<Parameter*>& params,
                     const std::string& manifest_path,
                     const std::string& blob_path);

/// Loads by name into matching parameters; throws on missing entries or
/// shape mismatch.
void load_checkpoint(const std::vector<Parameter*>& params,
                     const std::string& manifest_path,
                     const std::string& blob_path);

}  // namespace selfqa
