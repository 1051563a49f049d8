#pragma once

#include <map>
#include <string>

#include "eqsur/tensor.hpp"

namespace eqsur {

/// Binary checkpoint: header (magic, version, config digest, field-type
/// table, element-ordering convention) followed by named parameter blobs as
/// little-endian 32-bit floats, row-major.
struct Checkpoint {
    std::string config_text;      // resolved model configuration
    std::string field_type_table; // channel -> representation tags
    std::string element_order;
    std::map<std::string, Tensor<float>> blobs;
    uint64_t config_digest = 0;
    uint64_t file_digest = 0; // filled on load
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Digest of a checkpoint file on disk (lineage tracking).
uint64_t checkpoint_digest(const std::string& path);

} // namespace eqsur
