#pragma once

#include <string>

#include "kformer/model.hpp"

namespace kformer {

// Versioned container: magic + format version, the model and injection
// configuration plus vocabulary as key-value text, then named parameter
// blobs (name, shape, raw little-endian 64-bit floats). Loading rejects
// other format versions.
void save_checkpoint(Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace kformer
