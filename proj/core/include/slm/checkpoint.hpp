#pragma once

#include <map>
#include <string>
#include <vector>

#include "slm/tensor.hpp"

namespace slm {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Versioned binary weight file: per entry (name, shape, float64
/// little-endian data). Round-trips bit-exactly. `meta_json` carries
/// free-form metadata (architecture tag, config snapshot).
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries,
                     const std::string& meta_json);

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::string meta_json;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace slm
