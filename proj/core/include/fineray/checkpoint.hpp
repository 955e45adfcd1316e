#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fineray/tensor.hpp"

namespace fineray {

/// Flat, versioned container of named 32-bit parameter tensors plus a text
/// manifest of key/value metadata.
///
/// On disk a checkpoint is a directory holding
///   params.bin   -- magic "FRCKPT01", u32 tensor count, then per tensor:
///                   u32 name length, name bytes, u32 rank, u32 extents,
///                   float32 values; all integers and floats little-endian.
///   manifest.txt -- "fineray-checkpoint 1" then "key: value" lines.
/// Both files are written to a temp name and renamed into place.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  std::vector<std::pair<std::string, std::string>> meta;

  const std::string* find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return &v;
    return nullptr;
  }
  const std::string& require_meta(const std::string& key) const {
    const std::string* v = find_meta(key);
    if (!v) throw Error("Checkpoint: missing manifest key '" + key + "'");
    return *v;
  }
  const Tensor<float>* find_tensor(const std::string& name) const {
    for (const auto& [k, v] : tensors)
      if (k == name) return &v;
    return nullptr;
  }
};

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace fineray
