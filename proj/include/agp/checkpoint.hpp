#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "agp/config.hpp"
#include "agp/data.hpp"
#include "agp/models.hpp"

namespace agp {

// Checkpoint file, all integers little-endian:
//
//   bytes 0..7   magic "AGPCKPT\0"
//   u32          format version (1)
//   u32 + bytes  metadata JSON (model, input spec, normalization, run config)
//   u32          tensor count
//   per tensor:  u32 name length, name bytes, u32 rank, rank x u64 extents,
//                extent-product x f32 values
//
// Tensors are the model's trainable parameters followed by its buffers
// (batch-norm running statistics), keyed by layer-qualified name.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  ModelKind model = ModelKind::resnet_toy;
  InputSpec input;
  Normalization normalization;
  RunConfig run;
};

void save_checkpoint(const std::filesystem::path& path, Model<float>& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::unique_ptr<Model<float>> model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace agp
