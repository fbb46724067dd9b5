#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "unea/config.hpp"
#include "unea/embed_store.hpp"
#include "unea/trainer.hpp"

namespace unea {

// Trained tables plus the final encodings, enough to evaluate, export and inspect
// without retraining. Tensors are stored as UNEA-EMB files, so values round to float32.
struct Checkpoint {
  EmbeddingTables tables;
  std::array<Matrix, 2> outputs;
  TrainConfig config;
  std::uint32_t epoch = 0;
  std::uint32_t refreshes = 0;
  std::string data_dir;
};

Checkpoint snapshot(const Trainer& trainer, const std::filesystem::path& data_dir);

// One .emb file per tensor and manifest.json with shapes, epoch and config hash.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
// Throws DataError on a missing file, a shape mismatch or a config hash mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace unea
