#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "slicevlp/diffmath/rng.hpp"
#include "slicevlp/trainer/config.hpp"
#include "slicevlp/trainer/model.hpp"
#include "slicevlp/trainer/optimizer.hpp"

namespace slicevlp::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

// Full training state after `epoch` completed epochs. Stage 0 marks a bare
// initialization (nothing trained yet).
struct Checkpoint {
  int stage = 0;
  std::size_t epoch = 0;
  TrainConfig config;
  Model model;
  OptimizerState optimizer;
  double best_val_loss = 0.0;  // +inf until a validation pass has run
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;
  bool stopped = false;
  diff::RngState shuffle_rng;
  diff::RngState dropout_rng;
  std::vector<EpochRecord> history;
  // Values of the stage's trainable group at best_epoch; empty when the
  // checkpoint itself already holds the best values.
  std::vector<diff::Param> best_params;
};

// Container: "RCKP", u32 version, u32 section count, then per section a u32
// name length, the name, a u64 payload length and the payload. Little-endian;
// doubles are stored as raw IEEE-754 bits.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b);

}  // namespace slicevlp::train
