#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>

#include "slicevlp/datapipe/dataset.hpp"
#include "slicevlp/trainer/checkpoint.hpp"

namespace slicevlp::train {

struct TrainOptions {
  // When set, writes epoch_NNN.ckpt and last.ckpt after every epoch and
  // best.ckpt at the end.
  std::filesystem::path checkpoint_dir;
  bool keep_epoch_checkpoints = true;
  // Continue from a checkpoint produced by the same stage and configuration.
  const Checkpoint* resume = nullptr;
  // Stop (without marking the run finished) after this many epochs in this call.
  std::size_t max_epochs_this_run = std::numeric_limits<std::size_t>::max();
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;  // model at the best validation epoch; not resumable
  Checkpoint last;  // full state after the final epoch run; resumable
};

// Stage-0 checkpoint: the seeded initialization with nothing trained.
Checkpoint initial_checkpoint(const TrainConfig& cfg);

// Contrastive fine-tuning of the image encoder on 2D samples; text frozen.
TrainResult train_stage1(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& val,
                         const TrainOptions& options = {});

// Trains the slice-pooling adapter on 3D samples on top of the encoders in
// `base` (a stage-0 or stage-1 checkpoint), which stay frozen.
TrainResult train_stage2(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& val,
                         const Checkpoint& base, const TrainOptions& options = {});

// Caption embedding of each entry, one row per entry.
diff::Tensor caption_embeddings(const data::Dataset& ds, const enc::TextEncoderParams& text,
                                std::size_t vocab);

}  // namespace slicevlp::train
