// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training of the per-modality projections.
//
// Every batch: project each sample's local descriptors into the shared
// latent space, fit a mixture per sample and modality with gradients off,
// re-derive the mixture on the tape from the frozen responsibilities, build
// component embeddings and prototypes, evaluate the losses, backpropagate,
// clip, and take an Adam step. Stage one trains without the relative
// distance term; stage two adds it.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gcrdp/data.hpp"
#include "gcrdp/error.hpp"
#include "gcrdp/gmm.hpp"
#include "gcrdp/kernel/adam.hpp"
#include "gcrdp/kernel/tape.hpp"
#include "gcrdp/losses.hpp"

namespace gcrdp::train {

using kernel::NodeId;
using kernel::Tape;
using kernel::Tensor;

// Raised when a loss term or weight turns non-finite mid-training.
class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

struct TrainConfig {
  std::uint32_t latent_dim = 16;
  std::uint32_t image_components = 3;  // K_v
  std::uint32_t text_components = 3;   // K_t
  double temperature = 0.1;
  double alpha = 1.0;
  double lambda = 1.0;
  double theta = 0.5;
  double learning_rate = 1e-4;
  std::uint32_t batch_size = 8;
  std::uint32_t stage1_epochs = 30;
  std::uint32_t stage2_epochs = 30;
  std::uint32_t finetune_epochs = 20;
  double finetune_lr_factor = 0.1;
  double grad_clip = 10.0;
  // Single mean-pooled embedding per sample instead of a mixture.
  bool disable_gmm = false;
  std::uint64_t seed = 0;

  void validate() const;
  std::uint32_t total_epochs() const { return stage1_epochs + stage2_epochs; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct ModelState {
  TrainConfig config;
  Tensor image_projection;  // d_raw_v x d
  Tensor text_projection;   // d_raw_t x d
  kernel::AdamState adam;
  std::uint64_t epoch = 0;
  std::mt19937_64 rng;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

// Uniform(-sqrt(6 / fan_in), sqrt(6 / fan_in)) projections and fresh Adam
// moments, all drawn from the config seed.
ModelState init_model(const TrainConfig& config, const data::DatasetHeader& header);

struct EpochMetrics {
  std::uint64_t epoch = 0;
  int stage = 1;
  std::size_t batches = 0;
  double ence_image = 0.0;
  double ence_text = 0.0;
  double cross = 0.0;
  double rdp = 0.0;
  double total = 0.0;
  double seconds = 0.0;  // wall time, excluded from equality

  friend bool operator==(const EpochMetrics& a, const EpochMetrics& b) {
    return a.epoch == b.epoch && a.stage == b.stage && a.batches == b.batches &&
           a.ence_image == b.ence_image && a.ence_text == b.ence_text && a.cross == b.cross &&
           a.rdp == b.rdp && a.total == b.total;
  }
};

struct TrainResult {
  ModelState state;
  std::vector<EpochMetrics> trace;
};

// Runs both stages from a fresh model over the given training ids.
TrainResult train(const TrainConfig& config, const data::Dataset& dataset,
                  std::span<const std::uint64_t> ids);

// Continues the schedule from state.epoch for up to `epochs` epochs, never
// past the end of stage two. Resuming from a checkpoint through this
// function matches an uninterrupted run bit for bit.
std::vector<EpochMetrics> train_epochs(ModelState& state, const data::Dataset& dataset,
                                       std::span<const std::uint64_t> ids, std::size_t epochs);

// Continues the full objective on the support samples of a k-shot split
// for config.finetune_epochs epochs at learning_rate * finetune_lr_factor.
ModelState finetune(ModelState state, const data::EpisodeSplit& split, const data::Dataset& dataset);

struct Embedding {
  Tensor image_prototype;   // 1 x p
  Tensor text_prototype;    // 1 x p
  Tensor image_components;  // K_v x p
  Tensor text_components;   // K_t x p
};

// Forward-only; p = 2d + 1 with mixtures, d without.
Embedding embed(const ModelState& state, const data::SampleRecord& record);

// Fitted mixtures for one sample, reused when a graph is rebuilt.
struct SampleFit {
  gmm::Responsibilities image;
  gmm::Responsibilities text;
};

struct BatchGraph {
  NodeId image_weights;
  NodeId text_weights;
  losses::PairBatch batch;
  losses::LossBreakdown loss;
  std::vector<SampleFit> fits;
};

// Records one batch on the tape. Projections enter as trainable variables.
// When `fits` is given the mixtures are not refitted; gradient checks use
// this to hold the responsibilities fixed while perturbing the weights.
BatchGraph build_batch_graph(Tape& tape, const TrainConfig& config, const Tensor& image_projection,
                             const Tensor& text_projection, const data::Dataset& dataset,
                             std::span<const std::uint64_t> ids, std::uint64_t anchor_seed,
                             int stage, const std::vector<SampleFit>* fits = nullptr);

// Seed for the mixture fit of one sample and modality.
std::uint64_t fit_seed(std::uint64_t run_seed, std::uint64_t sample_id, Modality modality);

// Mixes a list of integers into one 64-bit seed.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> save_checkpoint(const ModelState& state);
// Throws FormatError on bad magic, version or checksum.
ModelState load_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint_file(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint_file(const std::filesystem::path& path);

}  // namespace gcrdp::train
