// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Paired image/text local-descriptor datasets: the canonical binary file
// format, a JSON-lines interchange format, a synthetic multi-peak generator,
// class-disjoint few-shot episodes and shuffled mini-batches.
//
// Binary layout (little-endian):
//
//   "GCRD" u32 version u32 samples u32 classes u32 L_v u32 L_t u32 d_v u32 d_t
//   per sample: u64 id, u32 label, f32[L_v * d_v] image, f32[L_t * d_t] text

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "gcrdp/kernel/tensor.hpp"

namespace gcrdp::data {

using kernel::Tensor;

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 32;

struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  std::uint32_t sample_count = 0;
  std::uint32_t class_count = 0;
  std::uint32_t image_locals = 0;  // L_v
  std::uint32_t text_locals = 0;   // L_t
  std::uint32_t image_dim = 0;     // d_raw_v
  std::uint32_t text_dim = 0;      // d_raw_t

  std::uint64_t record_bytes() const;
  std::uint64_t byte_length() const;
  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct SampleRecord {
  std::uint64_t id = 0;
  std::uint32_t label = 0;
  Tensor image;  // L_v x d_raw_v
  Tensor text;   // L_t x d_raw_t
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

class Dataset {
 public:
  Dataset() = default;
  // Validates every record against the header; throws ConfigError.
  Dataset(DatasetHeader header, std::vector<SampleRecord> records);

  const DatasetHeader& header() const noexcept { return header_; }
  const std::vector<SampleRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  // Throws ConfigError for an unknown id.
  const SampleRecord& at(std::uint64_t id) const;
  std::vector<std::uint64_t> ids() const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.header_ == b.header_ && a.records_ == b.records_;
  }

 private:
  DatasetHeader header_;
  std::vector<SampleRecord> records_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
// Throws FormatError with the byte offset of the first problem.
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

// One JSON object per line: {"id":..,"label":..,"image":[[..],..],"text":[[..],..]}.
// Values go through decimal text, so this is an interchange format only;
// the binary file is canonical. Import rounds to 32-bit floats like the
// binary loader does.
void write_jsonl(std::ostream& out, const Dataset& dataset);
Dataset read_jsonl(std::istream& in);

struct SyntheticSpec {
  std::uint32_t classes = 10;
  std::uint32_t samples_per_class = 30;
  std::uint32_t peaks = 3;  // P, Gaussian peaks per class
  std::uint32_t latent_dim = 8;
  std::uint32_t image_locals = 12;
  std::uint32_t text_locals = 12;
  std::uint32_t image_dim = 64;
  std::uint32_t text_dim = 64;
  double class_spread = 1.0;  // std of class centres in the latent space
  double peak_spread = 0.5;   // std of a class's peaks around its centre
  double peak_width = 0.1;    // std of descriptors around their peak
  double cross_modal_noise = 0.05;  // sigma_xm: text latent jitter vs image
  double image_noise = 0.05;        // raw-space descriptor noise, image side
  double text_noise = 0.05;         // raw-space descriptor noise, text side
  // Fraction of each sample's descriptors drawn from one clutter cluster
  // specific to that sample instead of from its class peaks.
  double background_fraction = 0.0;
  double background_spread = 1.0;  // std of a clutter cluster centre
  std::uint64_t seed = 0;

  void validate() const;
};

// Each sample spreads its descriptors over its class's peaks in a random
// order with shares proportional to P, P-1, ..., 1 (plus the optional
// clutter cluster). Image and text descriptor n share one latent point; the
// text copy is jittered by sigma_xm. Latent points reach raw space through
// one fixed random linear map per modality. Values are rounded to 32-bit
// floats so the dataset is exactly representable on disk.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct EpisodeSplit {
  std::vector<std::uint32_t> source_classes;
  std::vector<std::uint32_t> target_classes;
  std::uint32_t shots = 0;  // k
  std::map<std::uint32_t, std::vector<std::uint64_t>> support;  // per target class
  std::vector<std::uint64_t> query_ids;   // target-domain queries
  std::vector<std::uint64_t> source_ids;  // training pool

  std::vector<std::uint64_t> support_ids() const;
  friend bool operator==(const EpisodeSplit&, const EpisodeSplit&) = default;
};

// Shuffles classes with the seed, keeps round(classes * source_fraction)
// (at least one, leaving at least one) as the source domain, and for each
// target class takes k support samples; the rest are queries.
EpisodeSplit make_episode(const Dataset& dataset, std::uint64_t seed, std::uint32_t shots,
                          double source_fraction = 0.5);

// Shuffled batches of `batch_size` ids. The short remainder is kept when it
// has at least two ids and keep_short is set, dropped otherwise.
std::vector<std::vector<std::uint64_t>> make_batches(std::vector<std::uint64_t> ids,
                                                     std::size_t batch_size, std::mt19937_64& rng,
                                                     bool keep_short = true);
std::vector<std::vector<std::uint64_t>> make_batches(std::vector<std::uint64_t> ids,
                                                     std::size_t batch_size, std::uint64_t seed,
                                                     bool keep_short = true);

}  // namespace gcrdp::data
