// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end plus the ablation grid and report reducer it
// drives.
//
//   gcrdp generate --out data.gcrd [--classes 10 --peaks 3 --seed 7 ...]
//   gcrdp train    --dataset data.gcrd --out run [--seed 1 --disable-rdp ...]
//   gcrdp evaluate --dataset data.gcrd --checkpoint run/ckpt --k 0,3 --out eval
//   gcrdp ablate   --dataset data.gcrd --k 0,1,3,5 --seeds 1..5 --out grid
//   gcrdp report   --out grid
//
// Every flag may also come from a key=value file given with --config; flags
// on the command line win. --print-config prints the resolved values.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gcrdp/data.hpp"
#include "gcrdp/trainer.hpp"

namespace gcrdp::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDataError = 3,
  kNumericError = 4,
};

inline constexpr std::string_view kToolVersion = "0.1.0";

// "1..5" (inclusive range), "1,2,7" or "3".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<std::uint32_t> parse_shot_list(const std::string& text);

struct Variant {
  std::string name;  // full, no-gmm, no-rdp
  bool disable_gmm = false;
  bool disable_rdp = false;
};

std::vector<Variant> default_variants();
train::TrainConfig apply_variant(train::TrainConfig base, const Variant& v, std::uint64_t seed);

struct AblationPlan {
  train::TrainConfig base;
  std::vector<Variant> variants = default_variants();
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::uint32_t> shots{0, 3};
  double source_fraction = 0.5;
};

struct RunRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::uint32_t shots = 0;
  double i2t = 0.0;
  double t2i = 0.0;
  double avg = 0.0;
};

// One training run per (variant, seed) on the source classes of that seed's
// split; each k > 0 fine-tunes a copy on its support set before evaluation.
// Rows come out in variant, seed, k order.
std::vector<RunRow> run_ablation(const data::Dataset& dataset, const AblationPlan& plan,
                                 const std::function<void(const RunRow&)>& on_row = {});

struct ReportRow {
  std::string variant;
  std::uint32_t shots = 0;
  std::size_t runs = 0;
  double i2t_mean = 0.0, i2t_sd = 0.0;
  double t2i_mean = 0.0, t2i_sd = 0.0;
  double avg_mean = 0.0, avg_sd = 0.0;
};

// Groups by (variant, k) in first-seen order. Standard deviations use n - 1
// and are 0 for a single run.
std::vector<ReportRow> summarize(const std::vector<RunRow>& rows);

void write_run_rows(std::ostream& out, const std::vector<RunRow>& rows);
std::vector<RunRow> read_run_rows(std::istream& in);
void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);
void write_report_table(std::ostream& out, const std::vector<ReportRow>& rows);

// Entry point; args excludes the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gcrdp::cli
