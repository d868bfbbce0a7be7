// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "gcrdp/data.hpp"
#include "gcrdp/error.hpp"

namespace gcrdp::data {

namespace {

using Vec = std::vector<double>;

Vec gaussian(std::mt19937_64& rng, std::size_t n, double scale) {
  Vec v(n);
  for (double& x : v) x = scale * std::normal_distribution<double>(0.0, 1.0)(rng);
  return v;
}

// Largest-remainder split of `total` items proportional to `shares`.
std::vector<std::size_t> apportion(std::size_t total, const Vec& shares) {
  const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  std::vector<std::size_t> counts(shares.size());
  Vec remainder(shares.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double exact = static_cast<double>(total) * shares[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(shares.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[order[i % order.size()]];
  return counts;
}

// rows x cols with N(0, 1/cols) entries: raw = map * latent.
Tensor random_map(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  Vec v = gaussian(rng, rows * cols, 1.0 / std::sqrt(static_cast<double>(cols)));
  return Tensor::matrix(rows, cols, std::move(v));
}

Tensor project(const Tensor& map, const std::vector<Vec>& latents, std::size_t count, double noise,
               std::mt19937_64& rng) {
  const std::size_t raw = map.rows(), lat = map.cols();
  Tensor out = Tensor::zeros(count, raw);
  for (std::size_t n = 0; n < count; ++n) {
    for (std::size_t r = 0; r < raw; ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < lat; ++j) acc += map(r, j) * latents[n][j];
      out(n, r) = acc;
    }
  }
  if (noise > 0.0) {
    for (double& x : out.data()) x += noise * std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  for (double& x : out.data()) x = static_cast<double>(static_cast<float>(x));
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes == 0 || samples_per_class == 0) throw ConfigError("SyntheticSpec: no samples requested");
  if (peaks == 0) throw ConfigError("SyntheticSpec: peaks must be >= 1");
  if (latent_dim == 0 || image_dim == 0 || text_dim == 0) {
    throw ConfigError("SyntheticSpec: dimensions must be positive");
  }
  if (image_locals == 0 || text_locals == 0) {
    throw ConfigError("SyntheticSpec: each sample needs at least one local descriptor per modality");
  }
  for (double s : {class_spread, peak_spread, background_spread, peak_width, cross_modal_noise, image_noise, text_noise}) {
    if (!(s >= 0.0)) throw ConfigError("SyntheticSpec: noise and spread scales must be >= 0");
  }
  if (!(background_fraction >= 0.0 && background_fraction < 1.0)) {
    throw ConfigError("SyntheticSpec: background_fraction must lie in [0, 1)");
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t lat = spec.latent_dim;

  const Tensor image_map = random_map(rng, spec.image_dim, lat);
  const Tensor text_map = random_map(rng, spec.text_dim, lat);

  std::vector<std::vector<Vec>> peaks(spec.classes);
  for (auto& class_peaks : peaks) {
    const Vec centre = gaussian(rng, lat, spec.class_spread);
    for (std::uint32_t p = 0; p < spec.peaks; ++p) {
      Vec offset = gaussian(rng, lat, spec.peak_spread);
      for (std::size_t j = 0; j < lat; ++j) offset[j] += centre[j];
      class_peaks.push_back(std::move(offset));
    }
  }

  const std::size_t locals = std::max(spec.image_locals, spec.text_locals);
  const std::size_t clutter = static_cast<std::size_t>(
      std::lround(spec.background_fraction * static_cast<double>(locals)));
  Vec shares;
  for (std::uint32_t p = 0; p < spec.peaks; ++p) shares.push_back(static_cast<double>(spec.peaks - p));
  const std::vector<std::size_t> counts = apportion(locals - clutter, shares);

  DatasetHeader h;
  h.sample_count = spec.classes * spec.samples_per_class;
  h.class_count = spec.classes;
  h.image_locals = spec.image_locals;
  h.text_locals = spec.text_locals;
  h.image_dim = spec.image_dim;
  h.text_dim = spec.text_dim;

  std::vector<SampleRecord> records;
  records.reserve(h.sample_count);
  std::uint64_t next_id = 0;
  for (std::uint32_t c = 0; c < spec.classes; ++c) {
    for (std::uint32_t s = 0; s < spec.samples_per_class; ++s) {
      std::vector<Vec> centres;
      for (std::size_t g = 0; g < spec.peaks; ++g) {
        for (std::size_t n = 0; n < counts[g]; ++n) centres.push_back(peaks[c][g]);
      }
      if (clutter > 0) {
        const Vec bg = gaussian(rng, lat, spec.background_spread);
        for (std::size_t n = 0; n < clutter; ++n) centres.push_back(bg);
      }
      std::shuffle(centres.begin(), centres.end(), rng);

      std::vector<Vec> image_latent, text_latent;
      for (const Vec& centre : centres) {
        Vec u = gaussian(rng, lat, spec.peak_width);
        for (std::size_t j = 0; j < lat; ++j) u[j] += centre[j];
        Vec t = gaussian(rng, lat, spec.cross_modal_noise);
        for (std::size_t j = 0; j < lat; ++j) t[j] += u[j];
        image_latent.push_back(std::move(u));
        text_latent.push_back(std::move(t));
      }

      SampleRecord r;
      r.id = next_id++;
      r.label = c;
      r.image = project(image_map, image_latent, spec.image_locals, spec.image_noise, rng);
      r.text = project(text_map, text_latent, spec.text_locals, spec.text_noise, rng);
      records.push_back(std::move(r));
    }
  }
  return Dataset(h, std::move(records));
}

}  // namespace gcrdp::data
