// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "gcrdp/kernel/compose.hpp"

namespace gcrdp::train {

namespace {

constexpr std::uint64_t kStage2Tag = 2;

std::size_t components_for(const TrainConfig& c, Modality m) {
  if (c.disable_gmm) return 1;
  return m == Modality::kImage ? c.image_components : c.text_components;
}

losses::ContrastConfig contrast_config(const TrainConfig& c, std::uint64_t anchor_seed) {
  losses::ContrastConfig cfg;
  cfg.temperature = c.temperature;
  cfg.anchor_seed = anchor_seed;
  cfg.enabled = !c.disable_gmm;
  return cfg;
}

losses::LossWeights loss_weights(const TrainConfig& c, int stage) {
  losses::LossWeights w;
  w.alpha = c.alpha;
  w.lambda = stage == 1 ? 0.0 : c.lambda;
  w.theta = c.theta;
  return w;
}

gmm::Responsibilities fit_responsibilities(const TrainConfig& config, const Tensor& features,
                                           std::uint64_t sample_id, Modality modality) {
  gmm::LocalFeatureSet set{modality, features};
  const auto fit = gmm::fit_em(set, components_for(config, modality),
                               fit_seed(config.seed, sample_id, modality));
  return fit.responsibilities;
}

void clip_global_norm(std::span<Tensor> grads, double limit) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.data()) sq += v * v;
  const double n = std::sqrt(sq);
  if (n <= limit || n == 0.0) return;
  const double f = limit / n;
  for (Tensor& g : grads)
    for (double& v : g.data()) v *= f;
}

void check_finite_terms(const losses::LossBreakdown& loss, std::uint64_t epoch, std::size_t batch) {
  const std::pair<const char*, double> terms[] = {
      {"ence_image", loss.ence_image}, {"ence_text", loss.ence_text}, {"cross", loss.cross}, {"rdp", loss.rdp}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite " + std::string(name) + " loss in epoch " +
                          std::to_string(epoch) + ", batch " + std::to_string(batch));
    }
  }
}

// One optimization step on `ids`. Returns the loss breakdown.
losses::LossBreakdown step(ModelState& state, const data::Dataset& dataset,
                           std::span<const std::uint64_t> ids, std::uint64_t anchor_seed, int stage,
                           std::size_t batch_index) {
  Tape tape;
  BatchGraph g = build_batch_graph(tape, state.config, state.image_projection, state.text_projection,
                                   dataset, ids, anchor_seed, stage);
  check_finite_terms(g.loss, state.epoch, batch_index);
  if (!std::isfinite(g.loss.total_value(tape))) {
    throw TrainingError("non-finite total loss in epoch " + std::to_string(state.epoch) + ", batch " +
                        std::to_string(batch_index));
  }
  tape.backward(g.loss.total);
  Tensor grads[] = {tape.grad(g.image_weights), tape.grad(g.text_weights)};
  clip_global_norm(grads, state.config.grad_clip);
  Tensor params[] = {std::move(state.image_projection), std::move(state.text_projection)};
  try {
    state.adam.step(params, grads);
  } catch (const NumericError& e) {
    state.image_projection = std::move(params[0]);
    state.text_projection = std::move(params[1]);
    throw TrainingError(std::string(e.what()) + " in epoch " + std::to_string(state.epoch) +
                        ", batch " + std::to_string(batch_index));
  }
  state.image_projection = std::move(params[0]);
  state.text_projection = std::move(params[1]);
  return g.loss;
}

EpochMetrics run_epoch(ModelState& state, const data::Dataset& dataset,
                       std::span<const std::uint64_t> ids, int stage, std::uint64_t tag) {
  const auto start = std::chrono::steady_clock::now();
  const auto batches = data::make_batches(std::vector<std::uint64_t>(ids.begin(), ids.end()),
                                          state.config.batch_size, state.rng);
  EpochMetrics m;
  m.epoch = state.epoch;
  m.stage = stage;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::uint64_t anchor_seed = derive_seed({state.config.seed, tag, state.epoch, b});
    const auto loss = step(state, dataset, batches[b], anchor_seed, stage, b);
    m.ence_image += loss.ence_image;
    m.ence_text += loss.ence_text;
    m.cross += loss.cross;
    m.rdp += loss.rdp;
    m.total += loss.recomposed();
  }
  m.batches = batches.size();
  if (m.batches > 0) {
    const double n = static_cast<double>(m.batches);
    m.ence_image /= n;
    m.ence_text /= n;
    m.cross /= n;
    m.rdp /= n;
    m.total /= n;
  }
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

Tensor he_uniform(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = std::uniform_real_distribution<double>(-bound, bound)(rng);
  return Tensor::matrix(fan_in, fan_out, std::move(v));
}

}  // namespace

void TrainConfig::validate() const {
  if (latent_dim == 0) throw ConfigError("TrainConfig: latent_dim must be positive");
  if (!disable_gmm && (image_components == 0 || text_components == 0)) {
    throw ConfigError("TrainConfig: component counts must be positive");
  }
  if (!disable_gmm && (image_components < 2 || text_components < 2)) {
    throw ConfigError("TrainConfig: the contrastive term needs at least 2 components per modality");
  }
  if (!(temperature > 0.0)) throw ConfigError("TrainConfig: temperature must be positive");
  if (!(alpha >= 0.0) || !(lambda >= 0.0)) throw ConfigError("TrainConfig: alpha and lambda must be >= 0");
  if (!(theta > -1.0 && theta < 1.0)) throw ConfigError("TrainConfig: theta must lie in (-1, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning rate must be positive");
  if (batch_size < 2) throw ConfigError("TrainConfig: batch size must be at least 2");
  if (!(finetune_lr_factor > 0.0)) throw ConfigError("TrainConfig: finetune_lr_factor must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("TrainConfig: grad_clip must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"latent_dim", c.latent_dim},
                     {"image_components", c.image_components},
                     {"text_components", c.text_components},
                     {"temperature", c.temperature},
                     {"alpha", c.alpha},
                     {"lambda", c.lambda},
                     {"theta", c.theta},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"stage1_epochs", c.stage1_epochs},
                     {"stage2_epochs", c.stage2_epochs},
                     {"finetune_epochs", c.finetune_epochs},
                     {"finetune_lr_factor", c.finetune_lr_factor},
                     {"grad_clip", c.grad_clip},
                     {"disable_gmm", c.disable_gmm},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("image_components").get_to(c.image_components);
  j.at("text_components").get_to(c.text_components);
  j.at("temperature").get_to(c.temperature);
  j.at("alpha").get_to(c.alpha);
  j.at("lambda").get_to(c.lambda);
  j.at("theta").get_to(c.theta);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("batch_size").get_to(c.batch_size);
  j.at("stage1_epochs").get_to(c.stage1_epochs);
  j.at("stage2_epochs").get_to(c.stage2_epochs);
  j.at("finetune_epochs").get_to(c.finetune_epochs);
  j.at("finetune_lr_factor").get_to(c.finetune_lr_factor);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("disable_gmm").get_to(c.disable_gmm);
  j.at("seed").get_to(c.seed);
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

std::uint64_t fit_seed(std::uint64_t run_seed, std::uint64_t sample_id, Modality modality) {
  return derive_seed({run_seed, sample_id, modality == Modality::kImage ? 11u : 13u});
}

ModelState init_model(const TrainConfig& config, const data::DatasetHeader& header) {
  config.validate();
  ModelState s;
  s.config = config;
  s.rng.seed(config.seed);
  s.image_projection = he_uniform(s.rng, header.image_dim, config.latent_dim);
  s.text_projection = he_uniform(s.rng, header.text_dim, config.latent_dim);
  const Tensor params[] = {s.image_projection, s.text_projection};
  s.adam = kernel::AdamState(params, kernel::AdamConfig{config.learning_rate});
  return s;
}

BatchGraph build_batch_graph(Tape& tape, const TrainConfig& config, const Tensor& image_projection,
                             const Tensor& text_projection, const data::Dataset& dataset,
                             std::span<const std::uint64_t> ids, std::uint64_t anchor_seed,
                             int stage, const std::vector<SampleFit>* fits) {
  if (fits && fits->size() != ids.size()) {
    throw ConfigError("build_batch_graph: " + std::to_string(fits->size()) + " fits for " +
                      std::to_string(ids.size()) + " samples");
  }
  BatchGraph g;
  g.image_weights = tape.variable(image_projection);
  g.text_weights = tape.variable(text_projection);

  std::vector<NodeId> image_comps, text_comps;
  std::vector<std::size_t> image_sel, text_sel;
  std::vector<std::uint32_t> labels;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const data::SampleRecord& r = dataset.at(ids[i]);
    const NodeId fv = tape.matmul(tape.constant(r.image), g.image_weights);
    const NodeId ft = tape.matmul(tape.constant(r.text), g.text_weights);
    labels.push_back(r.label);
    if (config.disable_gmm) {
      image_comps.push_back(gmm::mean_pool_embedding(tape, fv));
      text_comps.push_back(gmm::mean_pool_embedding(tape, ft));
      image_sel.push_back(0);
      text_sel.push_back(0);
      g.fits.push_back({});
      continue;
    }
    SampleFit fit = fits ? (*fits)[i]
                         : SampleFit{fit_responsibilities(config, tape.value(fv), r.id, Modality::kImage),
                                     fit_responsibilities(config, tape.value(ft), r.id, Modality::kText)};
    const auto dv = gmm::soft_refit(tape, fv, fit.image);
    const auto dt = gmm::soft_refit(tape, ft, fit.text);
    image_comps.push_back(gmm::component_embeddings(tape, dv));
    text_comps.push_back(gmm::component_embeddings(tape, dt));
    // Components come sorted by weight, so the heaviest one is first; ties
    // resolve to the lowest index as build_prototype does.
    auto argmax = [](const std::vector<double>& w) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < w.size(); ++c)
        if (w[c] > w[best]) best = c;
      return best;
    };
    image_sel.push_back(argmax(dv.weights));
    text_sel.push_back(argmax(dt.weights));
    g.fits.push_back(std::move(fit));
  }
  g.batch = losses::make_pair_batch(tape, std::move(image_comps), std::move(text_comps), image_sel,
                                    text_sel, std::move(labels));
  g.loss = losses::total_loss(tape, g.batch, contrast_config(config, anchor_seed),
                              loss_weights(config, stage));
  return g;
}

TrainResult train(const TrainConfig& config, const data::Dataset& dataset,
                  std::span<const std::uint64_t> ids) {
  TrainResult r{init_model(config, dataset.header()), {}};
  r.trace = train_epochs(r.state, dataset, ids, config.total_epochs());
  return r;
}

std::vector<EpochMetrics> train_epochs(ModelState& state, const data::Dataset& dataset,
                                       std::span<const std::uint64_t> ids, std::size_t epochs) {
  state.config.validate();
  if (ids.size() < 2) throw ConfigError("train: need at least 2 training samples");
  std::vector<EpochMetrics> trace;
  const std::uint64_t end = state.config.total_epochs();
  for (std::size_t e = 0; e < epochs && state.epoch < end; ++e) {
    const int stage = state.epoch < state.config.stage1_epochs ? 1 : 2;
    trace.push_back(run_epoch(state, dataset, ids, stage, stage == 1 ? 1 : kStage2Tag));
    ++state.epoch;
  }
  return trace;
}

ModelState finetune(ModelState state, const data::EpisodeSplit& split, const data::Dataset& dataset) {
  if (split.shots == 0) {
    throw ConfigError("finetune: zero-shot split has no support samples; skip fine-tuning for k = 0");
  }
  const std::vector<std::uint64_t> support = split.support_ids();
  if (support.size() < 2) throw ConfigError("finetune: need at least 2 support samples");
  if (state.config.finetune_epochs == 0) return state;

  const double base_lr = state.adam.config().learning_rate;
  state.adam.set_learning_rate(base_lr * state.config.finetune_lr_factor);
  TrainConfig cfg = state.config;
  cfg.batch_size = static_cast<std::uint32_t>(std::min<std::size_t>(cfg.batch_size, support.size()));
  std::swap(state.config, cfg);
  for (std::uint32_t e = 0; e < state.config.finetune_epochs; ++e) {
    const auto batches = data::make_batches(support, state.config.batch_size, state.rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const std::uint64_t anchor_seed = derive_seed({state.config.seed, 3, split.shots, e, b});
      step(state, dataset, batches[b], anchor_seed, 2, b);
    }
  }
  std::swap(state.config, cfg);
  state.adam.set_learning_rate(base_lr);
  return state;
}

Embedding embed(const ModelState& state, const data::SampleRecord& record) {
  if (record.image.cols() != state.image_projection.rows() ||
      record.text.cols() != state.text_projection.rows()) {
    throw ShapeError("embed: sample " + std::to_string(record.id) + " has descriptor widths " +
                     std::to_string(record.image.cols()) + "/" + std::to_string(record.text.cols()) +
                     " but the model expects " + std::to_string(state.image_projection.rows()) + "/" +
                     std::to_string(state.text_projection.rows()));
  }
  const Tensor fv = kernel::matmul(record.image, state.image_projection);
  const Tensor ft = kernel::matmul(record.text, state.text_projection);
  Embedding e;
  if (state.config.disable_gmm) {
    e.image_prototype = gmm::mean_pool_embedding(fv);
    e.text_prototype = gmm::mean_pool_embedding(ft);
    e.image_components = e.image_prototype;
    e.text_components = e.text_prototype;
    return e;
  }
  auto fit = [&](const Tensor& f, Modality m) {
    const auto em = gmm::fit_em(gmm::LocalFeatureSet{m, f}, components_for(state.config, m),
                                fit_seed(state.config.seed, record.id, m));
    return gmm::build_prototype(em.params, em.responsibilities);
  };
  const auto pv = fit(fv, Modality::kImage);
  const auto pt = fit(ft, Modality::kText);
  e.image_prototype = pv.prototype;
  e.text_prototype = pt.prototype;
  e.image_components = pv.components;
  e.text_components = pt.components;
  return e;
}

}  // namespace gcrdp::train
