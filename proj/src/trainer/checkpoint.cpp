// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Layout (little-endian):
//
//   "GCKP" u32 version, string config-json, u64 epoch,
//   tensor image_projection, tensor text_projection,
//   f64 lr b1 b2 eps, u64 steps, u32 count, count x (tensor m, tensor v),
//   string rng-state, u32 crc32 of everything before it
//
// where tensor = u32 rows, u32 cols, f64[rows * cols] and string is a u32
// length followed by the bytes.

#include <sstream>
#include <string>

#include "gcrdp/binary_io.hpp"
#include "gcrdp/trainer.hpp"

namespace gcrdp::train {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'K', 'P'};

void put_tensor(io::ByteWriter& out, const Tensor& t) {
  out.u32(static_cast<std::uint32_t>(t.rows()));
  out.u32(static_cast<std::uint32_t>(t.cols()));
  for (double v : t.data()) out.f64(v);
}

Tensor get_tensor(io::ByteReader& in) {
  const std::size_t at = in.offset();
  const std::uint64_t rows = in.u32(), cols = in.u32();
  if (rows * cols * 8 > in.remaining()) {
    throw FormatError("checkpoint tensor of " + std::to_string(rows) + " x " + std::to_string(cols) +
                          " overruns the file",
                      at);
  }
  std::vector<double> v(rows * cols);
  for (double& x : v) x = in.f64();
  return Tensor::matrix(rows, cols, std::move(v));
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const ModelState& state) {
  io::ByteWriter out;
  out.bytes(std::string_view(kMagic, 4));
  out.u32(kCheckpointVersion);
  out.string(nlohmann::json(state.config).dump());
  out.u64(state.epoch);
  put_tensor(out, state.image_projection);
  put_tensor(out, state.text_projection);
  const kernel::AdamConfig& a = state.adam.config();
  out.f64(a.learning_rate);
  out.f64(a.beta1);
  out.f64(a.beta2);
  out.f64(a.epsilon);
  out.u64(state.adam.steps());
  const auto& m = state.adam.first_moments();
  const auto& v = state.adam.second_moments();
  out.u32(static_cast<std::uint32_t>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    put_tensor(out, m[i]);
    put_tensor(out, v[i]);
  }
  std::ostringstream rng;
  rng << state.rng;
  out.string(rng.str());
  const std::uint32_t crc = io::crc32(out.buffer());
  out.u32(crc);
  return out.take();
}

ModelState load_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  if (bytes.size() < 4 || in.bytes(4) != std::string_view(kMagic, 4)) {
    throw FormatError("bad magic: not a GCKP checkpoint", 0);
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")",
                      4);
  }
  if (bytes.size() < 12) throw FormatError("checkpoint truncated", bytes.size());
  const std::size_t body = bytes.size() - 4;
  io::ByteReader tail(bytes.subspan(body));
  if (io::crc32(bytes.first(body)) != tail.u32()) {
    throw FormatError("checkpoint checksum mismatch", body);
  }

  ModelState s;
  const std::size_t config_at = in.offset();
  try {
    s.config = nlohmann::json::parse(in.string()).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config is unreadable: ") + e.what(), config_at);
  }
  s.epoch = in.u64();
  s.image_projection = get_tensor(in);
  s.text_projection = get_tensor(in);
  kernel::AdamConfig a;
  a.learning_rate = in.f64();
  a.beta1 = in.f64();
  a.beta2 = in.f64();
  a.epsilon = in.f64();
  const std::uint64_t steps = in.u64();
  const std::uint32_t count = in.u32();
  std::vector<Tensor> m, v;
  for (std::uint32_t i = 0; i < count; ++i) {
    m.push_back(get_tensor(in));
    v.push_back(get_tensor(in));
  }
  const std::size_t adam_at = in.offset();
  if (count != 2 || m[0].shape() != s.image_projection.shape() ||
      m[1].shape() != s.text_projection.shape()) {
    throw FormatError("checkpoint optimizer moments do not match the projections", adam_at);
  }
  try {
    s.adam = kernel::AdamState::restore(a, steps, std::move(m), std::move(v));
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint optimizer state: ") + e.what(), adam_at);
  }
  const std::size_t rng_at = in.offset();
  std::istringstream rng(in.string());
  rng >> s.rng;
  if (rng.fail()) throw FormatError("checkpoint RNG state is unreadable", rng_at);
  if (in.offset() != body) {
    throw FormatError("checkpoint has " + std::to_string(body - in.offset()) + " trailing bytes",
                      in.offset());
  }
  return s;
}

void save_checkpoint_file(const std::filesystem::path& path, const ModelState& state) {
  io::write_file(path, save_checkpoint(state));
}

ModelState load_checkpoint_file(const std::filesystem::path& path) {
  return load_checkpoint(io::read_file(path));
}

}  // namespace gcrdp::train
