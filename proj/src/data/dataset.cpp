// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>

#include "gcrdp/binary_io.hpp"
#include "gcrdp/data.hpp"
#include "gcrdp/error.hpp"

namespace gcrdp::data {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'R', 'D'};

void check_block(const Tensor& t, std::uint32_t rows, std::uint32_t cols, std::uint64_t id,
                 const char* what) {
  if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
    throw ConfigError("sample " + std::to_string(id) + ": " + what + " block is " +
                      t.shape_string() + ", header says [" + std::to_string(rows) + ", " +
                      std::to_string(cols) + "]");
  }
  if (rows == 0 || cols == 0) {
    throw ConfigError("sample " + std::to_string(id) + ": empty " + what + " descriptor set");
  }
}

Tensor read_block(io::ByteReader& in, std::uint32_t rows, std::uint32_t cols) {
  std::vector<double> values(static_cast<std::size_t>(rows) * cols);
  for (double& v : values) v = static_cast<double>(in.f32());
  return Tensor::matrix(rows, cols, std::move(values));
}

Tensor json_block(const nlohmann::json& rows, std::uint64_t id, const char* what) {
  if (!rows.is_array() || rows.empty() || !rows.front().is_array()) {
    throw ConfigError("jsonl sample " + std::to_string(id) + ": '" + what +
                      "' must be a non-empty array of arrays");
  }
  const std::size_t r = rows.size(), c = rows.front().size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw ConfigError("jsonl sample " + std::to_string(id) + ": ragged '" + what + "' block");
    }
    for (const auto& v : row) values.push_back(static_cast<double>(v.get<float>()));
  }
  return Tensor::matrix(r, c, std::move(values));
}

}  // namespace

std::uint64_t DatasetHeader::record_bytes() const {
  return 8 + 4 +
         4 * (static_cast<std::uint64_t>(image_locals) * image_dim +
              static_cast<std::uint64_t>(text_locals) * text_dim);
}

std::uint64_t DatasetHeader::byte_length() const {
  return kDatasetHeaderBytes + static_cast<std::uint64_t>(sample_count) * record_bytes();
}

Dataset::Dataset(DatasetHeader header, std::vector<SampleRecord> records)
    : header_(header), records_(std::move(records)) {
  if (header_.sample_count != records_.size()) {
    throw ConfigError("dataset header declares " + std::to_string(header_.sample_count) +
                      " samples but " + std::to_string(records_.size()) + " were given");
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const SampleRecord& r = records_[i];
    check_block(r.image, header_.image_locals, header_.image_dim, r.id, "image");
    check_block(r.text, header_.text_locals, header_.text_dim, r.id, "text");
    if (r.label >= header_.class_count) {
      throw ConfigError("sample " + std::to_string(r.id) + ": label " + std::to_string(r.label) +
                        " outside the " + std::to_string(header_.class_count) + " declared classes");
    }
    if (!r.image.all_finite() || !r.text.all_finite()) {
      throw ConfigError("sample " + std::to_string(r.id) + ": non-finite descriptor");
    }
    if (!index_.emplace(r.id, i).second) {
      throw ConfigError("duplicate sample id " + std::to_string(r.id));
    }
  }
}

const SampleRecord& Dataset::at(std::uint64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("unknown sample id " + std::to_string(id));
  return records_[it->second];
}

std::vector<std::uint64_t> Dataset::ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  const DatasetHeader& h = dataset.header();
  io::ByteWriter out;
  out.buffer().reserve(h.byte_length());
  out.bytes(std::string_view(kMagic, 4));
  out.u32(h.version);
  out.u32(h.sample_count);
  out.u32(h.class_count);
  out.u32(h.image_locals);
  out.u32(h.text_locals);
  out.u32(h.image_dim);
  out.u32(h.text_dim);
  for (const SampleRecord& r : dataset.records()) {
    out.u64(r.id);
    out.u32(r.label);
    for (double v : r.image.data()) out.f32(static_cast<float>(v));
    for (double v : r.text.data()) out.f32(static_cast<float>(v));
  }
  return out.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  if (bytes.size() < 4 || in.bytes(4) != std::string_view(kMagic, 4)) {
    throw FormatError("bad magic: not a GCRD dataset", 0);
  }
  DatasetHeader h;
  h.version = in.u32();
  if (h.version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(h.version) + " (expected " +
                          std::to_string(kDatasetVersion) + ")",
                      4);
  }
  h.sample_count = in.u32();
  h.class_count = in.u32();
  h.image_locals = in.u32();
  h.text_locals = in.u32();
  h.image_dim = in.u32();
  h.text_dim = in.u32();
  if (h.byte_length() != bytes.size()) {
    throw FormatError("dataset length mismatch: header implies " + std::to_string(h.byte_length()) +
                          " bytes, file has " + std::to_string(bytes.size()),
                      bytes.size() < h.byte_length() ? bytes.size() : h.byte_length());
  }
  std::vector<SampleRecord> records;
  records.reserve(h.sample_count);
  for (std::uint32_t i = 0; i < h.sample_count; ++i) {
    SampleRecord r;
    r.id = in.u64();
    r.label = in.u32();
    r.image = read_block(in, h.image_locals, h.image_dim);
    r.text = read_block(in, h.text_locals, h.text_dim);
    records.push_back(std::move(r));
  }
  try {
    return Dataset(h, std::move(records));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid dataset contents: ") + e.what(), kDatasetHeaderBytes);
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  io::write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

void write_jsonl(std::ostream& out, const Dataset& dataset) {
  auto block = [](const Tensor& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (double v : t.row_span(r)) row.push_back(static_cast<float>(v));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  for (const SampleRecord& r : dataset.records()) {
    nlohmann::json line = {{"id", r.id}, {"label", r.label}, {"image", block(r.image)},
                           {"text", block(r.text)}};
    out << line.dump() << '\n';
  }
}

Dataset read_jsonl(std::istream& in) {
  std::vector<SampleRecord> records;
  DatasetHeader h;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    SampleRecord r;
    r.id = j.at("id").get<std::uint64_t>();
    r.label = j.at("label").get<std::uint32_t>();
    r.image = json_block(j.at("image"), r.id, "image");
    r.text = json_block(j.at("text"), r.id, "text");
    h.class_count = std::max(h.class_count, r.label + 1);
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ConfigError("jsonl input holds no samples");
  h.sample_count = static_cast<std::uint32_t>(records.size());
  h.image_locals = static_cast<std::uint32_t>(records.front().image.rows());
  h.image_dim = static_cast<std::uint32_t>(records.front().image.cols());
  h.text_locals = static_cast<std::uint32_t>(records.front().text.rows());
  h.text_dim = static_cast<std::uint32_t>(records.front().text.cols());
  return Dataset(h, std::move(records));
}

}  // namespace gcrdp::data
