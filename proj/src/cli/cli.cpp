// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "gcrdp/binary_io.hpp"
#include "gcrdp/error.hpp"
#include "gcrdp/eval.hpp"

namespace gcrdp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) parts.push_back(item);
  return parts;
}

std::uint64_t parse_uint(const std::string& s, const char* what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || s.front() == '-') {
    throw ConfigError(std::string("invalid ") + what + " '" + s + "'");
  }
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  const auto bytes = io::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t lo = parse_uint(text.substr(0, dots), "seed range");
    const std::uint64_t hi = parse_uint(text.substr(dots + 2), "seed range");
    if (hi < lo) throw ConfigError("seed range '" + text + "' is empty");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  for (const auto& part : split(text, ',')) seeds.push_back(parse_uint(part, "seed"));
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

std::vector<std::uint32_t> parse_shot_list(const std::string& text) {
  std::vector<std::uint32_t> shots;
  for (const auto& part : split(text, ',')) {
    const std::uint64_t k = parse_uint(part, "k-shot value");
    if (k > 1000) throw ConfigError("k-shot value " + part + " is out of range");
    shots.push_back(static_cast<std::uint32_t>(k));
  }
  if (shots.empty()) throw ConfigError("empty k-shot list");
  return shots;
}

std::vector<Variant> default_variants() {
  return {{"full", false, false}, {"no-gmm", true, false}, {"no-rdp", false, true}};
}

train::TrainConfig apply_variant(train::TrainConfig base, const Variant& v, std::uint64_t seed) {
  base.seed = seed;
  if (v.disable_gmm) base.disable_gmm = true;
  if (v.disable_rdp) base.lambda = 0.0;
  return base;
}

std::vector<RunRow> run_ablation(const data::Dataset& dataset, const AblationPlan& plan,
                                 const std::function<void(const RunRow&)>& on_row) {
  std::vector<RunRow> rows;
  for (const Variant& v : plan.variants) {
    for (std::uint64_t seed : plan.seeds) {
      const train::TrainConfig cfg = apply_variant(plan.base, v, seed);
      const data::EpisodeSplit zero = data::make_episode(dataset, seed, 0, plan.source_fraction);
      const train::TrainResult trained = train::train(cfg, dataset, zero.source_ids);
      for (std::uint32_t k : plan.shots) {
        const data::EpisodeSplit split = data::make_episode(dataset, seed, k, plan.source_fraction);
        const train::ModelState state = k == 0 ? trained.state : train::finetune(trained.state, split, dataset);
        const eval::EvalPair e = eval::evaluate_both(state, split, dataset);
        RunRow row{v.name, seed, k, e.i2t.map, e.t2i.map, e.avg()};
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<ReportRow> summarize(const std::vector<RunRow>& rows) {
  std::vector<std::pair<std::string, std::uint32_t>> order;
  std::map<std::pair<std::string, std::uint32_t>, std::vector<const RunRow*>> groups;
  for (const RunRow& r : rows) {
    const auto key = std::make_pair(r.variant, r.shots);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<ReportRow> out;
  for (const auto& key : order) {
    std::vector<double> i2t, t2i, avg;
    for (const RunRow* r : groups[key]) {
      i2t.push_back(r->i2t);
      t2i.push_back(r->t2i);
      avg.push_back(r->avg);
    }
    out.push_back({key.first, key.second, i2t.size(), mean(i2t), stddev(i2t), mean(t2i), stddev(t2i),
                   mean(avg), stddev(avg)});
  }
  return out;
}

void write_run_rows(std::ostream& out, const std::vector<RunRow>& rows) {
  out << "variant,seed,k,i2t,t2i,avg\n";
  for (const RunRow& r : rows) {
    out << r.variant << ',' << r.seed << ',' << r.shots << ',' << fmt(r.i2t) << ',' << fmt(r.t2i) << ','
        << fmt(r.avg) << '\n';
  }
}

std::vector<RunRow> read_run_rows(std::istream& in) {
  std::vector<RunRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) {
      throw FormatError("metrics.csv line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                            " fields, expected 6",
                        0);
    }
    try {
      rows.push_back({f[0], parse_uint(f[1], "seed"), static_cast<std::uint32_t>(parse_uint(f[2], "k")),
                      std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const std::invalid_argument&) {
      throw FormatError("metrics.csv line " + std::to_string(line_no) + " has a non-numeric score", 0);
    }
  }
  return rows;
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "variant,k,runs,i2t_mean,i2t_sd,t2i_mean,t2i_sd,avg_mean,avg_sd\n";
  for (const ReportRow& r : rows) {
    out << r.variant << ',' << r.shots << ',' << r.runs << ',' << fmt(r.i2t_mean) << ',' << fmt(r.i2t_sd)
        << ',' << fmt(r.t2i_mean) << ',' << fmt(r.t2i_sd) << ',' << fmt(r.avg_mean) << ','
        << fmt(r.avg_sd) << '\n';
  }
}

void write_report_table(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << std::left << std::setw(10) << "variant" << std::setw(5) << "k" << std::setw(6) << "runs"
      << std::setw(19) << "I2T" << std::setw(19) << "T2I" << "Avg\n";
  auto cell = [](double m, double sd) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", m, sd);
    return std::string(buf);
  };
  for (const ReportRow& r : rows) {
    out << std::left << std::setw(10) << r.variant << std::setw(5) << r.shots << std::setw(6) << r.runs
        << std::setw(19) << cell(r.i2t_mean, r.i2t_sd) << std::setw(19) << cell(r.t2i_mean, r.t2i_sd)
        << cell(r.avg_mean, r.avg_sd) << '\n';
  }
}

namespace {

struct Options {
  std::string command;
  std::string dataset;
  std::string out;
  std::string checkpoint;
  std::string seeds = "1";
  std::string shots = "0";
  double source_fraction = 0.5;
  bool disable_rdp = false;
  bool print_config = false;
  train::TrainConfig train;
  data::SyntheticSpec synth;
};

void add_options(CLI::App& app, Options& o) {
  app.option_defaults()->always_capture_default();
  app.add_option("command", o.command, "generate | train | evaluate | ablate | report")
      ->check(CLI::IsMember({"generate", "train", "evaluate", "ablate", "report"}));
  app.add_option("--dataset", o.dataset, "GCRD dataset file")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "output file (generate) or directory");
  app.add_option("--checkpoint", o.checkpoint, "checkpoint file (evaluate)")->check(CLI::ExistingFile);
  app.add_option("--seed,--seeds", o.seeds, "seed, list (1,2,3) or range (1..5)");
  app.add_option("--k", o.shots, "k-shot list, e.g. 0,1,3,5");
  app.add_option("--source-fraction", o.source_fraction, "share of classes in the source domain");

  train::TrainConfig& t = o.train;
  app.add_option("--dim", t.latent_dim, "shared latent dimension d");
  app.add_option("--components-image", t.image_components, "mixture components K_v");
  app.add_option("--components-text", t.text_components, "mixture components K_t");
  app.add_option("--tau", t.temperature, "contrastive temperature");
  app.add_option("--alpha", t.alpha, "cross-modal alignment weight");
  app.add_option("--lambda", t.lambda, "relative distance preservation weight");
  app.add_option("--theta", t.theta, "confidence threshold for relative distance preservation");
  app.add_option("--lr", t.learning_rate, "Adam learning rate");
  app.add_option("--batch", t.batch_size, "batch size N");
  app.add_option("--stage1-epochs", t.stage1_epochs);
  app.add_option("--stage2-epochs", t.stage2_epochs);
  app.add_option("--finetune-epochs", t.finetune_epochs);
  app.add_option("--finetune-lr-factor", t.finetune_lr_factor);
  app.add_option("--grad-clip", t.grad_clip);
  app.add_flag("--disable-gmm", t.disable_gmm, "mean-pooled single embedding per sample");
  app.add_flag("--disable-rdp", o.disable_rdp, "train with lambda = 0");

  data::SyntheticSpec& s = o.synth;
  app.add_option("--classes", s.classes);
  app.add_option("--samples-per-class", s.samples_per_class);
  app.add_option("--peaks", s.peaks);
  app.add_option("--latent-dim", s.latent_dim, "generator latent dimension");
  app.add_option("--image-locals", s.image_locals);
  app.add_option("--text-locals", s.text_locals);
  app.add_option("--image-dim", s.image_dim);
  app.add_option("--text-dim", s.text_dim);
  app.add_option("--class-spread", s.class_spread);
  app.add_option("--peak-spread", s.peak_spread);
  app.add_option("--peak-width", s.peak_width);
  app.add_option("--cross-modal-noise", s.cross_modal_noise);
  app.add_option("--image-noise", s.image_noise);
  app.add_option("--text-noise", s.text_noise);
  app.add_option("--background-fraction", s.background_fraction);
  app.add_option("--background-spread", s.background_spread);

  app.add_flag("--print-config", o.print_config, "print the resolved configuration and exit");
  app.set_config("--config", "", "key=value configuration file");
}

json manifest(const Options& o, const std::string& resolved, const std::vector<std::uint64_t>& seeds,
              const std::vector<std::uint32_t>& shots) {
  json m{{"tool", "gcrdp"},
         {"version", kToolVersion},
         {"command", o.command},
         {"config", resolved},
         {"train_config", o.train},
         {"seeds", seeds},
         {"k", shots}};
  if (!o.dataset.empty()) {
    const auto bytes = io::read_file(o.dataset);
    m["dataset"] = {{"path", o.dataset}, {"bytes", bytes.size()}, {"crc32", io::crc32(bytes)}};
  }
  return m;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw CLI::ValidationError(message);
}

train::TrainConfig effective_train(const Options& o, std::uint64_t seed) {
  train::TrainConfig t = o.train;
  t.seed = seed;
  if (o.disable_rdp) t.lambda = 0.0;
  return t;
}

void write_trace(const fs::path& dir, const std::vector<train::EpochMetrics>& trace) {
  std::ostringstream metrics, timing;
  metrics << "epoch,stage,batches,ence_image,ence_text,cross,rdp,total\n";
  timing << "epoch,seconds\n";
  for (const auto& m : trace) {
    metrics << m.epoch << ',' << m.stage << ',' << m.batches << ',' << fmt(m.ence_image) << ','
            << fmt(m.ence_text) << ',' << fmt(m.cross) << ',' << fmt(m.rdp) << ',' << fmt(m.total) << '\n';
    timing << m.epoch << ',' << fmt(m.seconds) << '\n';
  }
  write_text(dir / "metrics.csv", metrics.str());
  write_text(dir / "timing.csv", timing.str());
}

int cmd_generate(const Options& o, const std::string& resolved, std::ostream& out) {
  require(!o.out.empty(), "generate needs --out");
  data::SyntheticSpec spec = o.synth;
  const auto seeds = parse_seed_list(o.seeds);
  require(seeds.size() == 1, "generate takes a single --seed");
  spec.seed = seeds.front();
  const data::Dataset ds = data::generate_synthetic(spec);
  data::save_dataset(o.out, ds);
  Options copy = o;
  copy.dataset = o.out;
  write_text(o.out + ".manifest.json", manifest(copy, resolved, seeds, {}).dump(2) + "\n");
  out << "wrote " << ds.size() << " samples to " << o.out << '\n';
  return kOk;
}

int cmd_train(const Options& o, const std::string& resolved, std::ostream& out) {
  require(!o.dataset.empty() && !o.out.empty(), "train needs --dataset and --out");
  const auto seeds = parse_seed_list(o.seeds);
  const data::Dataset ds = data::load_dataset(o.dataset);
  fs::create_directories(o.out);
  for (std::uint64_t seed : seeds) {
    const fs::path dir = seeds.size() == 1 ? fs::path(o.out) : fs::path(o.out) / ("seed-" + std::to_string(seed));
    fs::create_directories(dir);
    const data::EpisodeSplit split = data::make_episode(ds, seed, 0, o.source_fraction);
    const train::TrainResult r = train::train(effective_train(o, seed), ds, split.source_ids);
    train::save_checkpoint_file(dir / "ckpt", r.state);
    write_trace(dir, r.trace);
    out << "seed " << seed << ": trained " << r.trace.size() << " epochs, final loss "
        << (r.trace.empty() ? 0.0 : r.trace.back().total) << ", checkpoint " << (dir / "ckpt").string() << '\n';
  }
  write_text(fs::path(o.out) / "manifest.json", manifest(o, resolved, seeds, {}).dump(2) + "\n");
  return kOk;
}

int cmd_evaluate(const Options& o, const std::string& resolved, std::ostream& out) {
  require(!o.dataset.empty() && !o.checkpoint.empty() && !o.out.empty(),
          "evaluate needs --dataset, --checkpoint and --out");
  const data::Dataset ds = data::load_dataset(o.dataset);
  const train::ModelState state = train::load_checkpoint_file(o.checkpoint);
  const auto shots = parse_shot_list(o.shots);
  const std::uint64_t seed = state.config.seed;
  fs::create_directories(o.out);
  std::vector<RunRow> rows;
  for (std::uint32_t k : shots) {
    const data::EpisodeSplit split = data::make_episode(ds, seed, k, o.source_fraction);
    const train::ModelState s = k == 0 ? state : train::finetune(state, split, ds);
    const eval::EvalPair e = eval::evaluate_both(s, split, ds);
    for (const eval::EvalReport* r : {&e.i2t, &e.t2i}) {
      const std::string stem = "k" + std::to_string(k) + "-" + eval::to_string(r->direction);
      std::ostringstream csv;
      eval::write_csv(csv, *r);
      write_text(fs::path(o.out) / (stem + ".csv"), csv.str());
      write_text(fs::path(o.out) / (stem + ".json"), eval::to_json(*r).dump(2) + "\n");
    }
    rows.push_back({state.config.disable_gmm ? "no-gmm" : state.config.lambda == 0.0 ? "no-rdp" : "full",
                    seed, k, e.i2t.map, e.t2i.map, e.avg()});
    out << "k=" << k << "  I2T " << fmt(e.i2t.map) << "  T2I " << fmt(e.t2i.map) << "  Avg " << fmt(e.avg())
        << '\n';
  }
  std::ostringstream csv;
  write_run_rows(csv, rows);
  write_text(fs::path(o.out) / "metrics.csv", csv.str());
  write_text(fs::path(o.out) / "manifest.json", manifest(o, resolved, {seed}, shots).dump(2) + "\n");
  return kOk;
}

int cmd_ablate(const Options& o, const std::string& resolved, std::ostream& out) {
  require(!o.dataset.empty() && !o.out.empty(), "ablate needs --dataset and --out");
  require(!o.disable_rdp && !o.train.disable_gmm,
          "ablate runs the variants itself; drop --disable-gmm/--disable-rdp");
  const data::Dataset ds = data::load_dataset(o.dataset);
  AblationPlan plan;
  plan.base = o.train;
  plan.seeds = parse_seed_list(o.seeds);
  plan.shots = parse_shot_list(o.shots);
  plan.source_fraction = o.source_fraction;
  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "manifest.json",
             manifest(o, resolved, plan.seeds, plan.shots).dump(2) + "\n");
  const auto rows = run_ablation(ds, plan, [&](const RunRow& r) {
    out << r.variant << " seed " << r.seed << " k=" << r.shots << "  Avg " << fmt(r.avg) << '\n';
  });
  std::ostringstream csv;
  write_run_rows(csv, rows);
  write_text(fs::path(o.out) / "metrics.csv", csv.str());
  std::ostringstream report;
  write_report_csv(report, summarize(rows));
  write_text(fs::path(o.out) / "report.csv", report.str());
  write_report_table(out, summarize(rows));
  return kOk;
}

int cmd_report(const Options& o, std::ostream& out, std::ostream& err) {
  require(!o.out.empty(), "report needs --out (the run directory)");
  const fs::path dir(o.out);
  const json m = json::parse(read_text(dir / "manifest.json"));
  std::ifstream in(dir / "metrics.csv");
  if (!in) throw Error("cannot read " + (dir / "metrics.csv").string());
  const auto rows = read_run_rows(in);

  // Anything the manifest promised but metrics.csv lacks is listed.
  std::vector<std::string> missing;
  const auto seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
  const auto shots = m.at("k").get<std::vector<std::uint32_t>>();
  std::vector<std::string> variants;
  if (m.at("command") == "ablate") {
    for (const auto& v : default_variants()) variants.push_back(v.name);
  } else {
    for (const auto& r : rows) {
      if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
    }
  }
  for (const auto& v : variants) {
    for (auto s : seeds) {
      for (auto k : shots) {
        const bool found = std::any_of(rows.begin(), rows.end(), [&](const RunRow& r) {
          return r.variant == v && r.seed == s && r.shots == k;
        });
        if (!found) missing.push_back(v + " seed " + std::to_string(s) + " k=" + std::to_string(k));
      }
    }
  }
  const auto summary = summarize(rows);
  std::ostringstream csv;
  write_report_csv(csv, summary);
  write_text(dir / "report.csv", csv.str());
  write_report_table(out, summary);
  if (!missing.empty()) {
    err << missing.size() << " run(s) missing from " << (dir / "metrics.csv").string() << ":\n";
    for (const auto& s : missing) err << "  " << s << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot cross-modal retrieval with mixture prototypes", "gcrdp"};
  Options o;
  add_options(app, o);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  const std::string resolved = app.config_to_str(true, false);
  if (o.print_config) {
    out << resolved;
    return kOk;
  }
  try {
    if (o.command.empty()) throw CLI::ValidationError("missing command");
    if (o.command == "generate") return cmd_generate(o, resolved, out);
    if (o.command == "train") return cmd_train(o, resolved, out);
    if (o.command == "evaluate") return cmd_evaluate(o, resolved, out);
    if (o.command == "ablate") return cmd_ablate(o, resolved, out);
    return cmd_report(o, out, err);
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace gcrdp::cli
