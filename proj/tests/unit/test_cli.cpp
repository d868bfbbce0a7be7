// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gcrdp/cli.hpp"

using namespace gcrdp;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Fresh scratch directory per test case, removed afterwards.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("gcrdp_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

const std::vector<std::string> kTinyData{"--classes", "4", "--samples-per-class", "5", "--image-locals", "5",
                                         "--text-locals", "5", "--image-dim", "6", "--text-dim", "6",
                                         "--latent-dim", "3", "--seed", "3"};
const std::vector<std::string> kTinyTrain{"--dim", "3", "--components-image", "2", "--components-text", "2",
                                          "--stage1-epochs", "1", "--stage2-epochs", "1",
                                          "--finetune-epochs", "1", "--batch", "4"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string generate(const Scratch& s, const std::string& name = "d.gcrd") {
  const auto r = invoke(cat({"generate", "--out", s / name}, kTinyData));
  REQUIRE(r.code == 0);
  return s / name;
}

}  // namespace

TEST_CASE("seed and shot lists") {
  CHECK(cli::parse_seed_list("1..5") == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  CHECK(cli::parse_seed_list("1,2,7") == std::vector<std::uint64_t>{1, 2, 7});
  CHECK(cli::parse_seed_list("3") == std::vector<std::uint64_t>{3});
  CHECK(cli::parse_shot_list("0,1,3,5") == std::vector<std::uint32_t>{0, 1, 3, 5});
  CHECK_THROWS(cli::parse_seed_list("5..1"));
  CHECK_THROWS(cli::parse_seed_list("a"));
  CHECK_THROWS(cli::parse_shot_list(""));
}

TEST_CASE("variants") {
  const auto v = cli::default_variants();
  REQUIRE(v.size() == 3);
  train::TrainConfig base;
  CHECK(cli::apply_variant(base, v[1], 4).disable_gmm);
  CHECK(cli::apply_variant(base, v[2], 4).lambda == 0.0);
  CHECK(cli::apply_variant(base, v[0], 4).seed == 4);
}

TEST_CASE("usage errors") {
  CHECK(invoke({}).code == cli::kUsage);
  CHECK(invoke({"frobnicate"}).code == cli::kUsage);
  CHECK(invoke({"train", "--no-such-flag"}).code == cli::kUsage);
  CHECK(invoke({"ablate", "--out", "x"}).code == cli::kUsage);
  CHECK(invoke({"train", "--dataset", "/nonexistent/file.gcrd"}).code == cli::kUsage);
  Scratch s("usage");
  const auto d = generate(s);
  CHECK(invoke({"ablate", "--dataset", d, "--out", s / "g", "--disable-rdp"}).code == cli::kUsage);
  CHECK(invoke({"generate", "--out", s / "x.gcrd", "--peaks", "0"}).code == cli::kUsage);
}

TEST_CASE("malformed data maps to the data exit code") {
  Scratch s("baddata");
  std::ofstream(s / "junk.gcrd") << "not a dataset";
  const auto r = invoke({"train", "--dataset", s / "junk.gcrd", "--out", s / "run"});
  CHECK(r.code == cli::kDataError);
  CHECK(r.err.find("magic") != std::string::npos);
}

TEST_CASE("generate is deterministic and writes a manifest") {
  Scratch s("gen");
  generate(s, "a.gcrd");
  generate(s, "b.gcrd");
  CHECK(slurp(s / "a.gcrd") == slurp(s / "b.gcrd"));
  CHECK(fs::exists(s / "a.gcrd.manifest.json"));
}

TEST_CASE("configuration files and printing") {
  Scratch s("config");
  std::ofstream(s / "run.conf") << "dim=5\nalpha=2.5\n";
  const auto r = invoke({"train", "--config", s / "run.conf", "--alpha", "0.25", "--print-config"});
  CHECK(r.code == 0);
  CHECK(r.out.find("dim=5") != std::string::npos);
  CHECK(r.out.find("alpha=0.25") != std::string::npos);
  CHECK(r.out.find("lambda=1") != std::string::npos);  // defaults are listed too
}

TEST_CASE("train then evaluate") {
  Scratch s("train");
  const auto d = generate(s);
  const auto t = invoke(cat({"train", "--dataset", d, "--out", s / "run", "--seed", "2"}, kTinyTrain));
  REQUIRE(t.code == 0);
  CHECK(fs::exists(s / "run/ckpt"));
  CHECK(fs::exists(s / "run/metrics.csv"));
  CHECK(fs::exists(s / "run/manifest.json"));

  const std::vector<std::string> eval{"evaluate", "--dataset", d, "--checkpoint", s / "run/ckpt", "--k", "0,1"};
  REQUIRE(invoke(cat(eval, {"--out", s / "e1"})).code == 0);
  REQUIRE(invoke(cat(eval, {"--out", s / "e2"})).code == 0);
  for (const char* f : {"k0-I2T.csv", "k0-T2I.csv", "k1-I2T.csv", "k1-T2I.csv", "metrics.csv"}) {
    INFO(f);
    CHECK(fs::exists(s.dir / "e1" / f));
    CHECK(slurp(s.dir / "e1" / f) == slurp(s.dir / "e2" / f));
  }
  const std::string csv = slurp(s.dir / "e1" / "k0-I2T.csv");
  CHECK(csv.rfind("query_id,ap\n", 0) == 0);
  CHECK(csv.find("\nmAP,") != std::string::npos);

  // A second training run is byte-identical apart from wall time.
  REQUIRE(invoke(cat({"train", "--dataset", d, "--out", s / "run2", "--seed", "2"}, kTinyTrain)).code == 0);
  CHECK(slurp(s / "run/ckpt") == slurp(s / "run2/ckpt"));
  CHECK(slurp(s / "run/metrics.csv") == slurp(s / "run2/metrics.csv"));
}

TEST_CASE("summaries") {
  const std::vector<cli::RunRow> one{{"full", 1, 0, 0.3, 0.5, 0.4}};
  const auto r = cli::summarize(one);
  REQUIRE(r.size() == 1);
  CHECK(r[0].avg_mean == 0.4);
  CHECK(r[0].avg_sd == 0.0);

  const std::vector<cli::RunRow> two{{"full", 1, 0, 0.2, 0.4, 0.3}, {"full", 2, 0, 0.4, 0.6, 0.5}};
  const auto s = cli::summarize(two);
  CHECK(s[0].runs == 2);
  CHECK(s[0].avg_mean == doctest::Approx(0.4));
  CHECK(s[0].avg_sd == doctest::Approx(std::sqrt(0.02)));  // n - 1 in the denominator

  std::stringstream buf;
  cli::write_run_rows(buf, two);
  const auto back = cli::read_run_rows(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[1].avg == two[1].avg);
  CHECK(back[0].variant == "full");
}

TEST_CASE("ablate and report") {
  Scratch s("ablate");
  const auto d = generate(s);
  const auto a = invoke(
      cat({"ablate", "--dataset", d, "--out", s / "grid", "--seeds", "1..2", "--k", "0,1"}, kTinyTrain));
  REQUIRE(a.code == 0);
  const auto rep = invoke({"report", "--out", s / "grid"});
  CHECK(rep.code == 0);
  CHECK(rep.out.find("no-gmm") != std::string::npos);
  CHECK(rep.out.find("+-") != std::string::npos);

  // Drop one run and the report names it.
  std::istringstream in(slurp(s / "grid/metrics.csv"));
  std::ostringstream kept;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("no-rdp,2,1,", 0) != 0) kept << line << '\n';
  }
  std::ofstream(s / "grid/metrics.csv") << kept.str();
  const auto missing = invoke({"report", "--out", s / "grid"});
  CHECK(missing.code == cli::kDataError);
  CHECK(missing.err.find("no-rdp") != std::string::npos);
}
