#include "doctest.h"

#include <sstream>

#include "vocnet/cli.hpp"
#include "vocnet/io.hpp"

using namespace vocnet;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("vocnet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small corpus shared by the command tests.
fs::path tiny_corpus() {
  static const fs::path path = [] {
    fs::path dir = scratch_dir("corpus");
    auto r = invoke({"--seed", "3", "gen-data", "--preset", "balanced", "--per-class", "6", "--out",
                     (dir / "tiny.csv").string()});
    REQUIRE(r.code == 0);
    return dir / "tiny.csv";
  }();
  return path;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& path) {
  std::stringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') rows.push_back(split_csv_line(line));
  }
  return rows;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(invoke({"gen-data", "--out", "/tmp/x.csv"}).code == cli::kExitUsage);
  CHECK(invoke({"--seed", "1"}).code == cli::kExitUsage);
  CHECK(invoke({"--seed", "1", "gen-data", "--preset", "weird", "--out", "/tmp/x.csv"}).code ==
        cli::kExitUsage);
  CHECK(invoke({"--seed", "1", "frobnicate"}).code == cli::kExitUsage);
}

TEST_CASE("data errors exit 2") {
  const fs::path dir = scratch_dir("data_err");
  write_file_atomic(dir / "bad.csv", "# format_version=1\nclass,concentration_ppm\nbenzene,x\n");
  auto r = invoke({"--seed", "1", "train", "--data", (dir / "bad.csv").string(), "--out-dir",
                   (dir / "o").string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("bad.csv:") != std::string::npos);
  CHECK(invoke({"--seed", "1", "evaluate", "--checkpoint", (dir / "none.ckpt").string(), "--data",
                tiny_corpus().string(), "--out-dir", (dir / "o").string()})
            .code == cli::kExitData);
}

TEST_CASE("gen-data is deterministic and shaped") {
  const fs::path dir = scratch_dir("gen");
  for (const char* name : {"a.csv", "b.csv"}) {
    REQUIRE(invoke({"--seed", "7", "gen-data", "--preset", "balanced", "--per-class", "4", "--out",
                    (dir / name).string()})
                .code == 0);
  }
  CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));
  CHECK(read_file(dir / "a.csv.recipe.json") == read_file(dir / "b.csv.recipe.json"));
  auto rows = csv_rows(dir / "a.csv");
  REQUIRE(rows.size() == 41);
  for (const auto& row : rows) CHECK(row.size() == 624);

  REQUIRE(invoke({"--seed", "7", "gen-data", "--preset", "starved", "--out", (dir / "s.csv").string()}).code == 0);
  auto spectra = read_spectra_csv(dir / "s.csv");
  std::array<int, kNumClasses> counts{};
  for (const auto& s : spectra) ++counts[class_index(s.label)];
  const int largest = *std::max_element(counts.begin(), counts.end());
  CHECK(counts[class_index(VocClass::o_xylene)] <= 0.02 * largest);
  CHECK(counts[class_index(VocClass::p_xylene)] <= 0.02 * largest);
}

TEST_CASE("json config supplies options") {
  const fs::path dir = scratch_dir("config");
  write_file_atomic(dir / "cfg.json",
                    "{\"seed\": 7, \"gen-data\": {\"preset\": \"balanced\", \"per-class\": 4}}");
  REQUIRE(invoke({"--config", (dir / "cfg.json").string(), "gen-data", "--out", (dir / "c.csv").string()})
              .code == 0);
  REQUIRE(invoke({"--seed", "7", "gen-data", "--per-class", "4", "--out", (dir / "d.csv").string()}).code == 0);
  CHECK(read_file(dir / "c.csv") == read_file(dir / "d.csv"));
}

TEST_CASE("ingest") {
  const fs::path dir = scratch_dir("ingest");
  std::string raw = "class,pid_ppm,v1_l,v2_l,690,1000,1310\nstyrene,100,0.6,2,0.1,0.2,0.3\n";
  write_file_atomic(dir / "raw.csv", raw);
  REQUIRE(invoke({"--seed", "1", "ingest", "--raw", (dir / "raw.csv").string(), "--out",
                  (dir / "s.csv").string()})
              .code == 0);
  auto spectra = read_spectra_csv(dir / "s.csv");
  REQUIRE(spectra.size() == 1);
  CHECK(spectra[0].concentration == doctest::Approx(23.0769).epsilon(1e-5));
}

TEST_CASE("train, evaluate, saliency and compare") {
  const fs::path dir = scratch_dir("pipeline");
  const std::string data = tiny_corpus().string();
  auto train_into = [&](const std::string& sub) {
    return invoke({"--seed", "5", "train", "--data", data, "--out-dir", (dir / sub).string(), "--epochs", "2"});
  };
  REQUIRE(train_into("t1").code == 0);
  REQUIRE(train_into("t2").code == 0);
  for (int k = 0; k < 5; ++k) {
    const std::string name = "basic_fold" + std::to_string(k) + ".ckpt";
    CHECK(fs::exists(dir / "t1" / name));
    CHECK(read_file(dir / "t1" / name) == read_file(dir / "t2" / name));
  }
  CHECK(read_file(dir / "t1" / "report.json") == read_file(dir / "t2" / "report.json"));
  MetricReport report = report_from_json(Json::parse(read_file(dir / "t1" / "report.json")));
  CHECK(report.accuracy.mean >= 0.0);
  CHECK(report.accuracy.mean <= 1.0);
  CHECK(report.fold_mse.size() == 5);

  std::vector<std::string> eval_args{"--seed", "5", "evaluate", "--data", data, "--name", "basic", "--out-dir",
                                     (dir / "e").string()};
  for (int k = 0; k < 2; ++k) {
    eval_args.push_back("--checkpoint");
    eval_args.push_back((dir / "t1" / ("basic_fold" + std::to_string(k) + ".ckpt")).string());
  }
  REQUIRE(invoke(eval_args).code == 0);
  auto preds = csv_rows(dir / "e" / "predictions_0.csv");
  CHECK(preds.size() == 61);
  CHECK(preds[0].size() == 15);
  // Per-class R2 recomputed from the predictions file (fold 0 and fold 1 averaged).
  MetricReport er = report_from_json(Json::parse(read_file(dir / "e" / "report.json")));
  const int benzene = class_index(VocClass::benzene);
  double mean_r2 = 0.0;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> truth, pred;
    for (const auto& row : csv_rows(dir / "e" / ("predictions_" + std::to_string(k) + ".csv"))) {
      if (row[1] != "benzene") continue;
      truth.push_back(std::stod(row[2]));
      pred.push_back(std::stod(row[4]));
    }
    mean_r2 += r2_score(truth, pred) / 2.0;
  }
  REQUIRE(er.class_r2[benzene].has_value());
  CHECK(er.class_r2[benzene]->mean == doctest::Approx(mean_r2).epsilon(1e-12));

  const std::string ckpt = (dir / "t1" / "basic_fold0.ckpt").string();
  for (const char* name : {"s1.csv", "s2.csv"}) {
    REQUIRE(invoke({"--seed", "5", "saliency", "--checkpoint", ckpt, "--data", data, "--row", "12", "--out",
                    (dir / name).string()})
                .code == 0);
  }
  CHECK(read_file(dir / "s1.csv") == read_file(dir / "s2.csv"));
  auto sal = csv_rows(dir / "s1.csv");
  REQUIRE(sal.size() == 623);
  double peak = 0.0;
  for (std::size_t i = 1; i < sal.size(); ++i) peak = std::max(peak, std::stod(sal[i][1]));
  CHECK(peak == 1.0);
  CHECK(invoke({"--seed", "5", "saliency", "--checkpoint", ckpt, "--data", data, "--row", "999", "--out",
                (dir / "s3.csv").string()})
            .code == cli::kExitUsage);

  const std::string rep = (dir / "t1" / "report.json").string();
  REQUIRE(invoke({"--seed", "5", "compare", "--report", rep, rep, "--out-dir", (dir / "c1").string()}).code == 0);
  Json c1 = Json::parse(read_file(dir / "c1" / "comparison.json"));
  CHECK(c1["posthoc"]["significant"][0][1] == false);
  CHECK(c1["omnibus"]["statistic"] == "H");

  REQUIRE(invoke({"--seed", "5", "compare", "--report", rep, rep, (dir / "e" / "report.json").string(),
                  "--adjust", "holm", "--out-dir", (dir / "c2").string()})
              .code == 0);
  Json c2 = Json::parse(read_file(dir / "c2" / "comparison.json"));
  REQUIRE(c2["posthoc"]["p"].size() == 3);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(c2["posthoc"]["p"][i].size() == 3);
    for (int j = 0; j < 3; ++j) CHECK(c2["posthoc"]["p"][i][j] == c2["posthoc"]["p"][j][i]);
  }
  CHECK(csv_rows(dir / "c2" / "significance.csv").size() == 10);
}

TEST_CASE("cvae training, generation and augmentation sweeps") {
  const fs::path dir = scratch_dir("cvae");
  const std::string data = tiny_corpus().string();
  REQUIRE(invoke({"--seed", "9", "train", "--model", "cvae", "--data", data, "--out-dir", (dir / "cv").string(),
                  "--epochs", "1"})
              .code == 0);
  for (int k = 0; k < 5; ++k) CHECK(fs::exists(dir / "cv" / ("cvae_fold" + std::to_string(k) + ".ckpt")));

  const std::string ckpt = (dir / "cv" / "cvae_fold0.ckpt").string();
  for (const char* name : {"g1.csv", "g2.csv"}) {
    REQUIRE(invoke({"--seed", "9", "generate", "--checkpoint", ckpt, "--class", "toluene", "--concentration",
                    "12", "--count", "4", "--out", (dir / name).string()})
                .code == 0);
  }
  CHECK(read_file(dir / "g1.csv") == read_file(dir / "g2.csv"));
  auto generated = read_spectra_csv(dir / "g1.csv");
  REQUIRE(generated.size() == 4);
  for (const auto& s : generated) {
    CHECK(s.absorbance.minCoeff() > 0.0);
    CHECK(s.provenance == Provenance::cvae_generated);
  }
  CHECK(invoke({"--seed", "9", "generate", "--checkpoint", ckpt, "--class", "kryptonite", "--concentration", "1",
                "--out", (dir / "g3.csv").string()})
            .code == cli::kExitUsage);

  auto missing = invoke({"--seed", "9", "augment-sweep", "--mode", "synthetic", "--data", data, "--out-dir",
                         (dir / "sw0").string()});
  CHECK(missing.code == cli::kExitUsage);
  CHECK(missing.err.find("train --model cvae") != std::string::npos);

  for (const char* sub : {"sw1", "sw2"}) {
    REQUIRE(invoke({"--seed", "9", "augment-sweep", "--mode", "synthetic", "--cvae-dir", (dir / "cv").string(),
                    "--grid", "10", "20", "--data", data, "--out-dir", (dir / sub).string(), "--epochs", "1"})
                .code == 0);
  }
  for (const char* f : {"sweep.csv", "sweep.json", "report.json", "synthetic_fold3.ckpt"}) {
    CHECK(read_file(dir / "sw1" / f) == read_file(dir / "sw2" / f));
  }
  CHECK(csv_rows(dir / "sw1" / "sweep.csv").size() == 11);
  Json sweep = Json::parse(read_file(dir / "sw1" / "sweep.json"));
  CHECK(sweep["selected_checkpoints"].size() == 5);

  REQUIRE(invoke({"--seed", "9", "augment-sweep", "--mode", "oversample", "--grid", "50", "--data", data,
                  "--out-dir", (dir / "ov").string(), "--epochs", "1"})
              .code == 0);
  CHECK(Json::parse(read_file(dir / "ov" / "sweep.json"))["selected_count"] == 50);
  CHECK(invoke({"--seed", "9", "augment-sweep", "--mode", "oversample", "--grid", "7", "--data", data,
                "--out-dir", (dir / "ov2").string()})
            .code == cli::kExitUsage);
}
