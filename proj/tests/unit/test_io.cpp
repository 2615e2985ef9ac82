#include "doctest.h"

#include <cstring>

#include "vocnet/errors.hpp"
#include "vocnet/io.hpp"

using namespace vocnet;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("vocnet_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<Spectrum> sample_spectra() {
  PeakTemplate tpl = PeakTemplate::standard();
  Rng rng(6);
  std::vector<Spectrum> out;
  for (VocClass c : all_classes()) {
    Spectrum s = synth_spectrum(tpl, c, c == VocClass::air ? 0.0 : 1.0 / 3.0 + class_index(c), rng);
    s.provenance = Provenance::synthetic_corpus;
    out.push_back(s);
  }
  return out;
}

std::string replace_first(std::string text, const std::string& from, const std::string& to) {
  const auto at = text.find(from);
  REQUIRE(at != std::string::npos);
  return text.replace(at, from.size(), to);
}

}  // namespace

TEST_CASE("format_double round-trips") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 20 - 10);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("spectra CSV round-trip is exact") {
  auto spectra = sample_spectra();
  const std::string text = spectra_to_csv(spectra);
  CHECK(text.rfind("# format_version=1,provenance=synthetic_corpus\n", 0) == 0);
  auto back = parse_spectra_csv(text, "mem.csv");
  REQUIRE(back.size() == spectra.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].label == spectra[i].label);
    CHECK(back[i].concentration == spectra[i].concentration);
    CHECK(back[i].provenance == Provenance::synthetic_corpus);
    CHECK(back[i].absorbance == spectra[i].absorbance);
  }
  // header + 622 absorbances + class + concentration
  const auto second_line = text.substr(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n') - 1);
  CHECK(std::count(second_line.begin(), second_line.end(), ',') + 1 == 624);
}

TEST_CASE("mixed provenance goes per row") {
  auto spectra = sample_spectra();
  spectra[2].provenance = Provenance::cvae_generated;
  const std::string text = spectra_to_csv(spectra);
  CHECK(text.rfind("# format_version=1\n", 0) == 0);
  std::string with_column = "# format_version=1\nclass,concentration_ppm,provenance";
  for (int i = 0; i < 622; ++i) with_column += ",a" + std::to_string(i);
  with_column += "\nbenzene,2,cvae_generated";
  for (int i = 0; i < 622; ++i) with_column += ",0.01";
  auto parsed = parse_spectra_csv(with_column + "\n", "mem.csv");
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0].provenance == Provenance::cvae_generated);
}

TEST_CASE("spectra CSV errors carry line and column") {
  const std::string good = spectra_to_csv(sample_spectra());
  // Third line is the first data row; corrupt its concentration field.
  const auto row_start = good.find('\n', good.find('\n') + 1) + 1;
  const auto comma = good.find(',', row_start);
  std::string bad = good;
  bad.insert(comma + 1, "x");
  try {
    parse_spectra_csv(bad, "bad.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.file() == "bad.csv");
    CHECK(e.line() == 3);
    CHECK(e.column() == comma - row_start + 2);
  }

  std::string unknown = replace_first(good, "\nacetone,", "\nxenon,");
  try {
    parse_spectra_csv(unknown, "u.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == 1);
  }

  std::string short_row = good.substr(0, good.rfind(',')) + "\n";
  CHECK_THROWS_AS(parse_spectra_csv(short_row, "s.csv"), DataError);
  CHECK_THROWS_AS(parse_spectra_csv("", "e.csv"), DataError);
}

TEST_CASE("raw ingest applies conversion factor and regrids") {
  // Native grid 690..1310 every 2.5 cm^-1, written in descending order.
  std::string text = "class,pid_ppm,v1_l,v2_l";
  std::vector<double> nu;
  for (double w = 1310.0; w >= 690.0; w -= 2.5) nu.push_back(w);
  for (double w : nu) text += "," + format_double(w);
  text += "\n";
  auto row = [&](const std::string& cls, double pid) {
    text += cls + "," + format_double(pid) + ",0.6,2";
    for (double w : nu) text += "," + format_double(0.001 * (w - 650.0));
    text += "\n";
  };
  row("acetone", 10);
  row("air", 0);
  auto spectra = parse_raw_csv(text, "raw.csv");
  REQUIRE(spectra.size() == 2);
  CHECK(spectra[0].label == VocClass::acetone);
  CHECK(spectra[0].concentration == doctest::Approx(6.3462).epsilon(1e-4));
  CHECK(spectra[1].concentration == 0.0);
  const auto& grid = channel_grid();
  for (Index i = 0; i < 622; ++i) CHECK(spectra[0].absorbance[i] == doctest::Approx(0.001 * (grid[i] - 650.0)));

  std::string narrow = "class,pid_ppm,v1_l,v2_l,710,1300\nbenzene,1,0.6,2,0.1,0.2\n";
  CHECK_THROWS_AS(parse_raw_csv(narrow, "n.csv"), DataError);
  std::string bad_air = "class,pid_ppm,v1_l,v2_l,700,1300\nair,3,0.6,2,0.1,0.2\n";
  CHECK_THROWS_AS(parse_raw_csv(bad_air, "a.csv"), DataError);
}

TEST_CASE("recipe and template JSON round-trip") {
  CorpusRecipe r = CorpusRecipe::starved(9);
  CorpusRecipe back = recipe_from_json(recipe_to_json(r));
  CHECK(back.seed == r.seed);
  CHECK(back.folds == r.folds);
  for (int i = 0; i < kNumClasses; ++i) {
    CHECK(back.classes[i].count == r.classes[i].count);
    CHECK(back.classes[i].min_ppm == r.classes[i].min_ppm);
    CHECK(back.classes[i].max_ppm == r.classes[i].max_ppm);
  }
  PeakTemplate tpl = PeakTemplate::standard();
  PeakTemplate t2 = template_from_json(Json::parse(template_to_json(tpl).dump()));
  for (VocClass c : all_classes()) CHECK(t2.unit_profile(c) == tpl.unit_profile(c));
  CHECK(t2.noise_sigma == tpl.noise_sigma);
}

TEST_CASE("discriminator checkpoint round-trip is bitwise") {
  const fs::path dir = scratch_dir("ckpt_disc");
  DiscriminatorModel model;
  Rng rng(10);
  model.initialize(rng);
  save_checkpoint(dir / "m.ckpt", model);
  CHECK(checkpoint_kind(dir / "m.ckpt") == "discriminator");
  DiscriminatorModel loaded = load_discriminator(dir / "m.ckpt");
  CHECK(architecture_hash(loaded) == architecture_hash(model));
  for (const Spectrum& s : sample_spectra()) {
    auto a = forward(model, s.absorbance);
    auto b = forward(loaded, s.absorbance);
    CHECK(std::memcmp(a.class_probs.data(), b.class_probs.data(), 10 * sizeof(double)) == 0);
    CHECK(std::memcmp(a.conc_vector.data(), b.conc_vector.data(), 9 * sizeof(double)) == 0);
  }
  save_checkpoint(dir / "again.ckpt", loaded);
  CHECK(read_file(dir / "again.ckpt") == read_file(dir / "m.ckpt"));
  CHECK_THROWS_AS(load_cvae(dir / "m.ckpt"), DataError);
}

TEST_CASE("cvae checkpoint keeps weights and training tag") {
  const fs::path dir = scratch_dir("ckpt_cvae");
  CvaeModel model;
  Rng rng(11);
  model.initialize(rng);
  model.training_tag = {3, 0xfeedbeefcafef00dULL};
  save_checkpoint(dir / "c.ckpt", model);
  CvaeModel loaded = load_cvae(dir / "c.ckpt");
  CHECK(loaded.training_tag.held_out_fold == 3);
  CHECK(loaded.training_tag.corpus_fingerprint == 0xfeedbeefcafef00dULL);
  Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(16, -1, 1);
  auto cond = regression_target(VocClass::ethanol, 40.0);
  const Eigen::VectorXd a = decode(model, z, cond);
  const Eigen::VectorXd b = decode(loaded, z, cond);
  CHECK(std::memcmp(a.data(), b.data(), 622 * sizeof(double)) == 0);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const fs::path dir = scratch_dir("ckpt_bad");
  DiscriminatorModel model;
  Rng rng(12);
  model.initialize(rng);
  save_checkpoint(dir / "m.ckpt", model);
  const std::string bytes = read_file(dir / "m.ckpt");

  write_file_atomic(dir / "magic.ckpt", "XXXXXXXX" + bytes.substr(8));
  CHECK_THROWS_AS(load_discriminator(dir / "magic.ckpt"), DataError);
  write_file_atomic(dir / "short.ckpt", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_discriminator(dir / "short.ckpt"), DataError);
  write_file_atomic(dir / "long.ckpt", bytes + std::string(8, '\0'));
  CHECK_THROWS_AS(load_discriminator(dir / "long.ckpt"), DataError);

  const std::string hash = architecture_hash(model);
  std::string tampered = bytes;
  const auto at = tampered.find(hash);
  REQUIRE(at != std::string::npos);
  tampered[at] = tampered[at] == '0' ? '1' : '0';
  write_file_atomic(dir / "hash.ckpt", tampered);
  CHECK_THROWS_AS(load_discriminator(dir / "hash.ckpt"), DataError);

  std::string order = bytes;
  const auto ac = order.find("\"acetone\"");
  REQUIRE(ac != std::string::npos);
  order.replace(ac, 9, "\"acetonf\"");
  write_file_atomic(dir / "order.ckpt", order);
  CHECK_THROWS_AS(load_discriminator(dir / "order.ckpt"), DataError);
  CHECK_THROWS_AS(load_discriminator(dir / "missing.ckpt"), DataError);
}

TEST_CASE("report JSON round-trip and CSV exports") {
  std::vector<FoldMetrics> folds(2);
  folds[0] = {0.9, 3.0, {}, {}};
  folds[1] = {1.0, 5.0, {}, {}};
  folds[0].class_r2[4] = 0.8;
  folds[1].class_r2[4] = 0.9;
  MetricReport r = make_report("basic", folds);
  MetricReport back = report_from_json(Json::parse(report_to_json(r).dump()));
  CHECK(back.model_name == "basic");
  CHECK(back.fold_mse == r.fold_mse);
  CHECK(back.mse.standard_error == r.mse.standard_error);
  CHECK(back.class_r2[4]->mean == r.class_r2[4]->mean);
  CHECK_FALSE(back.class_r2[3].has_value());
  const std::string csv = report_to_csv(r);
  CHECK(csv.rfind("model,metric,class,mean,standard_error\n", 0) == 0);
  CHECK(csv.find("basic,class_r2,isopropanol,") != std::string::npos);

  auto spectra = sample_spectra();
  std::vector<Prediction> preds(spectra.size());
  for (auto& p : preds) p = make_prediction(Eigen::VectorXd::Constant(10, 0.1), Eigen::VectorXd::Zero(9));
  const std::string pc = predictions_to_csv(spectra, preds);
  CHECK(std::count(pc.begin(), pc.end(), '\n') == 11);

  SaliencyMap map{Eigen::VectorXd::Zero(622), true};
  const std::string sc = saliency_to_csv(map);
  CHECK(std::count(sc.begin(), sc.end(), '\n') == 623);
}
