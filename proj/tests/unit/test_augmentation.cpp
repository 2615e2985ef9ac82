#include "doctest.h"

#include <algorithm>
#include <map>

#include "vocnet/augmentation.hpp"
#include "vocnet/errors.hpp"

using namespace vocnet;

namespace {

std::map<VocClass, int> class_counts(std::span<const Spectrum> spectra) {
  std::map<VocClass, int> counts;
  for (const Spectrum& s : spectra) ++counts[s.label];
  return counts;
}

const Corpus& small_corpus() {
  static const Corpus corpus = build_corpus(CorpusRecipe::balanced(8, 31), PeakTemplate::standard());
  return corpus;
}

CvaeModel untrained_cvae(std::uint64_t seed) {
  CvaeModel m;
  Rng rng(seed);
  m.initialize(rng);
  return m;
}

}  // namespace

TEST_CASE("oversample epoch") {
  FoldSplit split = kfold_split(small_corpus(), 0);
  Rng rng(1);
  auto same = oversample_epoch(split.train, 0, rng);
  REQUIRE(same.size() == split.train.size());
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i].absorbance == split.train[i].absorbance);

  auto view = oversample_epoch(split.train, 50, rng);
  CHECK(view.size() == split.train.size() + 500);
  auto before = class_counts(split.train);
  auto after = class_counts(view);
  for (VocClass c : all_classes()) CHECK(after[c] == before[c] + 50);
  // Added spectra are exact repeats from the same class.
  for (std::size_t i = split.train.size(); i < view.size(); ++i) {
    const bool found = std::any_of(split.train.begin(), split.train.end(), [&](const Spectrum& s) {
      return s.label == view[i].label && s.concentration == view[i].concentration &&
             s.absorbance == view[i].absorbance;
    });
    REQUIRE(found);
  }
}

TEST_CASE("oversample names an empty class") {
  FoldSplit split = kfold_split(small_corpus(), 0);
  std::vector<Spectrum> train;
  for (const Spectrum& s : split.train)
    if (s.label != VocClass::p_xylene) train.push_back(s);
  Rng rng(1);
  try {
    oversample_epoch(train, 10, rng);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("p_xylene") != std::string::npos);
  }
}

TEST_CASE("synthetic epoch") {
  FoldSplit split = kfold_split(small_corpus(), 0);
  CvaeModel cvae = untrained_cvae(2);
  Rng rng(3);
  auto view = synthetic_epoch(split.train, &cvae, 200, rng);
  CHECK(view.size() == split.train.size() + 2000);
  auto before = class_counts(split.train);
  auto after = class_counts(view);
  for (VocClass c : all_classes()) CHECK(after[c] == before[c] + 200);

  for (VocClass c : all_classes()) {
    double lo = 1e300, hi = -1e300;
    for (const Spectrum& s : split.train) {
      if (s.label != c) continue;
      lo = std::min(lo, s.concentration);
      hi = std::max(hi, s.concentration);
    }
    for (std::size_t i = split.train.size(); i < view.size(); ++i) {
      if (view[i].label != c) continue;
      CHECK(view[i].provenance == Provenance::cvae_generated);
      CHECK(view[i].concentration >= lo);
      CHECK(view[i].concentration <= hi);
      if (c == VocClass::air) CHECK(view[i].concentration == 0.0);
    }
  }

  auto next = synthetic_epoch(split.train, &cvae, 10, rng);
  auto again = synthetic_epoch(split.train, &cvae, 10, rng);
  CHECK(next.back().absorbance != again.back().absorbance);
  CHECK_THROWS_AS(synthetic_epoch(split.train, nullptr, 10, rng), DomainError);
}

TEST_CASE("augmentation plan validation") {
  AugmentPlan plan;
  plan.per_class_count = 50;
  CHECK_NOTHROW(plan.validate());
  plan.per_class_count = 7;
  CHECK_THROWS_AS(plan.validate(), DomainError);
  plan.per_class_count = 200;
  plan.mode = AugmentMode::synthetic;
  CHECK_THROWS_AS(plan.validate(), DomainError);
  plan.cvae_checkpoint = "cvae_fold0.ckpt";
  CHECK_NOTHROW(plan.validate());
  CHECK(parse_augment_mode("synthetic") == AugmentMode::synthetic);
  CHECK_THROWS_AS(parse_augment_mode("smote"), DomainError);
}

TEST_CASE("corpus fingerprint tracks content and folds") {
  Corpus a = small_corpus();
  const auto base = corpus_fingerprint(a);
  CHECK(corpus_fingerprint(small_corpus()) == base);
  Corpus b = a;
  b.spectra[3].absorbance[100] += 1e-9;
  CHECK(corpus_fingerprint(b) != base);
  Corpus c = a;
  std::swap(c.fold_of[0], c.fold_of[1]);
  if (c.fold_of[0] != c.fold_of[1]) CHECK(corpus_fingerprint(c) != base);
}

TEST_CASE("synthetic training refuses a CVAE tagged for another fold") {
  CvaeModel cvae = untrained_cvae(4);
  cvae.training_tag = {1, corpus_fingerprint(small_corpus())};
  TrainConfig config;
  config.epochs = 1;
  CHECK_THROWS_AS(train_augmented_fold(small_corpus(), 0, AugmentMode::synthetic, 10, config, &cvae),
                  ContractViolation);
  cvae.training_tag = {0, corpus_fingerprint(small_corpus()) + 1};
  CHECK_THROWS_AS(train_augmented_fold(small_corpus(), 0, AugmentMode::synthetic, 10, config, &cvae),
                  ContractViolation);
  cvae.training_tag = {0, corpus_fingerprint(small_corpus())};
  CHECK_NOTHROW(train_augmented_fold(small_corpus(), 0, AugmentMode::synthetic, 10, config, &cvae));
}

TEST_CASE("sweep reports every cell and selects the argmin") {
  TrainConfig config;
  config.epochs = 2;
  config.seed = 8;
  const std::array<int, 2> grid{10, 20};
  EnhancedResult r = train_enhanced(small_corpus(), AugmentMode::oversample, config, {}, grid);
  CHECK(r.rows.size() == 10);
  REQUIRE(r.summary.size() == 2);
  CHECK(r.models.size() == 5);
  for (const SweepSummary& s : r.summary) {
    double mean = 0.0;
    for (const SweepRow& row : r.rows)
      if (row.per_class_count == s.per_class_count) mean += row.validation_mse / 5.0;
    CHECK(s.mean_mse == doctest::Approx(mean));
  }
  const auto best = std::min_element(r.summary.begin(), r.summary.end(), [](const auto& a, const auto& b) {
    return a.mean_mse < b.mean_mse;
  });
  CHECK(r.selected_count == best->per_class_count);

  EnhancedResult again = train_enhanced(small_corpus(), AugmentMode::oversample, config, {}, grid);
  for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(again.rows[i].validation_mse == r.rows[i].validation_mse);

  CHECK_THROWS_AS(train_enhanced(small_corpus(), AugmentMode::synthetic, config, {}, grid), DomainError);
}
