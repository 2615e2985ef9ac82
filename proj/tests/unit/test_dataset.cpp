#include "doctest.h"

#include <algorithm>
#include <set>

#include "vocnet/dataset.hpp"
#include "vocnet/errors.hpp"

using namespace vocnet;

TEST_CASE("cell concentration") {
  auto a = cell_concentration(100, 1.0, 0.6, 2.0);
  // Oracle: PPM * CF * V1 / (V1 + V2) and CF * V1 / (V1 + V2).
  CHECK(a.concentration == doctest::Approx(100.0 * 0.6 / 2.6).epsilon(1e-12));
  CHECK(a.concentration == doctest::Approx(23.0769).epsilon(1e-5));
  CHECK(a.error == doctest::Approx(0.23077).epsilon(1e-4));
  CHECK(cell_concentration(10, 2.75, 0.6, 2.0).concentration == doctest::Approx(6.3462).epsilon(1e-4));
  CHECK(cell_concentration(1e-12, 30.0, 0.6, 2.0).concentration < 1e-9);
  CHECK_THROWS_AS(cell_concentration(10, 1.0, 0.0, 2.0), DomainError);
  CHECK_THROWS_AS(cell_concentration(10, 1.0, 0.6, -1.0), DomainError);
}

TEST_CASE("conversion factors") {
  CHECK(conversion_factor(VocClass::acetone) == 2.75);
  CHECK(conversion_factor(VocClass::benzene) == 1.325);
  CHECK(conversion_factor(VocClass::ethanol) == 30.0);
  CHECK(conversion_factor(VocClass::isopropanol) == 15.0);
  CHECK(conversion_factor(VocClass::m_xylene) == 1.1);
  CHECK(conversion_factor(VocClass::o_xylene) == 1.15);
  CHECK(conversion_factor(VocClass::p_xylene) == 0.975);
  CHECK(conversion_factor(VocClass::styrene) == 1.0);
  CHECK(conversion_factor(VocClass::toluene) == 1.25);
  CHECK_THROWS_AS(conversion_factor(VocClass::air), DomainError);
}

TEST_CASE("channel grid") {
  const auto& g = channel_grid();
  REQUIRE(g.size() == 622);
  CHECK(g[0] == 700.0);
  CHECK(g[621] == 1300.0);
  CHECK(g[1] - g[0] == doctest::Approx(600.0 / 621.0));
  CHECK(g[1] - g[0] == doctest::Approx(0.9662).epsilon(1e-4));
}

TEST_CASE("class names and slots") {
  CHECK(class_name(VocClass::m_xylene) == "m_xylene");
  CHECK(parse_class("m-Xylene") == VocClass::m_xylene);
  CHECK(parse_class("Air") == VocClass::air);
  CHECK_FALSE(parse_class("xenon").has_value());
  CHECK_FALSE(voc_slot(VocClass::air).has_value());
  std::set<int> slots;
  for (VocClass c : all_classes()) {
    if (auto s = voc_slot(c)) {
      slots.insert(*s);
      CHECK(class_from_slot(*s) == c);
    }
  }
  CHECK(slots.size() == 9);
}

TEST_CASE("targets") {
  auto oh = one_hot(VocClass::air);
  CHECK(oh[1] == 1.0);
  CHECK(oh.sum() == 1.0);
  CHECK(regression_target(VocClass::air, 0.0).isZero());
  auto t = regression_target(VocClass::styrene, 12.5);
  CHECK(t[*voc_slot(VocClass::styrene)] == 12.5);
  CHECK(t.sum() == 12.5);
}

TEST_CASE("synthetic spectra") {
  PeakTemplate tpl = PeakTemplate::standard();
  tpl.validate();
  PeakTemplate quiet = tpl;
  quiet.noise_sigma = 0.0;
  quiet.baseline_amplitude = 0.0;
  Rng rng(3);
  CHECK(synth_spectrum(quiet, VocClass::benzene, 0.0, rng).absorbance.isZero());
  CHECK_THROWS_AS(synth_spectrum(tpl, VocClass::benzene, -1.0, rng), DomainError);

  // Noise-free response is linear in concentration and peaks at the strongest band.
  auto s = synth_spectrum(quiet, VocClass::toluene, 10.0, rng);
  CHECK(s.absorbance.isApprox(10.0 * quiet.unit_profile(VocClass::toluene)));
  Eigen::Index arg;
  quiet.unit_profile(VocClass::toluene).maxCoeff(&arg);
  CHECK(std::abs(arg - quiet.strongest_peak_channel(VocClass::toluene)) <= 2);

  for (VocClass c : all_classes()) {
    auto x = synth_spectrum(tpl, c, c == VocClass::air ? 0.0 : 5.0, rng);
    CHECK(x.absorbance.size() == 622);
    CHECK(x.absorbance.minCoeff() >= 0.0);
    CHECK_NOTHROW(validate(x));
  }
}

TEST_CASE("lorentzian has unit peak and half maximum at the half width") {
  CHECK(lorentzian(1000.0, 1000.0, 4.0) == doctest::Approx(1.0));
  CHECK(lorentzian(1004.0, 1000.0, 4.0) == doctest::Approx(0.5));
}

TEST_CASE("balanced corpus counts and folds") {
  Corpus corpus = build_corpus(CorpusRecipe::balanced(100, 42), PeakTemplate::standard());
  REQUIRE(corpus.size() == 1000);
  for (VocClass c : all_classes()) {
    auto idx = corpus.indices_of(c);
    CHECK(idx.size() == 100);
    std::array<int, 5> per_fold{};
    for (auto i : idx) ++per_fold[static_cast<std::size_t>(corpus.fold_of[i])];
    for (int n : per_fold) CHECK(n == 20);
  }

  Corpus again = build_corpus(CorpusRecipe::balanced(100, 42), PeakTemplate::standard());
  CHECK(again.fold_of == corpus.fold_of);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    REQUIRE(again.spectra[i].absorbance == corpus.spectra[i].absorbance);
    REQUIRE(again.spectra[i].concentration == corpus.spectra[i].concentration);
  }
}

TEST_CASE("k-fold rotation") {
  Corpus corpus = build_corpus(CorpusRecipe::balanced(13, 1), PeakTemplate::standard());
  std::vector<int> seen(corpus.size(), 0);
  for (int f = 0; f < 5; ++f) {
    FoldSplit split = kfold_split(corpus, f);
    CHECK(split.train.size() + split.validation.size() == corpus.size());
    std::vector<std::size_t> all = split.train_index;
    all.insert(all.end(), split.validation_index.begin(), split.validation_index.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    for (auto i : split.validation_index) ++seen[i];
    for (VocClass c : all_classes()) {
      const auto n = std::count_if(split.validation.begin(), split.validation.end(),
                                   [&](const Spectrum& s) { return s.label == c; });
      CHECK(std::abs(static_cast<double>(n) - 13 * 0.2) <= 1.0);
    }
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
  CHECK_THROWS_AS(kfold_split(corpus, 5), DomainError);
}

TEST_CASE("starved recipe") {
  CorpusRecipe r = CorpusRecipe::starved(0);
  CHECK(r.classes[class_index(VocClass::o_xylene)].count <= 0.02 * r.max_count());
  CHECK(r.classes[class_index(VocClass::p_xylene)].count <= 0.02 * r.max_count());
  CHECK(r.classes[class_index(VocClass::o_xylene)].count > 0);
}

TEST_CASE("empty recipe is rejected") {
  CorpusRecipe r;
  CHECK_THROWS_AS(build_corpus(r, PeakTemplate::standard()), ContractViolation);
}

TEST_CASE("peak support covers the bands") {
  PeakTemplate tpl = PeakTemplate::standard();
  for (VocClass c : all_classes()) {
    if (c == VocClass::air) continue;
    auto support = tpl.peak_support(c);
    CHECK(support.size() == 622);
    CHECK(support[static_cast<std::size_t>(tpl.strongest_peak_channel(c))]);
  }
}
