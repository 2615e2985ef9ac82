#include "vocnet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "vocnet/errors.hpp"

namespace vocnet {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "acetone", "air", "benzene", "ethanol", "isopropanol",
    "m_xylene", "o_xylene", "p_xylene", "styrene", "toluene"};

}  // namespace

const std::array<VocClass, kNumClasses>& all_classes() {
  static const std::array<VocClass, kNumClasses> classes = [] {
    std::array<VocClass, kNumClasses> a{};
    for (int i = 0; i < kNumClasses; ++i) a[i] = static_cast<VocClass>(i);
    return a;
  }();
  return classes;
}

std::string_view class_name(VocClass c) { return kClassNames.at(class_index(c)); }

std::optional<VocClass> parse_class(std::string_view name) {
  std::string key;
  for (char ch : name) {
    if (ch == '-' || ch == ' ') ch = '_';
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == key) return static_cast<VocClass>(i);
  }
  return std::nullopt;
}

VocClass class_from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw DomainError("class index " + std::to_string(index) + " out of range");
  }
  return static_cast<VocClass>(index);
}

std::optional<int> voc_slot(VocClass c) {
  const int i = class_index(c);
  if (c == VocClass::air) return std::nullopt;
  return i < class_index(VocClass::air) ? i : i - 1;
}

VocClass class_from_slot(int slot) {
  if (slot < 0 || slot >= kNumVocs) {
    throw DomainError("VOC slot " + std::to_string(slot) + " out of range");
  }
  return static_cast<VocClass>(slot < class_index(VocClass::air) ? slot : slot + 1);
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::experimental: return "experimental";
    case Provenance::synthetic_corpus: return "synthetic_corpus";
    case Provenance::cvae_generated: return "cvae_generated";
  }
  return "experimental";
}

std::optional<Provenance> parse_provenance(std::string_view name) {
  for (Provenance p : {Provenance::experimental, Provenance::synthetic_corpus,
                       Provenance::cvae_generated}) {
    if (provenance_name(p) == name) return p;
  }
  return std::nullopt;
}

void validate(const Spectrum& s) {
  if (s.absorbance.size() != kChannels) {
    throw DataError("spectrum has " + std::to_string(s.absorbance.size()) +
                    " channels, expected " + std::to_string(kChannels));
  }
  if (!s.absorbance.allFinite() || (s.absorbance.array() < 0.0).any()) {
    throw DataError("spectrum absorbance must be finite and non-negative");
  }
  if (!std::isfinite(s.concentration) || s.concentration < 0.0) {
    throw DataError("concentration must be finite and non-negative");
  }
  if (s.label == VocClass::air && s.concentration != 0.0) {
    throw DataError("air spectra must have zero concentration");
  }
}

CellConcentration cell_concentration(double pid_reading, double cf, double v1, double v2) {
  if (!(v1 > 0.0) || !(v2 > 0.0)) {
    throw DomainError("cell_concentration: volumes must be positive");
  }
  if (!(pid_reading > 0.0) || !(cf > 0.0)) {
    throw DomainError("cell_concentration: reading and conversion factor must be positive");
  }
  const double dilution = v1 / (v1 + v2);
  return {pid_reading * cf * dilution, cf * dilution};
}

double conversion_factor(VocClass c) {
  switch (c) {
    case VocClass::acetone: return 2.75;
    case VocClass::benzene: return 1.325;
    case VocClass::ethanol: return 30.0;
    case VocClass::isopropanol: return 15.0;
    case VocClass::m_xylene: return 1.1;
    case VocClass::o_xylene: return 1.15;
    case VocClass::p_xylene: return 0.975;
    case VocClass::styrene: return 1.0;
    case VocClass::toluene: return 1.25;
    case VocClass::air: break;
  }
  throw DomainError("air has no PID conversion factor");
}

const Eigen::VectorXd& channel_grid() {
  static const Eigen::VectorXd grid =
      Eigen::VectorXd::LinSpaced(kChannels, kGridStart, kGridStop);
  return grid;
}

Eigen::VectorXd one_hot(VocClass c) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kNumClasses);
  v[class_index(c)] = 1.0;
  return v;
}

Eigen::VectorXd regression_target(VocClass c, double concentration) {
  if (concentration < 0.0) throw DomainError("regression_target: negative concentration");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kNumVocs);
  if (auto slot = voc_slot(c)) v[*slot] = concentration;
  return v;
}

double lorentzian(double nu, double center, double width) {
  const double u = (nu - center) / width;
  return 1.0 / (1.0 + u * u);
}

PeakTemplate PeakTemplate::standard() {
  PeakTemplate t;
  auto set = [&t](VocClass c, std::vector<Peak> peaks) { t.peaks[class_index(c)] = std::move(peaks); };
  set(VocClass::acetone, {{1217, 9, 0.020}, {1091, 7, 0.008}, {901, 6, 0.006}});
  set(VocClass::benzene, {{1038, 5, 0.022}, {1178, 4, 0.008}});
  set(VocClass::ethanol, {{1066, 8, 0.012}, {1241, 7, 0.006}, {885, 6, 0.005}});
  set(VocClass::isopropanol,
      {{953, 6, 0.010}, {1153, 7, 0.009}, {1073, 8, 0.006}, {817, 6, 0.005}, {1255, 7, 0.004}});
  set(VocClass::m_xylene, {{769, 5, 0.030}, {876, 5, 0.012}, {1022, 6, 0.007}});
  set(VocClass::o_xylene, {{741, 5, 0.032}, {1120, 5, 0.008}, {1052, 6, 0.008}});
  set(VocClass::p_xylene, {{795, 5, 0.034}, {1120, 5, 0.008}, {1022, 6, 0.006}});
  set(VocClass::styrene, {{908, 5, 0.030}, {990, 5, 0.020}, {776, 6, 0.015}});
  set(VocClass::toluene, {{729, 5, 0.026}, {1040, 6, 0.010}, {895, 5, 0.006}});
  t.baseline_amplitude = 0.02;
  t.noise_sigma = 0.002;
  return t;
}

void PeakTemplate::validate() const {
  if (baseline_amplitude < 0.0 || noise_sigma < 0.0) {
    throw DataError("template baseline amplitude and noise sigma must be non-negative");
  }
  for (VocClass c : all_classes()) {
    const auto& list = of(c);
    if (c != VocClass::air && list.size() < 2) {
      throw DataError(std::string(class_name(c)) + " needs at least two bands");
    }
    for (const Peak& p : list) {
      if (p.center < kGridStart || p.center > kGridStop || !(p.width > 0.0) ||
          !(p.strength > 0.0)) {
        throw DataError(std::string(class_name(c)) + " has an invalid band");
      }
    }
  }
}

Eigen::VectorXd PeakTemplate::unit_profile(VocClass c) const {
  const Eigen::VectorXd& grid = channel_grid();
  Eigen::VectorXd profile = Eigen::VectorXd::Zero(kChannels);
  for (const Peak& p : of(c)) {
    for (Eigen::Index i = 0; i < kChannels; ++i) {
      profile[i] += p.strength * lorentzian(grid[i], p.center, p.width);
    }
  }
  return profile;
}

Eigen::VectorXd PeakTemplate::baseline() const {
  // Gentle ramp from 0.5 A at 700 cm^-1 to 1.5 A at 1300 cm^-1.
  const Eigen::VectorXd& grid = channel_grid();
  return baseline_amplitude *
         (0.5 + (grid.array() - kGridStart) / (kGridStop - kGridStart)).matrix();
}

std::vector<bool> PeakTemplate::peak_support(VocClass c) const {
  const Eigen::VectorXd& grid = channel_grid();
  std::vector<bool> support(static_cast<std::size_t>(kChannels), false);
  for (const Peak& p : of(c)) {
    for (Eigen::Index i = 0; i < kChannels; ++i) {
      if (std::abs(grid[i] - p.center) <= 2.0 * p.width) support[i] = true;
    }
  }
  return support;
}

Eigen::Index PeakTemplate::strongest_peak_channel(VocClass c) const {
  const auto& list = of(c);
  if (list.empty()) throw DomainError("class has no bands");
  const Peak& top = *std::max_element(list.begin(), list.end(), [](const Peak& a, const Peak& b) {
    return a.strength < b.strength;
  });
  Eigen::Index best = 0;
  (channel_grid().array() - top.center).abs().minCoeff(&best);
  return best;
}

Spectrum synth_spectrum(const PeakTemplate& tpl, VocClass c, double concentration, Rng& rng) {
  if (!(concentration >= 0.0)) throw DomainError("synth_spectrum: negative concentration");
  if (c == VocClass::air && concentration != 0.0) {
    throw DomainError("synth_spectrum: air spectra have zero concentration");
  }
  Spectrum s;
  s.label = c;
  s.concentration = concentration;
  s.provenance = Provenance::synthetic_corpus;
  s.absorbance = concentration * tpl.unit_profile(c) + tpl.baseline();
  if (tpl.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, tpl.noise_sigma);
    for (Eigen::Index i = 0; i < kChannels; ++i) s.absorbance[i] += noise(rng);
  }
  s.absorbance = s.absorbance.cwiseMax(0.0);
  return s;
}

std::array<ClassRecipe, kNumClasses> CorpusRecipe::default_ranges() {
  std::array<ClassRecipe, kNumClasses> r{};
  auto set = [&r](VocClass c, double lo, double hi) { r[class_index(c)] = {0, lo, hi}; };
  set(VocClass::acetone, 3, 40);
  set(VocClass::air, 0, 0);
  set(VocClass::benzene, 2, 30);
  set(VocClass::ethanol, 5, 60);
  set(VocClass::isopropanol, 3, 45);
  set(VocClass::m_xylene, 2, 25);
  set(VocClass::o_xylene, 2, 25);
  set(VocClass::p_xylene, 2, 25);
  set(VocClass::styrene, 1, 20);
  set(VocClass::toluene, 2, 35);
  return r;
}

CorpusRecipe CorpusRecipe::balanced(int per_class, std::uint64_t seed) {
  CorpusRecipe recipe;
  recipe.classes = default_ranges();
  for (auto& c : recipe.classes) c.count = per_class;
  recipe.seed = seed;
  return recipe;
}

CorpusRecipe CorpusRecipe::starved(std::uint64_t seed) {
  CorpusRecipe recipe = balanced(150, seed);
  recipe.classes[class_index(VocClass::o_xylene)].count = 3;
  recipe.classes[class_index(VocClass::p_xylene)].count = 3;
  return recipe;
}

int CorpusRecipe::total() const {
  int n = 0;
  for (const auto& c : classes) n += c.count;
  return n;
}

int CorpusRecipe::max_count() const {
  int m = 0;
  for (const auto& c : classes) m = std::max(m, c.count);
  return m;
}

std::vector<std::size_t> Corpus::indices_of(VocClass c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    if (spectra[i].label == c) out.push_back(i);
  }
  return out;
}

Corpus build_corpus(const CorpusRecipe& recipe, const PeakTemplate& tpl) {
  tpl.validate();
  if (recipe.total() <= 0) throw ContractViolation("build_corpus: recipe has no spectra");
  if (recipe.folds < 2) throw ContractViolation("build_corpus: need at least two folds");
  Corpus corpus;
  corpus.spectra.reserve(static_cast<std::size_t>(recipe.total()));
  std::uint64_t index = 0;
  for (VocClass c : all_classes()) {
    const ClassRecipe& cr = recipe.classes[class_index(c)];
    if (cr.count < 0) throw ContractViolation("build_corpus: negative class count");
    if (cr.count > 0 && c != VocClass::air && !(cr.max_ppm >= cr.min_ppm && cr.min_ppm >= 0.0)) {
      throw ContractViolation("build_corpus: invalid concentration range for " +
                              std::string(class_name(c)));
    }
    for (int k = 0; k < cr.count; ++k, ++index) {
      Rng rng = make_rng(recipe.seed, {index});
      double conc = 0.0;
      if (c != VocClass::air) {
        std::uniform_real_distribution<double> draw(cr.min_ppm, cr.max_ppm);
        conc = draw(rng);
      }
      corpus.spectra.push_back(synth_spectrum(tpl, c, conc, rng));
    }
  }
  assign_stratified_folds(corpus, recipe.folds, recipe.seed);
  return corpus;
}

void assign_stratified_folds(Corpus& corpus, int folds, std::uint64_t seed) {
  if (folds < 2) throw ContractViolation("assign_stratified_folds: need at least two folds");
  corpus.folds = folds;
  corpus.fold_of.assign(corpus.spectra.size(), 0);
  Rng rng = make_rng(seed, {0xf01d5ULL});
  int offset = 0;
  for (VocClass c : all_classes()) {
    auto members = corpus.indices_of(c);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      corpus.fold_of[members[k]] = static_cast<int>((k + offset) % folds);
    }
    // Rotate the starting fold so small classes do not all land in fold 0.
    offset = static_cast<int>((offset + members.size()) % folds);
  }
}

FoldSplit kfold_split(const Corpus& corpus, int fold) {
  if (fold < 0 || fold >= corpus.folds) {
    throw DomainError("fold " + std::to_string(fold) + " out of range [0, " +
                      std::to_string(corpus.folds) + ")");
  }
  FoldSplit split;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus.fold_of[i] == fold) {
      split.validation.push_back(corpus.spectra[i]);
      split.validation_index.push_back(i);
    } else {
      split.train.push_back(corpus.spectra[i]);
      split.train_index.push_back(i);
    }
  }
  return split;
}

}  // namespace vocnet
