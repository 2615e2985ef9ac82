#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vocnet/random.hpp"

namespace vocnet {

inline constexpr int kNumClasses = 10;
inline constexpr int kNumVocs = 9;
inline constexpr Eigen::Index kChannels = 622;
inline constexpr double kGridStart = 700.0;
inline constexpr double kGridStop = 1300.0;

// Alphabetical and frozen: checkpoints and CSV files depend on this order.
enum class VocClass : int {
  acetone = 0,
  air,
  benzene,
  ethanol,
  isopropanol,
  m_xylene,
  o_xylene,
  p_xylene,
  styrene,
  toluene,
};

const std::array<VocClass, kNumClasses>& all_classes();
std::string_view class_name(VocClass c);
// Accepts canonical names plus hyphenated/capitalized variants ("m-Xylene").
std::optional<VocClass> parse_class(std::string_view name);
inline int class_index(VocClass c) { return static_cast<int>(c); }
VocClass class_from_index(int index);

// Position of a VOC in the 9-slot concentration vector; nullopt for air.
std::optional<int> voc_slot(VocClass c);
VocClass class_from_slot(int slot);

enum class Provenance { experimental, synthetic_corpus, cvae_generated };
std::string_view provenance_name(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view name);

struct Spectrum {
  Eigen::VectorXd absorbance;
  VocClass label = VocClass::air;
  double concentration = 0.0;  // ppm
  Provenance provenance = Provenance::experimental;
};

// Throws DataError when length, sign or air/concentration invariants fail.
void validate(const Spectrum& s);

struct CellConcentration {
  double concentration;  // ppm
  double error;          // ppm
};

// Concentration after the evaporation chamber (v1) expands into the gas cell (v2).
CellConcentration cell_concentration(double pid_reading, double cf, double v1, double v2);

// PID response factor relative to styrene. Throws DomainError for air.
double conversion_factor(VocClass c);

// 622 uniformly spaced wavenumbers from 700 to 1300 cm^-1 inclusive.
const Eigen::VectorXd& channel_grid();

Eigen::VectorXd one_hot(VocClass c);
Eigen::VectorXd regression_target(VocClass c, double concentration);

// Lorentzian band with unit peak height; width is the half width at half maximum.
struct Peak {
  double center;    // cm^-1
  double width;     // cm^-1
  double strength;  // absorbance per ppm
};

struct PeakTemplate {
  std::array<std::vector<Peak>, kNumClasses> peaks;
  double baseline_amplitude = 0.0;
  double noise_sigma = 0.0;

  const std::vector<Peak>& of(VocClass c) const { return peaks[class_index(c)]; }

  // Built-in stand-in for the experimental corpus: 9 VOC classes with
  // 2-5 bands each, overlapping bands for benzene/toluene, ethanol/isopropanol,
  // m-/p-xylene and o-/p-xylene.
  static PeakTemplate standard();

  // Throws DataError if a band lies outside the grid, has non-positive
  // width/strength, or a VOC class has fewer than two bands.
  void validate() const;

  // Noise-free absorbance per ppm on the channel grid.
  Eigen::VectorXd unit_profile(VocClass c) const;
  Eigen::VectorXd baseline() const;
  // Channels within two half-widths of any band of the class.
  std::vector<bool> peak_support(VocClass c) const;
  // Grid index nearest to the center of the class's strongest band.
  Eigen::Index strongest_peak_channel(VocClass c) const;
};

double lorentzian(double nu, double center, double width);

Spectrum synth_spectrum(const PeakTemplate& tpl, VocClass c, double concentration, Rng& rng);

struct ClassRecipe {
  int count = 0;
  double min_ppm = 0.0;
  double max_ppm = 0.0;
};

struct CorpusRecipe {
  std::array<ClassRecipe, kNumClasses> classes{};
  std::uint64_t seed = 0;
  int folds = 5;

  static CorpusRecipe balanced(int per_class, std::uint64_t seed);
  // o-xylene and p-xylene get 2% of the largest class (150 spectra).
  static CorpusRecipe starved(std::uint64_t seed);
  static std::array<ClassRecipe, kNumClasses> default_ranges();

  int total() const;
  int max_count() const;
};

struct Corpus {
  std::vector<Spectrum> spectra;
  std::vector<int> fold_of;  // same length as spectra
  int folds = 0;

  std::size_t size() const { return spectra.size(); }
  std::vector<std::size_t> indices_of(VocClass c) const;
};

// Deterministic given the recipe's seed; spectrum i draws from stream (seed, i).
Corpus build_corpus(const CorpusRecipe& recipe, const PeakTemplate& tpl);

// Stratified assignment: within each class fold sizes differ by at most one.
void assign_stratified_folds(Corpus& corpus, int folds, std::uint64_t seed);

struct FoldSplit {
  std::vector<Spectrum> train;
  std::vector<Spectrum> validation;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> validation_index;
};

FoldSplit kfold_split(const Corpus& corpus, int fold);

}  // namespace vocnet
