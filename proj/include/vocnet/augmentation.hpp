#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vocnet/cvae.hpp"
#include "vocnet/dataset.hpp"
#include "vocnet/discriminator.hpp"
#include "vocnet/training.hpp"

namespace vocnet {

enum class AugmentMode { oversample, synthetic };

std::string_view augment_mode_name(AugmentMode mode);
AugmentMode parse_augment_mode(std::string_view name);

// Augmented spectra per class tried by the sweep.
inline constexpr std::array<int, 6> kSweepGrid{10, 20, 50, 100, 150, 200};

struct AugmentPlan {
  AugmentMode mode = AugmentMode::oversample;
  int per_class_count = 10;
  bool reshuffle_each_epoch = true;
  std::string cvae_checkpoint;  // synthetic mode only
  std::uint64_t seed = 0;

  // Throws DomainError for counts outside kSweepGrid or a synthetic plan
  // without a CVAE reference.
  void validate() const;
};

// FNV-1a over labels, concentrations and absorbance bytes.
std::uint64_t corpus_fingerprint(const Corpus& corpus);

// train + per_class_count exact copies per class drawn uniformly (with
// replacement) from that class's training spectra. Throws DataError naming
// the class if a class has no training spectra.
std::vector<Spectrum> oversample_epoch(std::span<const Spectrum> train, int per_class_count,
                                       Rng& rng);

// train + per_class_count CVAE spectra per class at concentrations drawn
// uniformly from the class's [min, max] in train; air at zero.
std::vector<Spectrum> synthetic_epoch(std::span<const Spectrum> train, const CvaeModel* cvae,
                                      int per_class_count, Rng& rng);

// One CVAE per fold, each trained on that fold's training split only and
// tagged with the held-out fold and corpus fingerprint.
std::vector<CvaeModel> train_fold_cvaes(const Corpus& corpus, const CvaeTrainConfig& config);

struct SweepRow {
  AugmentMode mode = AugmentMode::oversample;
  int per_class_count = 0;
  int fold = 0;
  double validation_mse = 0.0;       // ppm^2, predicted vs true concentration
  double validation_accuracy = 0.0;
};

struct SweepSummary {
  int per_class_count = 0;
  double mean_mse = 0.0;
  double se_mse = 0.0;
  double mean_accuracy = 0.0;
  double se_accuracy = 0.0;
};

struct EnhancedResult {
  AugmentMode mode = AugmentMode::oversample;
  int selected_count = 0;
  std::vector<DiscriminatorModel> models;  // one per fold, at selected_count
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary;       // one per grid value
};

// For every count in grid trains fold-rotated models on augmented epochs and
// keeps the count with the lowest mean validation MSE. Training seeds are
// derived from (config.seed, mode, count, fold). Failures are rethrown with
// the (mode, count, fold) cell prepended.
EnhancedResult train_enhanced(const Corpus& corpus, AugmentMode mode, const TrainConfig& config,
                              std::span<const CvaeModel> fold_cvaes = {},
                              std::span<const int> grid = kSweepGrid);

// Trains the model for a single (mode, count, fold) cell.
DiscriminatorTrainResult train_augmented_fold(const Corpus& corpus, int fold, AugmentMode mode,
                                              int per_class_count, const TrainConfig& config,
                                              const CvaeModel* cvae);

}  // namespace vocnet
