#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "vocnet/dataset.hpp"
#include "vocnet/discriminator.hpp"

namespace vocnet {

// 1 - SS_res / SS_tot. Throws DomainError for fewer than two pairs,
// mismatched lengths, or constant y_true.
double r2_score(std::span<const double> y_true, std::span<const double> y_pred);

// Fraction of matching labels. Throws DomainError when empty or mismatched.
double accuracy(std::span<const VocClass> predicted, std::span<const VocClass> truth);

// Mean squared residual. Throws DomainError when empty or mismatched.
double mse(std::span<const double> y_true, std::span<const double> y_pred);

// Same metrics read off a spectra set and its predictions (aligned).
double classification_accuracy(std::span<const Spectrum> spectra,
                               std::span<const Prediction> predictions);
double concentration_mse(std::span<const Spectrum> spectra,
                         std::span<const Prediction> predictions);

// Grouped by true class; nullopt where the class is absent (MSE) or where R²
// is undefined (fewer than two spectra or constant true concentration, e.g. air).
std::array<std::optional<double>, kNumClasses> per_class_mse(
    std::span<const Spectrum> spectra, std::span<const Prediction> predictions);
std::array<std::optional<double>, kNumClasses> per_class_r2(
    std::span<const Spectrum> spectra, std::span<const Prediction> predictions);

struct MeanSE {
  double mean = 0.0;
  double standard_error = 0.0;  // sample sd / sqrt(n); 0 for a single value
};

MeanSE mean_standard_error(std::span<const double> values);

struct FoldMetrics {
  double accuracy = 0.0;
  double mse = 0.0;
  std::array<std::optional<double>, kNumClasses> class_mse;
  std::array<std::optional<double>, kNumClasses> class_r2;
};

FoldMetrics fold_metrics(std::span<const Spectrum> spectra,
                         std::span<const Prediction> predictions);

struct MetricReport {
  std::string model_name;
  MeanSE accuracy;
  MeanSE mse;
  std::array<std::optional<MeanSE>, kNumClasses> class_mse;
  std::array<std::optional<MeanSE>, kNumClasses> class_r2;
  std::vector<double> fold_mse;  // raw per-fold values, the input to compare
  std::vector<double> fold_accuracy;
};

// Aggregates folds; a per-class entry is present only if every fold defines it.
MetricReport make_report(std::string model_name, std::span<const FoldMetrics> folds);

}  // namespace vocnet
