#include "vocnet/metrics.hpp"

#include <cmath>
#include <string>

#include "vocnet/errors.hpp"

namespace vocnet {

namespace {

void check_pairs(std::size_t a, std::size_t b, std::size_t min, const char* op) {
  if (a != b) {
    throw DomainError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
  }
  if (a < min) {
    throw DomainError(std::string(op) + ": needs at least " + std::to_string(min) + " values");
  }
}

struct Columns {
  std::vector<double> truth, predicted;
};

std::array<Columns, kNumClasses> by_class(std::span<const Spectrum> spectra,
                                          std::span<const Prediction> predictions) {
  check_pairs(spectra.size(), predictions.size(), 1, "per-class metrics");
  std::array<Columns, kNumClasses> out;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    auto& col = out[class_index(spectra[i].label)];
    col.truth.push_back(spectra[i].concentration);
    col.predicted.push_back(predictions[i].predicted_concentration);
  }
  return out;
}

}  // namespace

double r2_score(std::span<const double> y_true, std::span<const double> y_pred) {
  check_pairs(y_true.size(), y_pred.size(), 2, "r2_score");
  double mean = 0.0;
  for (double y : y_true) mean += y;
  mean /= static_cast<double>(y_true.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (ss_tot == 0.0) throw DomainError("r2_score: y_true has zero variance, score undefined");
  return 1.0 - ss_res / ss_tot;
}

double accuracy(std::span<const VocClass> predicted, std::span<const VocClass> truth) {
  check_pairs(predicted.size(), truth.size(), 1, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double mse(std::span<const double> y_true, std::span<const double> y_pred) {
  check_pairs(y_true.size(), y_pred.size(), 1, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    total += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  }
  return total / static_cast<double>(y_true.size());
}

double classification_accuracy(std::span<const Spectrum> spectra,
                               std::span<const Prediction> predictions) {
  check_pairs(spectra.size(), predictions.size(), 1, "classification_accuracy");
  std::vector<VocClass> truth, predicted;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    truth.push_back(spectra[i].label);
    predicted.push_back(predictions[i].predicted_class);
  }
  return accuracy(predicted, truth);
}

double concentration_mse(std::span<const Spectrum> spectra,
                         std::span<const Prediction> predictions) {
  check_pairs(spectra.size(), predictions.size(), 1, "concentration_mse");
  std::vector<double> truth, predicted;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    truth.push_back(spectra[i].concentration);
    predicted.push_back(predictions[i].predicted_concentration);
  }
  return mse(truth, predicted);
}

std::array<std::optional<double>, kNumClasses> per_class_mse(
    std::span<const Spectrum> spectra, std::span<const Prediction> predictions) {
  std::array<std::optional<double>, kNumClasses> out;
  const auto cols = by_class(spectra, predictions);
  for (int c = 0; c < kNumClasses; ++c) {
    if (!cols[c].truth.empty()) out[c] = mse(cols[c].truth, cols[c].predicted);
  }
  return out;
}

std::array<std::optional<double>, kNumClasses> per_class_r2(
    std::span<const Spectrum> spectra, std::span<const Prediction> predictions) {
  std::array<std::optional<double>, kNumClasses> out;
  const auto cols = by_class(spectra, predictions);
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& t = cols[c].truth;
    if (t.size() < 2) continue;
    bool constant = true;
    for (double v : t) constant = constant && v == t.front();
    if (!constant) out[c] = r2_score(t, cols[c].predicted);
  }
  return out;
}

MeanSE mean_standard_error(std::span<const double> values) {
  if (values.empty()) throw DomainError("mean_standard_error: no values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

FoldMetrics fold_metrics(std::span<const Spectrum> spectra,
                         std::span<const Prediction> predictions) {
  return {classification_accuracy(spectra, predictions), concentration_mse(spectra, predictions),
          per_class_mse(spectra, predictions), per_class_r2(spectra, predictions)};
}

MetricReport make_report(std::string model_name, std::span<const FoldMetrics> folds) {
  if (folds.empty()) throw DomainError("make_report: no folds");
  MetricReport report;
  report.model_name = std::move(model_name);
  for (const FoldMetrics& f : folds) {
    report.fold_accuracy.push_back(f.accuracy);
    report.fold_mse.push_back(f.mse);
  }
  report.accuracy = mean_standard_error(report.fold_accuracy);
  report.mse = mean_standard_error(report.fold_mse);
  auto aggregate = [&](auto member, std::array<std::optional<MeanSE>, kNumClasses>& out) {
    for (int c = 0; c < kNumClasses; ++c) {
      std::vector<double> values;
      for (const FoldMetrics& f : folds) {
        if ((f.*member)[c]) values.push_back(*(f.*member)[c]);
      }
      if (values.size() == folds.size()) out[c] = mean_standard_error(values);
    }
  };
  aggregate(&FoldMetrics::class_mse, report.class_mse);
  aggregate(&FoldMetrics::class_r2, report.class_r2);
  return report;
}

}  // namespace vocnet
