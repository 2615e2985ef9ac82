#include "vocnet/training.hpp"

#include <numeric>

#include "vocnet/errors.hpp"

namespace vocnet {

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0.0) || patience <= 0) {
    throw DomainError("training configuration values must be positive");
  }
}

Tensor spectra_batch(std::span<const Spectrum> spectra, std::span<const std::size_t> order) {
  const Index n = static_cast<Index>(order.size());
  const Index length = n > 0 ? spectra[order[0]].absorbance.size() : 0;
  Tensor batch({n, 1, length});
  auto m = batch.matrix(n, length);
  for (Index i = 0; i < n; ++i) {
    const auto& a = spectra[order[static_cast<std::size_t>(i)]].absorbance;
    if (a.size() != length) throw DimensionError("spectra in a batch differ in length");
    m.row(i) = a.transpose();
  }
  return batch;
}

Tensor class_targets(std::span<const Spectrum> spectra, std::span<const std::size_t> order) {
  const Index n = static_cast<Index>(order.size());
  Tensor t({n, kNumClasses});
  for (Index i = 0; i < n; ++i) t(i, class_index(spectra[order[static_cast<std::size_t>(i)]].label)) = 1.0;
  return t;
}

Tensor concentration_targets(std::span<const Spectrum> spectra,
                             std::span<const std::size_t> order) {
  const Index n = static_cast<Index>(order.size());
  Tensor t({n, kNumVocs});
  for (Index i = 0; i < n; ++i) {
    const Spectrum& s = spectra[order[static_cast<std::size_t>(i)]];
    if (auto slot = voc_slot(s.label)) t(i, *slot) = s.concentration;
  }
  return t;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace vocnet
