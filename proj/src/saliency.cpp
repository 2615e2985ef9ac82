#include "vocnet/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vocnet/errors.hpp"

namespace vocnet {

Eigen::VectorXd resample_linear(const Eigen::VectorXd& source, Eigen::Index length) {
  if (source.size() == 0 || length < 1) throw DomainError("resample_linear: empty input or output");
  const Eigen::Index n = source.size();
  Eigen::VectorXd out(length);
  const double scale = static_cast<double>(n) / static_cast<double>(length);
  for (Eigen::Index i = 0; i < length; ++i) {
    const double x = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0,
                                static_cast<double>(n - 1));
    const auto lo = static_cast<Eigen::Index>(std::floor(x));
    const Eigen::Index hi = std::min(lo + 1, n - 1);
    const double t = x - static_cast<double>(lo);
    out[i] = (1.0 - t) * source[lo] + t * source[hi];
  }
  return out;
}

SaliencyMap abs_cam(const DiscriminatorModel& model, const Eigen::VectorXd& spectrum) {
  const Index length = model.arch().input_length;
  if (spectrum.size() != length) {
    throw DimensionError("abs_cam: spectrum has " + std::to_string(spectrum.size()) +
                         " channels, model expects " + std::to_string(length));
  }
  // Gradients land in Parameter::grad, so work on a private copy.
  DiscriminatorModel scratch = model;
  Tape tape;
  Tensor input({1, 1, length});
  input.array() = spectrum.array();
  const auto out = scratch.forward(tape, input, false);

  const Prediction pred = make_prediction(out.probs.value().array().matrix(),
                                          out.conc.value().array().matrix());
  Tensor class_target({1, kNumClasses});
  class_target.array() = one_hot(pred.predicted_class).array();
  Tensor conc_target({1, kNumVocs});
  conc_target.array() =
      regression_target(pred.predicted_class, pred.predicted_concentration).array();
  Var loss = discriminator_loss(out.probs, out.conc, tape.constant(class_target),
                                tape.constant(conc_target));
  tape.backward(loss);

  const Tensor& activation = out.features.value();
  const Tensor gradient = tape.grad(out.features);
  const Index channels = activation.dim(1), positions = activation.dim(2);
  Eigen::VectorXd cam = Eigen::VectorXd::Zero(positions);
  for (Index c = 0; c < channels; ++c) {
    double weight = 0.0;
    for (Index j = 0; j < positions; ++j) weight += std::abs(gradient(0, c, j));
    weight /= static_cast<double>(positions);
    for (Index j = 0; j < positions; ++j) cam[j] += weight * std::abs(activation(0, c, j));
  }

  SaliencyMap map;
  map.values = resample_linear(cam, length);
  const double peak = map.values.maxCoeff();
  if (!(peak > 0.0)) {
    map.values.setZero();
    map.degenerate = true;
    return map;
  }
  map.values /= peak;
  return map;
}

std::vector<bool> top_fraction_mask(const Eigen::VectorXd& values, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DomainError("top_fraction_mask: fraction in (0, 1]");
  const auto n = static_cast<std::size_t>(values.size());
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[static_cast<Eigen::Index>(a)] > values[static_cast<Eigen::Index>(b)];
  });
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < std::min(keep, n); ++i) mask[order[i]] = true;
  return mask;
}

double jaccard(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw DimensionError("jaccard: mask lengths differ");
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    both += a[i] && b[i];
    either += a[i] || b[i];
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

}  // namespace vocnet
