#include "vocnet/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "vocnet/errors.hpp"
#include "vocnet/kernels.hpp"

namespace vocnet {

namespace {

Tensor he_normal(Shape shape, Index fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> draw(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Index i = 0; i < t.size(); ++i) t[i] = draw(rng);
  return t;
}

Tensor small_uniform(Shape shape, Index fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> draw(-bound, bound);
  for (Index i = 0; i < t.size(); ++i) t[i] = draw(rng);
  return t;
}

constexpr Index kEvalChunk = 256;

}  // namespace

Index DiscriminatorArch::feature_length() const {
  Index length = input_length;
  for (int stage = 0; stage < 2; ++stage) {
    length = conv1d_output_length(length, kernel, 1, padding);
    length /= pool;
  }
  return length;
}

std::string DiscriminatorArch::describe() const {
  std::ostringstream out;
  out << "discriminator/v1 input=" << input_length << " conv=" << conv_channels << "x2 k="
      << kernel << " pad=" << padding << " pool=" << pool << " hidden=" << hidden1 << ","
      << hidden2 << " dropout=" << dropout << " heads=10,9";
  return out.str();
}

DiscriminatorModel::DiscriminatorModel(DiscriminatorArch arch) : arch_(arch) {
  if (arch_.feature_length() < 1) {
    throw DimensionError("discriminator: input length " + std::to_string(arch_.input_length) +
                         " too short for two pooling stages");
  }
  const Index c = arch_.conv_channels, k = arch_.kernel, f = arch_.flat_features();
  const Index h1 = arch_.hidden1, h2 = arch_.hidden2;
  conv1_w_ = Parameter("conv1.weight", Tensor({c, 1, k}));
  conv1_b_ = Parameter("conv1.bias", Tensor({c}));
  conv2_w_ = Parameter("conv2.weight", Tensor({c, c, k}));
  conv2_b_ = Parameter("conv2.bias", Tensor({c}));
  cls_fc1_w_ = Parameter("classifier.fc1.weight", Tensor({h1, f}));
  cls_fc1_b_ = Parameter("classifier.fc1.bias", Tensor({h1}));
  cls_fc2_w_ = Parameter("classifier.fc2.weight", Tensor({h2, h1}));
  cls_fc2_b_ = Parameter("classifier.fc2.bias", Tensor({h2}));
  cls_out_w_ = Parameter("classifier.out.weight", Tensor({kNumClasses, h2}));
  cls_out_b_ = Parameter("classifier.out.bias", Tensor({kNumClasses}));
  reg_fc1_w_ = Parameter("regressor.fc1.weight", Tensor({h1, f}));
  reg_fc1_b_ = Parameter("regressor.fc1.bias", Tensor({h1}));
  reg_fc2_w_ = Parameter("regressor.fc2.weight", Tensor({h2, h1}));
  reg_fc2_b_ = Parameter("regressor.fc2.bias", Tensor({h2}));
  reg_out_w_ = Parameter("regressor.out.weight", Tensor({kNumVocs, h2}));
  reg_out_b_ = Parameter("regressor.out.bias", Tensor({kNumVocs}));
}

void DiscriminatorModel::initialize(Rng& rng) {
  const Index c = arch_.conv_channels, k = arch_.kernel, f = arch_.flat_features();
  const Index h1 = arch_.hidden1, h2 = arch_.hidden2;
  conv1_w_.value = he_normal({c, 1, k}, k, rng);
  conv2_w_.value = he_normal({c, c, k}, c * k, rng);
  cls_fc1_w_.value = he_normal({h1, f}, f, rng);
  cls_fc2_w_.value = he_normal({h2, h1}, h1, rng);
  cls_out_w_.value = small_uniform({kNumClasses, h2}, h2, rng);
  reg_fc1_w_.value = he_normal({h1, f}, f, rng);
  reg_fc2_w_.value = he_normal({h2, h1}, h1, rng);
  reg_out_w_.value = small_uniform({kNumVocs, h2}, h2, rng);
  for (Parameter* p : {&conv1_b_, &conv2_b_, &cls_fc1_b_, &cls_fc2_b_, &cls_out_b_, &reg_fc1_b_,
                       &reg_fc2_b_, &reg_out_b_}) {
    p->value = Tensor(p->value.shape());
  }
  for (Parameter* p : parameters()) p->zero_grad();
}

DiscriminatorModel::Outputs DiscriminatorModel::forward(Tape& tape, const Tensor& input,
                                                        bool training, Rng* rng) const {
  if (input.rank() != 3 || input.dim(1) != 1 || input.dim(2) != arch_.input_length) {
    throw DimensionError("discriminator: expected input [N x 1 x " +
                         std::to_string(arch_.input_length) + "], got " +
                         shape_string(input.shape()));
  }
  if (!input.array().allFinite()) throw DomainError("discriminator: non-finite input");
  if (training && rng == nullptr) throw ContractViolation("discriminator: training needs an rng");

  // Parameters are read-only during a forward pass; the tape writes gradients
  // back through these pointers only in backward().
  auto param = [&tape](const Parameter& p) { return tape.parameter(const_cast<Parameter&>(p)); };
  const Index n = input.dim(0);

  Var x = tape.constant(input);
  Var h = ad::relu(ad::conv1d(x, param(conv1_w_), param(conv1_b_), 1, arch_.padding));
  h = ad::avg_pool1d(h, arch_.pool);
  h = ad::relu(ad::conv1d(h, param(conv2_w_), param(conv2_b_), 1, arch_.padding));
  Var features = ad::avg_pool1d(h, arch_.pool);
  Var flat = ad::reshape(features, {n, arch_.flat_features()});

  auto head = [&](const Parameter& w1, const Parameter& b1, const Parameter& w2,
                  const Parameter& b2, const Parameter& wo, const Parameter& bo) {
    Var a = ad::relu(ad::linear(flat, param(w1), param(b1)));
    if (training) a = ad::dropout(a, arch_.dropout, *rng, true);
    a = ad::relu(ad::linear(a, param(w2), param(b2)));
    if (training) a = ad::dropout(a, arch_.dropout, *rng, true);
    return ad::linear(a, param(wo), param(bo));
  };

  Outputs out;
  out.features = features;
  out.logits = head(cls_fc1_w_, cls_fc1_b_, cls_fc2_w_, cls_fc2_b_, cls_out_w_, cls_out_b_);
  out.probs = ad::softmax(out.logits);
  out.conc = head(reg_fc1_w_, reg_fc1_b_, reg_fc2_w_, reg_fc2_b_, reg_out_w_, reg_out_b_);
  return out;
}

std::vector<Parameter*> DiscriminatorModel::parameters() {
  return {&conv1_w_,   &conv1_b_,   &conv2_w_,   &conv2_b_,   &cls_fc1_w_, &cls_fc1_b_,
          &cls_fc2_w_, &cls_fc2_b_, &cls_out_w_, &cls_out_b_, &reg_fc1_w_, &reg_fc1_b_,
          &reg_fc2_w_, &reg_fc2_b_, &reg_out_w_, &reg_out_b_};
}

std::vector<const Parameter*> DiscriminatorModel::parameters() const {
  auto mutable_params = const_cast<DiscriminatorModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

HeadOutputs forward(const DiscriminatorModel& model, const Eigen::VectorXd& spectrum,
                    bool training, Rng* rng) {
  if (spectrum.size() != model.arch().input_length) {
    throw DimensionError("forward: spectrum has " + std::to_string(spectrum.size()) +
                         " channels, model expects " +
                         std::to_string(model.arch().input_length));
  }
  Tape tape;
  Tensor input({1, 1, spectrum.size()}, Tensor::Array(spectrum.array()));
  auto out = model.forward(tape, input, training, rng);
  return {out.probs.value().array().matrix(), out.conc.value().array().matrix()};
}

Var discriminator_loss(const Var& probs, const Var& conc, const Var& one_hot,
                       const Var& conc_target) {
  return ad::add(ad::mse(conc, conc_target), ad::cross_entropy(probs, one_hot));
}

double discriminator_loss(const Eigen::VectorXd& class_probs, const Eigen::VectorXd& conc_vector,
                          const Eigen::VectorXd& one_hot_target,
                          const Eigen::VectorXd& conc_target) {
  if (class_probs.size() != one_hot_target.size() || conc_vector.size() != conc_target.size()) {
    throw DimensionError("discriminator_loss: output/target sizes differ");
  }
  const double mse = (conc_vector - conc_target).squaredNorm() / static_cast<double>(conc_vector.size());
  const double ce = -(one_hot_target.array() * class_probs.array().max(1e-12).log()).sum();
  return mse + ce;
}

Prediction make_prediction(Eigen::VectorXd class_probs, Eigen::VectorXd conc_vector) {
  Prediction p;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < class_probs.size(); ++i) {
    if (class_probs[i] > class_probs[best]) best = i;
  }
  p.predicted_class = class_from_index(static_cast<int>(best));
  if (auto slot = voc_slot(p.predicted_class)) {
    p.predicted_concentration = std::max(0.0, conc_vector[*slot]);
  }
  p.class_probs = std::move(class_probs);
  p.conc_vector = std::move(conc_vector);
  return p;
}

Prediction predict(const DiscriminatorModel& model, const Eigen::VectorXd& spectrum) {
  auto out = forward(model, spectrum);
  return make_prediction(std::move(out.class_probs), std::move(out.conc_vector));
}

std::vector<Prediction> predict_all(const DiscriminatorModel& model,
                                    std::span<const Spectrum> spectra) {
  std::vector<Prediction> out;
  out.reserve(spectra.size());
  const auto order = iota_indices(spectra.size());
  for (std::size_t start = 0; start < spectra.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(spectra.size(), start + kEvalChunk);
    std::span<const std::size_t> chunk(order.data() + start, stop - start);
    Tape tape;
    auto res = model.forward(tape, spectra_batch(spectra, chunk), false);
    const auto probs = res.probs.value().matrix();
    const auto conc = res.conc.value().matrix();
    for (Index i = 0; i < static_cast<Index>(chunk.size()); ++i) {
      out.push_back(make_prediction(probs.row(i).transpose(), conc.row(i).transpose()));
    }
  }
  return out;
}

double evaluate_loss(const DiscriminatorModel& model, std::span<const Spectrum> spectra) {
  if (spectra.empty()) return 0.0;
  const auto order = iota_indices(spectra.size());
  double total = 0.0;
  for (std::size_t start = 0; start < spectra.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(spectra.size(), start + kEvalChunk);
    std::span<const std::size_t> chunk(order.data() + start, stop - start);
    Tape tape;
    auto res = model.forward(tape, spectra_batch(spectra, chunk), false);
    Var loss = discriminator_loss(res.probs, res.conc,
                                  tape.constant(class_targets(spectra, chunk)),
                                  tape.constant(concentration_targets(spectra, chunk)));
    total += loss.value()[0] * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(spectra.size());
}

bool trunk_alive(const DiscriminatorModel& model, std::span<const Spectrum> spectra) {
  if (spectra.empty()) throw ContractViolation("trunk_alive: no spectra");
  Tape tape;
  const auto out = model.forward(tape, spectra_batch(spectra, iota_indices(spectra.size())), false);
  const Tensor& f = out.features.value();
  for (Index c = 0; c < f.dim(1); ++c) {
    Index active = 0;
    for (Index n = 0; n < f.dim(0); ++n) {
      for (Index j = 0; j < f.dim(2); ++j) active += f(n, c, j) > 0.0;
    }
    if (static_cast<double>(active) < kMinActiveFraction * static_cast<double>(f.dim(0) * f.dim(2))) {
      return false;
    }
  }
  return true;
}

DiscriminatorTrainResult train_discriminator(std::span<const Spectrum> train,
                                             std::span<const Spectrum> validation,
                                             const TrainConfig& config,
                                             const EpochProvider& provider,
                                             DiscriminatorArch arch) {
  config.validate();
  if (train.empty() && !provider) throw ContractViolation("train: empty training split");

  DiscriminatorTrainResult result{DiscriminatorModel(arch), {}};
  DiscriminatorModel& model = result.model;
  Rng init_rng = make_rng(config.seed, {1});
  Rng shuffle_rng = make_rng(config.seed, {2});
  Rng dropout_rng = make_rng(config.seed, {3});
  Rng epoch_rng = make_rng(config.seed, {4});
  model.initialize(init_rng);
  // Spectra are non-negative, so a kernel draw can leave a conv channel at
  // zero everywhere; such a trunk never recovers. Redraw from the same stream.
  const std::span<const Spectrum> probe = train.first(std::min<std::size_t>(train.size(), 64));
  for (int attempt = 1; attempt < kMaxInitAttempts && !probe.empty() && !trunk_alive(model, probe);
       ++attempt) {
    model.initialize(init_rng);
  }

  Optimizer optimizer(model.parameters(),
                      OptimizerOptions{config.optimizer, config.learning_rate});
  ParameterSnapshot best = snapshot(model);
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<Spectrum> view_storage;
    std::span<const Spectrum> view = train;
    if (provider) {
      view_storage = provider(epoch, epoch_rng);
      view = view_storage;
    }
    if (view.empty()) throw ContractViolation("train: empty epoch view");
    auto order = iota_indices(view.size());
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      Tape tape;
      auto res = model.forward(tape, spectra_batch(view, batch), true, &dropout_rng);
      Var loss = discriminator_loss(res.probs, res.conc, tape.constant(class_targets(view, batch)),
                                    tape.constant(concentration_targets(view, batch)));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch starting at " +
                             std::to_string(start));
      }
      tape.backward(loss);
      optimizer.step();
      epoch_loss += value * static_cast<double>(batch.size());
    }
    epoch_loss /= static_cast<double>(order.size());

    const double val_loss = validation.empty() ? epoch_loss : evaluate_loss(model, validation);
    if (!std::isfinite(val_loss)) {
      throw NumericalError("training diverged: non-finite validation loss at epoch " +
                           std::to_string(epoch));
    }
    result.history.epochs.push_back({epoch, epoch_loss, val_loss});
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = snapshot(model);
      result.history.best_epoch = epoch;
      result.history.best_validation_loss = val_loss;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  restore(model, best);
  return result;
}

DiscriminatorTrainResult train(const Corpus& corpus, int fold, const TrainConfig& config) {
  const FoldSplit split = kfold_split(corpus, fold);
  for (VocClass c : all_classes()) {
    const bool present = std::any_of(split.train.begin(), split.train.end(),
                                     [c](const Spectrum& s) { return s.label == c; });
    if (!present) {
      throw ContractViolation("train: class " + std::string(class_name(c)) +
                              " missing from the training split of fold " + std::to_string(fold));
    }
  }
  return train_discriminator(split.train, split.validation, config);
}

}  // namespace vocnet
