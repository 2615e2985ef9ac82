#include "vocnet/cvae.hpp"

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

Tensor condition_batch(std::span<const Spectrum> spectra, std::span<const std::size_t> order) {
  return concentration_targets(spectra, order);
}

constexpr Index kEvalChunk = 128;

}  // namespace

Index CvaeArch::encoder_length() const {
  Index length = input_length;
  for (std::size_t i = 0; i < encoder_channels.size(); ++i) {
    length = conv1d_output_length(length, kernel, 1, padding) / pool;
  }
  return length;
}

std::array<Index, 3> CvaeArch::decoder_lengths() const {
  std::array<Index, 3> lengths{};
  Index length = base_length();
  for (std::size_t i = 0; i < 3; ++i) {
    length = conv1d_transpose_output_length(length, transpose_kernels[i], transpose_stride,
                                            transpose_padding);
    lengths[i] = length;
  }
  return lengths;
}

Index CvaeArch::base_length() const {
  for (Index base = 1; base <= input_length; ++base) {
    Index length = base;
    for (std::size_t i = 0; i < 3; ++i) {
      length = conv1d_transpose_output_length(length, transpose_kernels[i], transpose_stride,
                                              transpose_padding);
    }
    if (length == input_length) return base;
    if (length > input_length) break;
  }
  throw DimensionError("cvae: no decoder seed length reaches input length " +
                       std::to_string(input_length));
}

std::string CvaeArch::describe() const {
  std::ostringstream out;
  out << "cvae/v1 input=" << input_length << " latent=" << latent << " (parallel mu/logvar heads)"
      << " enc_conv=" << encoder_channels[0] << "," << encoder_channels[1] << ","
      << encoder_channels[2] << "," << encoder_channels[3] << " k=" << kernel
      << " pad=" << padding << " pool=" << pool << " enc_cond=" << encoder_cond[0] << ","
      << encoder_cond[1] << " enc_hidden=" << encoder_hidden
      << " dec_emb=" << decoder_emb_hidden << "," << decoder_emb_channels << "x" << base_length()
      << " dec_cond=" << decoder_cond_hidden[0] << "," << decoder_cond_hidden[1] << ","
      << base_length() << " tconv_k=" << transpose_kernels[0] << "," << transpose_kernels[1]
      << "," << transpose_kernels[2] << " tconv_c=" << transpose_channels[0] << ","
      << transpose_channels[1] << "," << transpose_channels[2] << " stride=" << transpose_stride
      << " tpad=" << transpose_padding << " condition=9 output=exp";
  return out.str();
}

CvaeModel::CvaeModel(CvaeArch arch) : arch_(arch) {
  const Index base = arch_.base_length();
  const auto lengths = arch_.decoder_lengths();
  if (lengths[2] != arch_.input_length) {
    throw DimensionError("cvae: decoder chain ends at " + std::to_string(lengths[2]) +
                         ", expected " + std::to_string(arch_.input_length));
  }
  if (arch_.encoder_length() < 1) {
    throw DimensionError("cvae: input too short for four pooling stages");
  }
  if (arch_.decoder_emb_channels + 1 != arch_.transpose_channels[0]) {
    throw DimensionError("cvae: embedding channels + condition channel must equal the first "
                         "transposed-conv input width");
  }

  Index in = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    const Index out = arch_.encoder_channels[i];
    const std::string tag = "encoder.conv" + std::to_string(i + 1);
    enc_conv_w_[i] = Parameter(tag + ".weight", Tensor({out, in, arch_.kernel}));
    enc_conv_b_[i] = Parameter(tag + ".bias", Tensor({out}));
    in = out;
  }
  const Index c1 = arch_.encoder_cond[0], c2 = arch_.encoder_cond[1];
  enc_cond1_w_ = Parameter("encoder.cond1.weight", Tensor({c1, kNumVocs}));
  enc_cond1_b_ = Parameter("encoder.cond1.bias", Tensor({c1}));
  enc_cond2_w_ = Parameter("encoder.cond2.weight", Tensor({c2, c1}));
  enc_cond2_b_ = Parameter("encoder.cond2.bias", Tensor({c2}));
  const Index hidden = arch_.encoder_hidden;
  enc_emb_w_ = Parameter("encoder.emb.weight", Tensor({hidden, arch_.encoder_features() + c2}));
  enc_emb_b_ = Parameter("encoder.emb.bias", Tensor({hidden}));
  mu_w_ = Parameter("encoder.mu.weight", Tensor({arch_.latent, hidden}));
  mu_b_ = Parameter("encoder.mu.bias", Tensor({arch_.latent}));
  lv_w_ = Parameter("encoder.logvar.weight", Tensor({arch_.latent, hidden}));
  lv_b_ = Parameter("encoder.logvar.bias", Tensor({arch_.latent}));

  const Index e1 = arch_.decoder_emb_hidden, e2 = arch_.decoder_emb_channels * base;
  dec_emb1_w_ = Parameter("decoder.emb1.weight", Tensor({e1, arch_.latent}));
  dec_emb1_b_ = Parameter("decoder.emb1.bias", Tensor({e1}));
  dec_emb2_w_ = Parameter("decoder.emb2.weight", Tensor({e2, e1}));
  dec_emb2_b_ = Parameter("decoder.emb2.bias", Tensor({e2}));
  const Index d1 = arch_.decoder_cond_hidden[0], d2 = arch_.decoder_cond_hidden[1];
  dec_cond1_w_ = Parameter("decoder.cond1.weight", Tensor({d1, kNumVocs}));
  dec_cond1_b_ = Parameter("decoder.cond1.bias", Tensor({d1}));
  dec_cond2_w_ = Parameter("decoder.cond2.weight", Tensor({d2, d1}));
  dec_cond2_b_ = Parameter("decoder.cond2.bias", Tensor({d2}));
  dec_cond3_w_ = Parameter("decoder.cond3.weight", Tensor({base, d2}));
  dec_cond3_b_ = Parameter("decoder.cond3.bias", Tensor({base}));

  in = arch_.transpose_channels[0];
  for (std::size_t i = 0; i < 3; ++i) {
    const Index out = arch_.transpose_channels[i];
    const std::string tag = "decoder.tconv" + std::to_string(i + 1);
    tconv_w_[i] = Parameter(tag + ".weight", Tensor({in, out, arch_.transpose_kernels[i]}));
    tconv_b_[i] = Parameter(tag + ".bias", Tensor({out}));
    in = out;
  }
}

void CvaeModel::initialize(Rng& rng) {
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& shape = enc_conv_w_[i].value.shape();
    enc_conv_w_[i].value = he_normal(shape, shape[1] * shape[2], rng);
  }
  for (Parameter* p : {&enc_cond1_w_, &enc_cond2_w_, &enc_emb_w_, &dec_emb1_w_, &dec_emb2_w_,
                       &dec_cond1_w_, &dec_cond2_w_, &dec_cond3_w_}) {
    p->value = he_normal(p->value.shape(), p->value.dim(1), rng);
  }
  mu_w_.value = small_uniform(mu_w_.value.shape(), arch_.encoder_hidden, rng);
  lv_w_.value = small_uniform(lv_w_.value.shape(), arch_.encoder_hidden, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& shape = tconv_w_[i].value.shape();
    // Each output position of a stride-s transposed conv sees about in*k/s taps.
    const Index fan_in = shape[0] * shape[2] / arch_.transpose_stride;
    tconv_w_[i].value = i < 2 ? he_normal(shape, fan_in, rng) : small_uniform(shape, fan_in, rng);
  }
  for (Parameter* p : parameters()) {
    if (p->value.rank() == 1) p->value = Tensor(p->value.shape());
    p->zero_grad();
  }
}

namespace {
Tensor scaled_conditions(const Tensor& conditions) {
  Tensor out = conditions;
  out.array() *= kConditionScale;
  return out;
}
}  // namespace

Var CvaeModel::param(Tape& tape, const Parameter& p) const {
  // Read-only during forward; the tape writes gradients back in backward().
  return tape.parameter(const_cast<Parameter&>(p));
}

CvaeModel::Encoded CvaeModel::encode(Tape& tape, const Tensor& spectra,
                                     const Tensor& conditions) const {
  if (spectra.rank() != 3 || spectra.dim(1) != 1 || spectra.dim(2) != arch_.input_length) {
    throw DimensionError("cvae encode: expected spectra [N x 1 x " +
                         std::to_string(arch_.input_length) + "], got " +
                         shape_string(spectra.shape()));
  }
  const Index n = spectra.dim(0);
  if (conditions.rank() != 2 || conditions.dim(0) != n || conditions.dim(1) != kNumVocs) {
    throw DimensionError("cvae encode: expected conditions [" + std::to_string(n) + " x 9], got " +
                         shape_string(conditions.shape()));
  }
  Var h = tape.constant(spectra);
  for (std::size_t i = 0; i < 4; ++i) {
    h = ad::relu(ad::conv1d(h, param(tape, enc_conv_w_[i]), param(tape, enc_conv_b_[i]), 1,
                            arch_.padding));
    h = ad::avg_pool1d(h, arch_.pool);
  }
  Var flat = ad::reshape(h, {n, arch_.encoder_features()});
  Var cond = tape.constant(scaled_conditions(conditions));
  cond = ad::relu(ad::linear(cond, param(tape, enc_cond1_w_), param(tape, enc_cond1_b_)));
  cond = ad::relu(ad::linear(cond, param(tape, enc_cond2_w_), param(tape, enc_cond2_b_)));
  Var joint = ad::concat(flat, cond);
  joint = ad::relu(ad::linear(joint, param(tape, enc_emb_w_), param(tape, enc_emb_b_)));
  return {ad::linear(joint, param(tape, mu_w_), param(tape, mu_b_)),
          ad::linear(joint, param(tape, lv_w_), param(tape, lv_b_))};
}

Var CvaeModel::decode(Tape& tape, const Var& z, const Tensor& conditions) const {
  if (z.value().rank() != 2 || z.value().dim(1) != arch_.latent) {
    throw DimensionError("cvae decode: expected z [N x " + std::to_string(arch_.latent) +
                         "], got " + shape_string(z.shape()));
  }
  const Index n = z.value().dim(0);
  if (conditions.rank() != 2 || conditions.dim(0) != n || conditions.dim(1) != kNumVocs) {
    throw DimensionError("cvae decode: expected conditions [" + std::to_string(n) + " x 9], got " +
                         shape_string(conditions.shape()));
  }
  const Index base = arch_.base_length();
  Var emb = ad::relu(ad::linear(z, param(tape, dec_emb1_w_), param(tape, dec_emb1_b_)));
  emb = ad::relu(ad::linear(emb, param(tape, dec_emb2_w_), param(tape, dec_emb2_b_)));
  emb = ad::reshape(emb, {n, arch_.decoder_emb_channels, base});

  Var cond = tape.constant(scaled_conditions(conditions));
  cond = ad::relu(ad::linear(cond, param(tape, dec_cond1_w_), param(tape, dec_cond1_b_)));
  cond = ad::relu(ad::linear(cond, param(tape, dec_cond2_w_), param(tape, dec_cond2_b_)));
  cond = ad::relu(ad::linear(cond, param(tape, dec_cond3_w_), param(tape, dec_cond3_b_)));
  cond = ad::reshape(cond, {n, 1, base});

  Var h = ad::concat(emb, cond);
  for (std::size_t i = 0; i < 3; ++i) {
    h = ad::conv1d_transpose(h, param(tape, tconv_w_[i]), param(tape, tconv_b_[i]),
                             arch_.transpose_stride, arch_.transpose_padding);
    if (i < 2) h = ad::relu(h);
  }
  return ad::exp(h);
}

std::vector<Parameter*> CvaeModel::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out.push_back(&enc_conv_w_[i]);
    out.push_back(&enc_conv_b_[i]);
  }
  for (Parameter* p : {&enc_cond1_w_, &enc_cond1_b_, &enc_cond2_w_, &enc_cond2_b_, &enc_emb_w_,
                       &enc_emb_b_, &mu_w_, &mu_b_, &lv_w_, &lv_b_, &dec_emb1_w_, &dec_emb1_b_,
                       &dec_emb2_w_, &dec_emb2_b_, &dec_cond1_w_, &dec_cond1_b_, &dec_cond2_w_,
                       &dec_cond2_b_, &dec_cond3_w_, &dec_cond3_b_}) {
    out.push_back(p);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back(&tconv_w_[i]);
    out.push_back(&tconv_b_[i]);
  }
  return out;
}

std::vector<const Parameter*> CvaeModel::parameters() const {
  auto mutable_params = const_cast<CvaeModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

LatentStats encode(const CvaeModel& model, const Eigen::VectorXd& spectrum,
                   const Eigen::VectorXd& condition) {
  if (condition.size() != kNumVocs) throw DimensionError("encode: condition must have 9 slots");
  Tape tape;
  auto enc = model.encode(tape, Tensor({1, 1, spectrum.size()}, Tensor::Array(spectrum.array())),
                          Tensor({1, kNumVocs}, Tensor::Array(condition.array())));
  return {enc.mu.value().array().matrix(), enc.log_variance.value().array().matrix()};
}

Eigen::VectorXd decode(const CvaeModel& model, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& condition) {
  if (condition.size() != kNumVocs) throw DimensionError("decode: condition must have 9 slots");
  Tape tape;
  Var zv = tape.constant(Tensor({1, z.size()}, Tensor::Array(z.array())));
  Var out = model.decode(tape, zv, Tensor({1, kNumVocs}, Tensor::Array(condition.array())));
  return out.value().array().matrix();
}

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_variance,
                               const Eigen::VectorXd& eps) {
  if (mu.size() != log_variance.size() || mu.size() != eps.size()) {
    throw DimensionError("reparameterize: mu, log_variance and eps must share a length");
  }
  return mu.array() + (0.5 * log_variance.array()).exp() * eps.array();
}

LatentSample reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_variance,
                            Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd eps(mu.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = normal(rng);
  return {mu, log_variance, reparameterize(mu, log_variance, eps)};
}

Var reparameterize(const Var& mu, const Var& log_variance, const Tensor& eps) {
  Tape& tape = mu.tape();
  Var sigma = ad::exp(ad::scale(log_variance, 0.5));
  return ad::add(mu, ad::mul(sigma, tape.constant(eps)));
}

double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_variance) {
  if (mu.size() != log_variance.size()) throw DimensionError("kl_divergence: length mismatch");
  return 0.5 * (mu.array().square() + log_variance.array().exp() - 1.0 - log_variance.array()).sum();
}

double cvae_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& x_recon,
                 const Eigen::VectorXd& mu, const Eigen::VectorXd& log_variance,
                 double kl_weight) {
  if (x.size() != x_recon.size()) throw DimensionError("cvae_loss: spectrum length mismatch");
  const double recon = (x - x_recon).squaredNorm() / static_cast<double>(x.size());
  return recon + kl_weight * kl_divergence(mu, log_variance);
}

Var cvae_loss(const Var& x, const Var& x_recon, const Var& mu, const Var& log_variance,
              double kl_weight) {
  Var recon = ad::mse(x_recon, x);
  Var kl = ad::kl_divergence(mu, log_variance);
  // mse() averages over batch and channels, kl_divergence() over the batch.
  return ad::add(recon, kl_weight == 1.0 ? kl : ad::scale(kl, kl_weight));
}

CvaeEvaluation evaluate_cvae(const CvaeModel& model, std::span<const Spectrum> spectra,
                             double kl_weight) {
  CvaeEvaluation eval;
  if (spectra.empty()) return eval;
  const auto order = iota_indices(spectra.size());
  for (std::size_t start = 0; start < spectra.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(spectra.size(), start + kEvalChunk);
    std::span<const std::size_t> chunk(order.data() + start, stop - start);
    Tape tape;
    const Tensor x = spectra_batch(spectra, chunk);
    const Tensor cond = condition_batch(spectra, chunk);
    auto enc = model.encode(tape, x, cond);
    Var recon = model.decode(tape, enc.mu, cond);
    Var xv = tape.constant(x);
    const double weight = static_cast<double>(chunk.size());
    eval.recon_mse += ad::mse(recon, xv).value()[0] * weight;
    eval.loss += cvae_loss(xv, recon, enc.mu, enc.log_variance, kl_weight).value()[0] * weight;
  }
  eval.loss /= static_cast<double>(spectra.size());
  eval.recon_mse /= static_cast<double>(spectra.size());
  return eval;
}

CvaeTrainResult train_cvae(std::span<const Spectrum> train, std::span<const Spectrum> validation,
                           const CvaeTrainConfig& config, CvaeArch arch) {
  config.base.validate();
  if (train.empty()) throw ContractViolation("train_cvae: empty training set");
  if (config.kl_weight < 0.0) throw DomainError("train_cvae: negative KL weight");

  CvaeTrainResult result{CvaeModel(arch), {}, -1, 0.0};
  CvaeModel& model = result.model;
  Rng init_rng = make_rng(config.base.seed, {11});
  Rng shuffle_rng = make_rng(config.base.seed, {12});
  Rng noise_rng = make_rng(config.base.seed, {13});
  model.initialize(init_rng);

  double mean_absorbance = 0.0;
  for (const Spectrum& s : train) mean_absorbance += s.absorbance.mean();
  mean_absorbance /= static_cast<double>(train.size());
  model.output_bias().value.array().setConstant(std::log(std::max(mean_absorbance, 1e-6)));

  const std::span<const Spectrum> monitor = validation.empty() ? train : validation;
  result.initial_recon_mse = evaluate_cvae(model, monitor, config.kl_weight).recon_mse;

  Optimizer optimizer(model.parameters(),
                      OptimizerOptions{config.base.optimizer, config.base.learning_rate});
  ParameterSnapshot best = snapshot(model);
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto batch_size = static_cast<std::size_t>(config.base.batch_size);

  std::vector<std::size_t> pool = iota_indices(train.size());
  if (config.balance_classes) {
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < train.size(); ++i) by_class[class_index(train[i].label)].push_back(i);
    std::size_t largest = 0;
    for (const auto& members : by_class) largest = std::max(largest, members.size());
    for (const auto& members : by_class) {
      for (std::size_t i = members.size(); i < largest && !members.empty(); ++i) {
        pool.push_back(members[i % members.size()]);
      }
    }
  }

  for (int epoch = 0; epoch < config.base.epochs; ++epoch) {
    auto order = pool;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      const Index n = static_cast<Index>(batch.size());
      Tape tape;
      const Tensor x = spectra_batch(train, batch);
      const Tensor cond = condition_batch(train, batch);
      auto enc = model.encode(tape, x, cond);
      Tensor eps({n, model.arch().latent});
      for (Index i = 0; i < eps.size(); ++i) eps[i] = normal(noise_rng);
      Var z = reparameterize(enc.mu, enc.log_variance, eps);
      Var recon = model.decode(tape, z, cond);
      Var loss = cvae_loss(tape.constant(x), recon, enc.mu, enc.log_variance, config.kl_weight);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("cvae training diverged: non-finite loss at epoch " +
                             std::to_string(epoch));
      }
      tape.backward(loss);
      optimizer.step();
      epoch_loss += value * static_cast<double>(n);
    }
    epoch_loss /= static_cast<double>(order.size());
    const CvaeEvaluation eval = evaluate_cvae(model, monitor, config.kl_weight);
    if (!std::isfinite(eval.loss)) {
      throw NumericalError("cvae training diverged: non-finite validation loss at epoch " +
                           std::to_string(epoch));
    }
    result.history.push_back({epoch, epoch_loss, eval.loss, eval.recon_mse});
    if (eval.loss < best_loss) {
      best_loss = eval.loss;
      best = snapshot(model);
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.base.patience) {
      break;
    }
  }
  restore(model, best);
  return result;
}

std::vector<Spectrum> generate(const CvaeModel& model, VocClass c, double concentration, int n,
                               Rng& rng) {
  if (!(concentration >= 0.0)) throw DomainError("generate: negative concentration");
  if (c == VocClass::air && concentration != 0.0) {
    throw DomainError("generate: air is generated at zero concentration only");
  }
  if (n < 1) throw DomainError("generate: n must be at least 1");
  const Index latent = model.arch().latent;
  Tensor z({n, latent});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  Tensor cond({n, kNumVocs});
  const Eigen::VectorXd target = regression_target(c, concentration);
  for (Index i = 0; i < n; ++i) cond.matrix().row(i) = target.transpose();

  Tape tape;
  Var out = model.decode(tape, tape.constant(std::move(z)), cond);
  const auto values = out.value().matrix(n, model.arch().input_length);
  std::vector<Spectrum> spectra;
  spectra.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Spectrum s;
    s.absorbance = values.row(i).transpose();
    s.label = c;
    s.concentration = concentration;
    s.provenance = Provenance::cvae_generated;
    spectra.push_back(std::move(s));
  }
  return spectra;
}

}  // namespace vocnet
