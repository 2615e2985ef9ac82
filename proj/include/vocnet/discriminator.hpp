#pragma once

#include <Eigen/Core>

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vocnet/autodiff.hpp"
#include "vocnet/dataset.hpp"
#include "vocnet/training.hpp"

namespace vocnet {

// Layer sizes of the two-head network. input_length is 622 in production;
// the gradient checks build the same topology on shorter inputs.
struct DiscriminatorArch {
  Index input_length = kChannels;
  Index conv_channels = 3;
  Index kernel = 3;
  Index padding = 1;
  Index pool = 2;
  Index hidden1 = 256;
  Index hidden2 = 64;
  double dropout = 0.5;

  // Length after two conv + pool stages (155 for 622 inputs).
  Index feature_length() const;
  Index flat_features() const { return conv_channels * feature_length(); }
  std::string describe() const;
};

/*
 * Shared conv trunk (two conv + avg-pool stages) feeding two MLP heads:
 * a classifier (hidden1 -> hidden2 -> 10, softmax) and a regressor
 * (hidden1 -> hidden2 -> 9 concentrations in ppm). Dropout follows every
 * hidden linear layer.
 */
class DiscriminatorModel {
 public:
  explicit DiscriminatorModel(DiscriminatorArch arch = {});

  // He-scaled hidden layers, +-1/sqrt(fan_in) uniform output layers, zero biases.
  void initialize(Rng& rng);

  struct Outputs {
    Var features;  // pooled output of the last conv stage, [N, C, feature_length]
    Var logits;    // [N, 10]
    Var probs;     // [N, 10]
    Var conc;      // [N, 9]
  };

  // input: [N, 1, input_length]. rng is required when training is true.
  Outputs forward(Tape& tape, const Tensor& input, bool training, Rng* rng = nullptr) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  const DiscriminatorArch& arch() const { return arch_; }

  // Parameters of the final classifier / regressor layers.
  Parameter& classifier_output_weight() { return cls_out_w_; }
  Parameter& classifier_output_bias() { return cls_out_b_; }
  Parameter& regressor_output_weight() { return reg_out_w_; }
  Parameter& regressor_output_bias() { return reg_out_b_; }

 private:
  DiscriminatorArch arch_;
  Parameter conv1_w_, conv1_b_, conv2_w_, conv2_b_;
  Parameter cls_fc1_w_, cls_fc1_b_, cls_fc2_w_, cls_fc2_b_, cls_out_w_, cls_out_b_;
  Parameter reg_fc1_w_, reg_fc1_b_, reg_fc2_w_, reg_fc2_b_, reg_out_w_, reg_out_b_;
};

struct HeadOutputs {
  Eigen::VectorXd class_probs;  // 10
  Eigen::VectorXd conc_vector;  // 9
};

// Single-spectrum forward pass in evaluation mode (or training mode with rng).
HeadOutputs forward(const DiscriminatorModel& model, const Eigen::VectorXd& spectrum,
                    bool training = false, Rng* rng = nullptr);

// Slot-averaged MSE plus cross-entropy, averaged over the batch.
Var discriminator_loss(const Var& probs, const Var& conc, const Var& one_hot,
                       const Var& conc_target);
double discriminator_loss(const Eigen::VectorXd& class_probs, const Eigen::VectorXd& conc_vector,
                          const Eigen::VectorXd& one_hot, const Eigen::VectorXd& conc_target);

struct Prediction {
  Eigen::VectorXd class_probs;
  Eigen::VectorXd conc_vector;
  VocClass predicted_class = VocClass::air;
  double predicted_concentration = 0.0;
};

// Argmax with lowest-index tie-break; concentration read from the predicted
// class's slot (0 for air) and clipped at zero.
Prediction make_prediction(Eigen::VectorXd class_probs, Eigen::VectorXd conc_vector);
Prediction predict(const DiscriminatorModel& model, const Eigen::VectorXd& spectrum);
std::vector<Prediction> predict_all(const DiscriminatorModel& model,
                                    std::span<const Spectrum> spectra);

// Mean composite loss in evaluation mode.
double evaluate_loss(const DiscriminatorModel& model, std::span<const Spectrum> spectra);

// Supplies the spectra for one epoch (the plain train split, or an augmented view).
using EpochProvider = std::function<std::vector<Spectrum>(int epoch, Rng& rng)>;

struct DiscriminatorTrainResult {
  DiscriminatorModel model;
  TrainingHistory history;
};

inline constexpr double kMinActiveFraction = 0.5;
// Initial draws tried until trunk_alive holds on the first training spectra;
// the last draw is kept if none does.
inline constexpr int kMaxInitAttempts = 64;

// True when every last-stage conv channel is positive on at least
// kMinActiveFraction of the (spectrum, position) entries.
bool trunk_alive(const DiscriminatorModel& model, std::span<const Spectrum> spectra);

// Mini-batch training on `train` (or on provider's epoch views) with early
// stopping on the validation loss; returns the best-validation snapshot.
// Throws NumericalError if the loss becomes non-finite.
DiscriminatorTrainResult train_discriminator(std::span<const Spectrum> train,
                                             std::span<const Spectrum> validation,
                                             const TrainConfig& config,
                                             const EpochProvider& provider = {},
                                             DiscriminatorArch arch = {});

DiscriminatorTrainResult train(const Corpus& corpus, int fold, const TrainConfig& config);

}  // namespace vocnet
