#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vocnet/autodiff.hpp"
#include "vocnet/dataset.hpp"
#include "vocnet/training.hpp"

namespace vocnet {

/*
 * Conditional VAE layout.
 *
 * Encoder: four conv(k=3, pad=1) + avg-pool(2) stages with 16,16,32,32
 * channels, flattened and concatenated with an MLP over the 9-slot
 * condition (9 -> 32 -> 64), then 64 hidden units feeding two parallel
 * 16-wide heads for mu and log-variance.
 *
 * Decoder: z -> 32 -> 7 * base reshaped to [7, base]; condition -> 32 -> 64
 * -> base reshaped to [1, base]; the 8-channel stack goes through three
 * stride-2 transposed convs (kernels 5, 5, 4; channels 8, 8, 1; padding 1)
 * and an exponential output. base is 77 for 622-channel spectra, and the
 * transposed-conv chain 77 -> 155 -> 311 -> 622 must land exactly on the
 * input length; the constructor rejects lengths where it does not.
 */
// Conditions enter both branches in ppm times this factor, keeping the
// condition embeddings O(1) for the default ranges (up to 60 ppm).
inline constexpr double kConditionScale = 0.05;

struct CvaeArch {
  Index input_length = kChannels;
  Index latent = 16;
  std::array<Index, 4> encoder_channels{16, 16, 32, 32};
  Index kernel = 3;
  Index padding = 1;
  Index pool = 2;
  std::array<Index, 2> encoder_cond{32, 64};
  Index encoder_hidden = 64;
  Index decoder_emb_hidden = 32;
  Index decoder_emb_channels = 7;
  std::array<Index, 2> decoder_cond_hidden{32, 64};
  std::array<Index, 3> transpose_kernels{5, 5, 4};
  std::array<Index, 3> transpose_channels{8, 8, 1};
  Index transpose_stride = 2;
  Index transpose_padding = 1;

  Index encoder_length() const;      // 38 for 622 inputs
  Index encoder_features() const { return encoder_channels[3] * encoder_length(); }
  Index base_length() const;         // 77 for 622 inputs
  // Lengths after each transposed conv, starting from base_length().
  std::array<Index, 3> decoder_lengths() const;
  std::string describe() const;
};

struct LatentStats {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_variance;
};

struct LatentSample {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_variance;
  Eigen::VectorXd z;
};

// Which data a CVAE saw; lets augmentation refuse a model that was trained
// on the validation fold it is about to augment.
struct CvaeTrainingTag {
  int held_out_fold = -1;              // -1: not tied to a fold
  std::uint64_t corpus_fingerprint = 0;
};

class CvaeModel {
 public:
  explicit CvaeModel(CvaeArch arch = {});

  void initialize(Rng& rng);

  struct Encoded {
    Var mu;            // [N, latent]
    Var log_variance;  // [N, latent]
  };

  // spectra: [N, 1, input_length]; conditions: [N, 9].
  Encoded encode(Tape& tape, const Tensor& spectra, const Tensor& conditions) const;
  // z: [N, latent] (a tape node, so reparameterized samples stay differentiable).
  Var decode(Tape& tape, const Var& z, const Tensor& conditions) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  const CvaeArch& arch() const { return arch_; }

  Parameter& mu_weight() { return mu_w_; }
  Parameter& mu_bias() { return mu_b_; }
  Parameter& log_variance_weight() { return lv_w_; }
  Parameter& log_variance_bias() { return lv_b_; }
  Parameter& output_bias() { return tconv_b_[2]; }

  CvaeTrainingTag training_tag;

 private:
  Var param(Tape& tape, const Parameter& p) const;

  CvaeArch arch_;
  std::array<Parameter, 4> enc_conv_w_, enc_conv_b_;
  Parameter enc_cond1_w_, enc_cond1_b_, enc_cond2_w_, enc_cond2_b_;
  Parameter enc_emb_w_, enc_emb_b_;
  Parameter mu_w_, mu_b_, lv_w_, lv_b_;
  Parameter dec_emb1_w_, dec_emb1_b_, dec_emb2_w_, dec_emb2_b_;
  Parameter dec_cond1_w_, dec_cond1_b_, dec_cond2_w_, dec_cond2_b_, dec_cond3_w_, dec_cond3_b_;
  std::array<Parameter, 3> tconv_w_, tconv_b_;
};

// Single-spectrum convenience wrappers.
LatentStats encode(const CvaeModel& model, const Eigen::VectorXd& spectrum,
                   const Eigen::VectorXd& condition);
Eigen::VectorXd decode(const CvaeModel& model, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& condition);

// z = mu + exp(log_variance / 2) * eps with eps ~ N(0, I) drawn from rng.
LatentSample reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_variance,
                            Rng& rng);
// Same with caller-supplied eps (test hook and training path).
Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_variance,
                               const Eigen::VectorXd& eps);
Var reparameterize(const Var& mu, const Var& log_variance, const Tensor& eps);

// 0.5 * sum(mu^2 + exp(lv) - 1 - lv).
double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_variance);
// Channel-mean squared reconstruction error plus kl_weight * KL.
double cvae_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& x_recon,
                 const Eigen::VectorXd& mu, const Eigen::VectorXd& log_variance,
                 double kl_weight = 1.0);
Var cvae_loss(const Var& x, const Var& x_recon, const Var& mu, const Var& log_variance,
              double kl_weight = 1.0);

struct CvaeTrainConfig {
  TrainConfig base{100, 8, 3e-3, OptimizerKind::adam, 0, 20};
  double kl_weight = 1.0;
  // Each epoch cycles every class's spectra up to the largest class count.
  bool balance_classes = true;
};

struct CvaeEpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_recon_mse = 0.0;
};

struct CvaeTrainResult {
  CvaeModel model;
  std::vector<CvaeEpochRecord> history;
  int best_epoch = -1;
  // Reconstruction MSE on the validation set before the first update.
  double initial_recon_mse = 0.0;
};

struct CvaeEvaluation {
  double loss = 0.0;
  double recon_mse = 0.0;
};

// Loss with eps = 0 (posterior means), averaged over the spectra.
CvaeEvaluation evaluate_cvae(const CvaeModel& model, std::span<const Spectrum> spectra,
                             double kl_weight = 1.0);

// Conditions are the ground-truth regression targets of each spectrum. The
// output bias is initialized to log of the mean training absorbance.
// Throws NumericalError on a non-finite loss.
CvaeTrainResult train_cvae(std::span<const Spectrum> train, std::span<const Spectrum> validation,
                           const CvaeTrainConfig& config, CvaeArch arch = {});

// Draws z ~ N(0, I) and decodes with condition regression_target(c, concentration).
std::vector<Spectrum> generate(const CvaeModel& model, VocClass c, double concentration, int n,
                               Rng& rng);

}  // namespace vocnet
