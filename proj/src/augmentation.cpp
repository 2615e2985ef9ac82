#include "vocnet/augmentation.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include "vocnet/errors.hpp"
#include "vocnet/metrics.hpp"

namespace vocnet {

std::string_view augment_mode_name(AugmentMode mode) {
  return mode == AugmentMode::oversample ? "oversample" : "synthetic";
}

AugmentMode parse_augment_mode(std::string_view name) {
  if (name == "oversample") return AugmentMode::oversample;
  if (name == "synthetic") return AugmentMode::synthetic;
  throw DomainError("unknown augmentation mode '" + std::string(name) + "'");
}

void AugmentPlan::validate() const {
  if (std::find(kSweepGrid.begin(), kSweepGrid.end(), per_class_count) == kSweepGrid.end()) {
    throw DomainError("per_class_count " + std::to_string(per_class_count) +
                      " is not on the sweep grid");
  }
  if (!reshuffle_each_epoch) throw DomainError("augmented views are always redrawn each epoch");
  if (mode == AugmentMode::synthetic && cvae_checkpoint.empty()) {
    throw DomainError("synthetic augmentation needs a CVAE checkpoint");
  }
}

std::uint64_t corpus_fingerprint(const Corpus& corpus) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Spectrum& s : corpus.spectra) {
    const int label = class_index(s.label);
    feed(&label, sizeof label);
    feed(&s.concentration, sizeof s.concentration);
    feed(s.absorbance.data(), sizeof(double) * static_cast<std::size_t>(s.absorbance.size()));
  }
  feed(corpus.fold_of.data(), sizeof(int) * corpus.fold_of.size());
  return h;
}

namespace {

std::array<std::vector<std::size_t>, kNumClasses> members_by_class(std::span<const Spectrum> train) {
  std::array<std::vector<std::size_t>, kNumClasses> members;
  for (std::size_t i = 0; i < train.size(); ++i) members[class_index(train[i].label)].push_back(i);
  return members;
}

void require_all_classes(const std::array<std::vector<std::size_t>, kNumClasses>& members) {
  for (VocClass c : all_classes()) {
    if (members[class_index(c)].empty()) {
      throw DataError("class " + std::string(class_name(c)) + " has no training spectra");
    }
  }
}

}  // namespace

std::vector<Spectrum> oversample_epoch(std::span<const Spectrum> train, int per_class_count,
                                       Rng& rng) {
  if (per_class_count < 0) throw DomainError("oversample_epoch: negative count");
  std::vector<Spectrum> view(train.begin(), train.end());
  if (per_class_count == 0) return view;
  const auto members = members_by_class(train);
  require_all_classes(members);
  view.reserve(train.size() + static_cast<std::size_t>(per_class_count) * kNumClasses);
  for (VocClass c : all_classes()) {
    const auto& list = members[class_index(c)];
    std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
    for (int k = 0; k < per_class_count; ++k) view.push_back(train[list[pick(rng)]]);
  }
  return view;
}

std::vector<Spectrum> synthetic_epoch(std::span<const Spectrum> train, const CvaeModel* cvae,
                                      int per_class_count, Rng& rng) {
  if (cvae == nullptr) throw DomainError("synthetic augmentation requires a trained CVAE");
  if (per_class_count < 0) throw DomainError("synthetic_epoch: negative count");
  std::vector<Spectrum> view(train.begin(), train.end());
  if (per_class_count == 0) return view;
  const auto members = members_by_class(train);
  require_all_classes(members);
  for (VocClass c : all_classes()) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i : members[class_index(c)]) {
      lo = std::min(lo, train[i].concentration);
      hi = std::max(hi, train[i].concentration);
    }
    if (c == VocClass::air) lo = hi = 0.0;
    std::uniform_real_distribution<double> draw(lo, hi);
    for (int k = 0; k < per_class_count; ++k) {
      const double conc = lo == hi ? lo : draw(rng);
      auto generated = generate(*cvae, c, conc, 1, rng);
      view.push_back(std::move(generated.front()));
    }
  }
  return view;
}

std::vector<CvaeModel> train_fold_cvaes(const Corpus& corpus, const CvaeTrainConfig& config) {
  std::vector<CvaeModel> models;
  const std::uint64_t fingerprint = corpus_fingerprint(corpus);
  for (int fold = 0; fold < corpus.folds; ++fold) {
    const FoldSplit split = kfold_split(corpus, fold);
    CvaeTrainConfig fold_config = config;
    fold_config.base.seed = derive_seed(config.base.seed, {0xc0aeULL, static_cast<std::uint64_t>(fold)});
    // Snapshot selection runs on the training split too: the held-out fold
    // must never influence a model that later augments it.
    auto result = train_cvae(split.train, split.train, fold_config);
    result.model.training_tag = {fold, fingerprint};
    models.push_back(std::move(result.model));
  }
  return models;
}

DiscriminatorTrainResult train_augmented_fold(const Corpus& corpus, int fold, AugmentMode mode,
                                              int per_class_count, const TrainConfig& config,
                                              const CvaeModel* cvae) {
  const FoldSplit split = kfold_split(corpus, fold);
  if (mode == AugmentMode::synthetic) {
    if (cvae == nullptr) throw DomainError("synthetic augmentation requires a trained CVAE");
    if (cvae->training_tag.held_out_fold != fold ||
        cvae->training_tag.corpus_fingerprint != corpus_fingerprint(corpus)) {
      throw ContractViolation("CVAE for fold " + std::to_string(fold) +
                              " was not trained on this fold's training split");
    }
  }
  const std::span<const Spectrum> train(split.train);
  EpochProvider provider = [&](int, Rng& rng) {
    return mode == AugmentMode::oversample ? oversample_epoch(train, per_class_count, rng)
                                           : synthetic_epoch(train, cvae, per_class_count, rng);
  };
  return train_discriminator(split.train, split.validation, config, provider);
}

EnhancedResult train_enhanced(const Corpus& corpus, AugmentMode mode, const TrainConfig& config,
                              std::span<const CvaeModel> fold_cvaes, std::span<const int> grid) {
  if (grid.empty()) throw DomainError("train_enhanced: empty sweep grid");
  if (mode == AugmentMode::synthetic && static_cast<int>(fold_cvaes.size()) != corpus.folds) {
    throw DomainError("synthetic sweep needs one CVAE per fold (" + std::to_string(corpus.folds) +
                      "), got " + std::to_string(fold_cvaes.size()));
  }
  EnhancedResult result;
  result.mode = mode;
  double best_mse = std::numeric_limits<double>::infinity();
  for (int count : grid) {
    std::vector<DiscriminatorModel> models;
    std::vector<double> mses, accs;
    for (int fold = 0; fold < corpus.folds; ++fold) {
      TrainConfig cell = config;
      cell.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(mode),
                                            static_cast<std::uint64_t>(count),
                                            static_cast<std::uint64_t>(fold)});
      const CvaeModel* cvae = mode == AugmentMode::synthetic ? &fold_cvaes[static_cast<std::size_t>(fold)] : nullptr;
      try {
        auto trained = train_augmented_fold(corpus, fold, mode, count, cell, cvae);
        const FoldSplit split = kfold_split(corpus, fold);
        const auto preds = predict_all(trained.model, split.validation);
        const double mse = concentration_mse(split.validation, preds);
        const double acc = classification_accuracy(split.validation, preds);
        result.rows.push_back({mode, count, fold, mse, acc});
        mses.push_back(mse);
        accs.push_back(acc);
        models.push_back(std::move(trained.model));
      } catch (const std::exception& e) {
        throw NumericalError("[mode=" + std::string(augment_mode_name(mode)) +
                             " count=" + std::to_string(count) + " fold=" + std::to_string(fold) +
                             "] " + e.what());
      }
    }
    const auto mse_stats = mean_standard_error(mses);
    const auto acc_stats = mean_standard_error(accs);
    result.summary.push_back({count, mse_stats.mean, mse_stats.standard_error, acc_stats.mean,
                              acc_stats.standard_error});
    if (mse_stats.mean < best_mse) {
      best_mse = mse_stats.mean;
      result.selected_count = count;
      result.models = std::move(models);
    }
  }
  return result;
}

}  // namespace vocnet
