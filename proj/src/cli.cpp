#include "vocnet/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "vocnet/augmentation.hpp"
#include "vocnet/errors.hpp"
#include "vocnet/io.hpp"
#include "vocnet/metrics.hpp"
#include "vocnet/saliency.hpp"
#include "vocnet/stats.hpp"

namespace vocnet::cli {

namespace {

// Reads {"seed": 7, "train": {"epochs": 50}} style JSON; nested objects map
// to subcommands.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    Json j;
    try {
      input >> j;
    } catch (const Json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const Json& v, const std::string& name) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config value for '" + name + "' must be a scalar or list");
  }

  static void flatten(const Json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        flatten(value, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v, key));
      } else {
        item.inputs.push_back(scalar(value, key));
      }
      items.push_back(std::move(item));
    }
  }
};

struct TrainOptions {
  std::optional<int> epochs, batch_size, patience;
  std::optional<double> learning_rate;
  std::string optimizer = "adam";

  void add(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Maximum epochs");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--learning-rate", learning_rate, "Optimizer step size");
    cmd->add_option("--patience", patience, "Early-stopping patience in epochs");
    cmd->add_option("--optimizer", optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
  }

  TrainConfig apply(TrainConfig base, std::uint64_t seed) const {
    if (epochs) base.epochs = *epochs;
    if (batch_size) base.batch_size = *batch_size;
    if (patience) base.patience = *patience;
    if (learning_rate) base.learning_rate = *learning_rate;
    base.optimizer = parse_optimizer(optimizer);
    base.seed = seed;
    base.validate();
    return base;
  }
};

Corpus load_corpus(const fs::path& path, int folds, std::uint64_t seed) {
  Corpus corpus;
  corpus.spectra = read_spectra_csv(path);
  if (corpus.spectra.empty()) throw DataError(path.string(), 0, 0, "no spectra");
  assign_stratified_folds(corpus, folds, derive_seed(seed, {0xf01dULL}));
  return corpus;
}

fs::path fold_checkpoint(const fs::path& dir, std::string_view stem, int fold) {
  return dir / (std::string(stem) + "_fold" + std::to_string(fold) + ".ckpt");
}

void write_json(const fs::path& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

FoldMetrics validation_metrics(const Corpus& corpus, int fold, const DiscriminatorModel& model) {
  const FoldSplit split = kfold_split(corpus, fold);
  if (split.validation.empty()) throw DataError("fold " + std::to_string(fold) + " has no validation spectra");
  return fold_metrics(split.validation, predict_all(model, split.validation));
}

void print_report(std::ostream& out, const MetricReport& r) {
  out << r.model_name << ": accuracy " << r.accuracy.mean << " +- " << r.accuracy.standard_error
      << ", mse " << r.mse.mean << " +- " << r.mse.standard_error << " ppm^2\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"VOC identification and quantification from IR absorbance spectra", "vocnet"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; command-line flags take priority");
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Master seed for all randomness")->required();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Synthesize a labelled corpus");
  std::string preset = "balanced";
  int per_class = 100, folds = 5;
  std::string out_path, recipe_out, template_path;
  gen->add_option("--preset", preset, "balanced or starved")->check(CLI::IsMember({"balanced", "starved"}));
  gen->add_option("--per-class", per_class, "Spectra per class (balanced preset)")->check(CLI::PositiveNumber);
  gen->add_option("--folds", folds, "Cross-validation folds recorded in the recipe")->check(CLI::Range(2, 20));
  gen->add_option("--template", template_path, "Peak template JSON (default: built-in)");
  gen->add_option("--out", out_path, "Spectra CSV to write")->required();
  gen->add_option("--recipe-out", recipe_out, "Recipe sidecar (default: <out>.recipe.json)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert raw instrument CSV with PID readings");
  std::string raw_path;
  ingest->add_option("--raw", raw_path, "Raw instrument CSV")->required();
  ingest->add_option("--out", out_path, "Spectra CSV to write")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Fold-rotated training");
  std::string data_path, out_dir, model_kind = "basic";
  TrainOptions train_opts;
  std::optional<double> kl_weight;
  train_cmd->add_option("--data", data_path, "Spectra CSV")->required();
  train_cmd->add_option("--model", model_kind, "basic or cvae")->check(CLI::IsMember({"basic", "cvae"}));
  train_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  train_cmd->add_option("--folds", folds, "Cross-validation folds")->check(CLI::Range(2, 20));
  train_cmd->add_option("--kl-weight", kl_weight, "KL weight (cvae)");
  train_opts.add(train_cmd);

  // augment-sweep
  auto* sweep = app.add_subcommand("augment-sweep", "Augmentation count sweep and selection");
  std::string mode_name = "oversample", cvae_dir;
  std::vector<int> grid(kSweepGrid.begin(), kSweepGrid.end());
  sweep->add_option("--data", data_path, "Spectra CSV")->required();
  sweep->add_option("--mode", mode_name, "oversample or synthetic")
      ->check(CLI::IsMember({"oversample", "synthetic"}));
  sweep->add_option("--cvae-dir", cvae_dir, "Directory with cvae_fold<k>.ckpt (synthetic)");
  sweep->add_option("--grid", grid, "Per-class counts to try (subset of 10 20 50 100 150 200)");
  sweep->add_option("--out-dir", out_dir, "Output directory")->required();
  sweep->add_option("--folds", folds, "Cross-validation folds")->check(CLI::Range(2, 20));
  TrainOptions sweep_opts;
  sweep_opts.add(sweep);

  // generate
  auto* gen_spec = app.add_subcommand("generate", "Sample spectra from a CVAE checkpoint");
  std::string checkpoint, class_label;
  double concentration = 0.0;
  int count = 1;
  gen_spec->add_option("--checkpoint", checkpoint, "CVAE checkpoint")->required();
  gen_spec->add_option("--class", class_label, "Class name")->required();
  gen_spec->add_option("--concentration", concentration, "Requested concentration (ppm)")->required();
  gen_spec->add_option("--count", count, "Spectra to draw")->check(CLI::PositiveNumber);
  gen_spec->add_option("--out", out_path, "Spectra CSV to write")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Metrics and predictions on a test CSV");
  std::vector<std::string> checkpoints;
  std::string model_name = "model";
  eval->add_option("--checkpoint", checkpoints, "Discriminator checkpoint(s); one report fold each")->required();
  eval->add_option("--data", data_path, "Test spectra CSV")->required();
  eval->add_option("--name", model_name, "Model name in the report");
  eval->add_option("--out-dir", out_dir, "Output directory")->required();

  // saliency
  auto* sal = app.add_subcommand("saliency", "Abs-CAM map for one spectrum");
  std::size_t row = 0;
  sal->add_option("--checkpoint", checkpoint, "Discriminator checkpoint")->required();
  sal->add_option("--data", data_path, "Spectra CSV")->required();
  sal->add_option("--row", row, "0-based data row")->required();
  sal->add_option("--out", out_path, "Saliency CSV to write")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "Kruskal-Wallis and Dunn comparison of reports");
  std::vector<std::string> reports;
  double alpha = 0.05;
  std::string adjust = "none", p_method = "asymptotic";
  cmp->add_option("--report", reports, "Report JSON files (>= 2)")->required()->expected(2, 64);
  cmp->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(1e-9, 0.5));
  cmp->add_option("--adjust", adjust, "none, bonferroni or holm")
      ->check(CLI::IsMember({"none", "bonferroni", "holm"}));
  cmp->add_option("--p-method", p_method, "asymptotic or exact")
      ->check(CLI::IsMember({"asymptotic", "exact"}));
  cmp->add_option("--out-dir", out_dir, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      CorpusRecipe recipe = preset == "starved" ? CorpusRecipe::starved(seed)
                                                : CorpusRecipe::balanced(per_class, seed);
      recipe.folds = folds;
      const PeakTemplate tpl = template_path.empty()
                                   ? PeakTemplate::standard()
                                   : template_from_json(Json::parse(read_file(template_path)));
      const Corpus corpus = build_corpus(recipe, tpl);
      write_spectra_csv(out_path, corpus.spectra);
      Json sidecar = recipe_to_json(recipe);
      sidecar["preset"] = preset;
      sidecar["template"] = template_to_json(tpl);
      write_json(recipe_out.empty() ? out_path + ".recipe.json" : recipe_out, sidecar);
      out << "wrote " << corpus.size() << " spectra to " << out_path << "\n";
    } else if (ingest->parsed()) {
      const auto spectra = parse_raw_csv(read_file(raw_path), raw_path);
      write_spectra_csv(out_path, spectra);
      out << "ingested " << spectra.size() << " spectra into " << out_path << "\n";
    } else if (train_cmd->parsed()) {
      const Corpus corpus = load_corpus(data_path, folds, seed);
      if (model_kind == "basic") {
        const TrainConfig cfg = train_opts.apply({}, seed);
        std::vector<FoldMetrics> metrics;
        for (int fold = 0; fold < corpus.folds; ++fold) {
          TrainConfig fold_cfg = cfg;
          fold_cfg.seed = derive_seed(seed, {static_cast<std::uint64_t>(fold)});
          const auto result = train(corpus, fold, fold_cfg);
          save_checkpoint(fold_checkpoint(out_dir, "basic", fold), result.model);
          metrics.push_back(validation_metrics(corpus, fold, result.model));
        }
        const MetricReport report = make_report("basic", metrics);
        write_json(fs::path(out_dir) / "report.json", report_to_json(report));
        write_file_atomic(fs::path(out_dir) / "report.csv", report_to_csv(report));
        print_report(out, report);
      } else {
        CvaeTrainConfig cc;
        cc.base = train_opts.apply(cc.base, seed);
        if (kl_weight) cc.kl_weight = *kl_weight;
        const auto models = train_fold_cvaes(corpus, cc);
        Json folds_json = Json::array();
        for (int fold = 0; fold < corpus.folds; ++fold) {
          save_checkpoint(fold_checkpoint(out_dir, "cvae", fold), models[fold]);
          const FoldSplit split = kfold_split(corpus, fold);
          const auto held_out = evaluate_cvae(models[fold], split.validation, cc.kl_weight);
          folds_json.push_back({{"fold", fold},
                                {"held_out_loss", held_out.loss},
                                {"held_out_recon_mse", held_out.recon_mse}});
        }
        write_json(fs::path(out_dir) / "report.json",
                   {{"format_version", kFormatVersion}, {"model", "cvae"}, {"folds", folds_json}});
        out << "trained " << models.size() << " fold CVAEs into " << out_dir << "\n";
      }
    } else if (sweep->parsed()) {
      for (int g : grid) {
        if (std::find(kSweepGrid.begin(), kSweepGrid.end(), g) == kSweepGrid.end()) {
          throw DomainError("--grid value " + std::to_string(g) + " is not one of 10 20 50 100 150 200");
        }
      }
      const Corpus corpus = load_corpus(data_path, folds, seed);
      const AugmentMode mode = parse_augment_mode(mode_name);
      std::vector<CvaeModel> cvaes;
      if (mode == AugmentMode::synthetic) {
        if (cvae_dir.empty()) {
          throw DomainError("synthetic mode needs --cvae-dir; create it with: vocnet --seed <s> train --model cvae --data " +
                            data_path + " --out-dir <dir>");
        }
        for (int fold = 0; fold < corpus.folds; ++fold) {
          const fs::path p = fold_checkpoint(cvae_dir, "cvae", fold);
          if (!fs::exists(p)) {
            throw DataError(p.string(), 0, 0,
                            "missing CVAE checkpoint; train the fold CVAEs first with: vocnet --seed " +
                                std::to_string(seed) + " train --model cvae --data " + data_path +
                                " --out-dir " + cvae_dir);
          }
          cvaes.push_back(load_cvae(p));
        }
      }
      const TrainConfig cfg = sweep_opts.apply({}, seed);
      const EnhancedResult result = train_enhanced(corpus, mode, cfg, cvaes, grid);
      write_file_atomic(fs::path(out_dir) / "sweep.csv", sweep_to_csv(result.rows));
      Json sweep_json = sweep_to_json(result);
      std::vector<FoldMetrics> metrics;
      for (int fold = 0; fold < corpus.folds; ++fold) {
        const fs::path ckpt = fold_checkpoint(out_dir, mode_name, fold);
        save_checkpoint(ckpt, result.models[fold]);
        sweep_json["selected_checkpoints"].push_back(ckpt.filename().string());
        metrics.push_back(validation_metrics(corpus, fold, result.models[fold]));
      }
      write_json(fs::path(out_dir) / "sweep.json", sweep_json);
      const MetricReport report = make_report(mode_name, metrics);
      write_json(fs::path(out_dir) / "report.json", report_to_json(report));
      write_file_atomic(fs::path(out_dir) / "report.csv", report_to_csv(report));
      out << "selected " << result.selected_count << " per class\n";
      print_report(out, report);
    } else if (gen_spec->parsed()) {
      const auto c = parse_class(class_label);
      if (!c) throw DomainError("unknown class '" + class_label + "'");
      const CvaeModel model = load_cvae(checkpoint);
      Rng rng = make_rng(seed, {0x9e11ULL});
      const auto spectra = generate(model, *c, concentration, count, rng);
      write_spectra_csv(out_path, spectra);
      out << "generated " << spectra.size() << " spectra into " << out_path << "\n";
    } else if (eval->parsed()) {
      const auto test = read_spectra_csv(data_path);
      if (test.empty()) throw DataError(data_path, 0, 0, "no spectra");
      std::vector<FoldMetrics> metrics;
      for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        const DiscriminatorModel model = load_discriminator(checkpoints[k]);
        const auto preds = predict_all(model, test);
        write_file_atomic(fs::path(out_dir) / ("predictions_" + std::to_string(k) + ".csv"),
                          predictions_to_csv(test, preds));
        metrics.push_back(fold_metrics(test, preds));
      }
      const MetricReport report = make_report(model_name, metrics);
      write_json(fs::path(out_dir) / "report.json", report_to_json(report));
      write_file_atomic(fs::path(out_dir) / "report.csv", report_to_csv(report));
      print_report(out, report);
    } else if (sal->parsed()) {
      const auto spectra = read_spectra_csv(data_path);
      if (row >= spectra.size()) {
        throw DomainError("--row " + std::to_string(row) + " out of range (" +
                          std::to_string(spectra.size()) + " rows)");
      }
      const DiscriminatorModel model = load_discriminator(checkpoint);
      const SaliencyMap map = abs_cam(model, spectra[row].absorbance);
      if (map.degenerate) err << "warning: model produced no activation; saliency map is all zero\n";
      write_file_atomic(out_path, saliency_to_csv(map));
      out << "wrote saliency for row " << row << " to " << out_path << "\n";
    } else if (cmp->parsed()) {
      std::vector<Sample> groups;
      std::vector<std::string> names;
      for (const std::string& path : reports) {
        MetricReport r = report_from_json(Json::parse(read_file(path)));
        std::string name = r.model_name;
        for (int k = 2; std::find(names.begin(), names.end(), name) != names.end(); ++k) {
          name = r.model_name + "#" + std::to_string(k);
        }
        names.push_back(name);
        groups.push_back(r.fold_mse);
      }
      const auto method = p_method == "exact" ? PValueMethod::exact : PValueMethod::asymptotic;
      const KruskalResult omnibus = kruskal_wallis(groups, method);
      const SignificanceMatrix matrix = dunn_posthoc(groups, alpha, parse_adjustment(adjust), names);
      write_json(fs::path(out_dir) / "comparison.json", comparison_to_json(omnibus, matrix));
      write_file_atomic(fs::path(out_dir) / "significance.csv", significance_to_csv(matrix));
      out << "Kruskal-Wallis H = " << omnibus.h << ", p = " << omnibus.p << " (dof " << omnibus.dof << ")\n";
    }
    return kExitOk;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DomainError& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Json::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace vocnet::cli
