#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vocnet/augmentation.hpp"
#include "vocnet/cvae.hpp"
#include "vocnet/dataset.hpp"
#include "vocnet/discriminator.hpp"
#include "vocnet/metrics.hpp"
#include "vocnet/saliency.hpp"
#include "vocnet/stats.hpp"

namespace vocnet {

using Json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;

// Writes to "<path>.tmp" and renames over path. Creates parent directories.
void write_file_atomic(const fs::path& path, std::string_view content);
std::string read_file(const fs::path& path);

// Shortest text that round-trips the double exactly.
std::string format_double(double v);

/*
 * Spectra CSV:
 *   # format_version=1[,provenance=<name>]
 *   class,concentration_ppm,a0,...,a621
 * The provenance tag is written when all rows share one; a per-row
 * "provenance" column after concentration_ppm is also accepted on read.
 * Every parse error names file, line and column (1-based).
 */
std::string spectra_to_csv(std::span<const Spectrum> spectra);
std::vector<Spectrum> parse_spectra_csv(std::string_view text, const std::string& source);
void write_spectra_csv(const fs::path& path, std::span<const Spectrum> spectra);
std::vector<Spectrum> read_spectra_csv(const fs::path& path);

/*
 * Raw instrument CSV:
 *   class,pid_ppm,v1_l,v2_l,<wavenumber>,<wavenumber>,...
 * Absorbance columns are on the instrument's own grid and are linearly
 * interpolated onto channel_grid(); the grid must cover 700-1300 cm^-1.
 * Concentrations go through the conversion factor and cell dilution; air
 * rows must carry pid_ppm 0.
 */
std::vector<Spectrum> parse_raw_csv(std::string_view text, const std::string& source);

Json recipe_to_json(const CorpusRecipe& recipe);
CorpusRecipe recipe_from_json(const Json& j);
Json template_to_json(const PeakTemplate& tpl);
PeakTemplate template_from_json(const Json& j);

/*
 * Checkpoint layout: 8-byte magic "SPECNET1", u64 little-endian header
 * length, a JSON header (format_version, model_kind, architecture,
 * architecture_hash, class_order, parameter names and shapes, training tag
 * for CVAEs), then every parameter as little-endian f64 in header order.
 */
std::string architecture_hash(const DiscriminatorModel& model);
std::string architecture_hash(const CvaeModel& model);

void save_checkpoint(const fs::path& path, const DiscriminatorModel& model);
void save_checkpoint(const fs::path& path, const CvaeModel& model);
DiscriminatorModel load_discriminator(const fs::path& path);
CvaeModel load_cvae(const fs::path& path);
// "discriminator" or "cvae"; throws DataError for anything else.
std::string checkpoint_kind(const fs::path& path);

Json report_to_json(const MetricReport& report);
MetricReport report_from_json(const Json& j);
std::string report_to_csv(const MetricReport& report);

std::string predictions_to_csv(std::span<const Spectrum> spectra,
                               std::span<const Prediction> predictions);

std::string sweep_to_csv(std::span<const SweepRow> rows);
Json sweep_to_json(const EnhancedResult& result);

Json comparison_to_json(const KruskalResult& omnibus, const SignificanceMatrix& matrix);
std::string significance_to_csv(const SignificanceMatrix& matrix);

std::string saliency_to_csv(const SaliencyMap& map);

}  // namespace vocnet
