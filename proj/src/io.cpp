#include "vocnet/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vocnet/errors.hpp"

namespace vocnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written as native little-endian doubles");

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string(), 0, 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractViolation("format_double failed");
  return std::string(buf, end);
}

namespace {

struct Line {
  std::size_t number;
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t number = 0;
  while (!text.empty()) {
    ++number;
    const std::size_t end = text.find('\n');
    std::string_view line = text.substr(0, end);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({number, line});
    if (end == std::string_view::npos) break;
    text.remove_prefix(end + 1);
  }
  return lines;
}

struct Field {
  std::string_view text;
  std::size_t column;  // 1-based character column
};

std::vector<Field> split_fields(std::string_view line) {
  std::vector<Field> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const std::size_t stop = comma == std::string_view::npos ? line.size() : comma;
    std::string_view f = line.substr(start, stop - start);
    std::size_t lead = 0;
    while (lead < f.size() && f[lead] == ' ') ++lead;
    f.remove_prefix(lead);
    while (!f.empty() && f.back() == ' ') f.remove_suffix(1);
    fields.push_back({f, start + lead + 1});
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_number(const Field& f, const std::string& source, std::size_t line,
                    std::string_view what) {
  double v = 0.0;
  const char* first = f.text.data();
  const char* last = first + f.text.size();
  if (!f.text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (f.text.empty() || ec != std::errc() || ptr != last) {
    throw DataError(source, line, f.column,
                    std::string(what) + ": cannot parse '" + std::string(f.text) + "' as a number");
  }
  if (!std::isfinite(v)) throw DataError(source, line, f.column, std::string(what) + " is not finite");
  return v;
}

VocClass parse_class_field(const Field& f, const std::string& source, std::size_t line) {
  auto c = parse_class(f.text);
  if (!c) throw DataError(source, line, f.column, "unknown class '" + std::string(f.text) + "'");
  return *c;
}

// Reads "# key=value,key=value" comment lines.
void parse_comment(std::string_view text, std::size_t line, const std::string& source,
                   std::optional<Provenance>& provenance) {
  text.remove_prefix(1);
  for (const Field& f : split_fields(text)) {
    const std::size_t eq = f.text.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string_view key = f.text.substr(0, eq), value = f.text.substr(eq + 1);
    if (key == "format_version" && value != std::to_string(kFormatVersion)) {
      throw DataError(source, line, f.column + 1,
                      "unsupported format_version " + std::string(value));
    }
    if (key == "provenance") {
      provenance = parse_provenance(value);
      if (!provenance) {
        throw DataError(source, line, f.column + 1, "unknown provenance '" + std::string(value) + "'");
      }
    }
  }
}

}  // namespace

std::string spectra_to_csv(std::span<const Spectrum> spectra) {
  std::string out = "# format_version=" + std::to_string(kFormatVersion);
  const bool uniform = !spectra.empty() &&
                       std::all_of(spectra.begin(), spectra.end(), [&](const Spectrum& s) {
                         return s.provenance == spectra.front().provenance;
                       });
  if (uniform) out += ",provenance=" + std::string(provenance_name(spectra.front().provenance));
  out += "\nclass,concentration_ppm";
  for (Index i = 0; i < kChannels; ++i) out += ",a" + std::to_string(i);
  out += '\n';
  for (const Spectrum& s : spectra) {
    validate(s);
    out += class_name(s.label);
    out += ',';
    out += format_double(s.concentration);
    for (Index i = 0; i < s.absorbance.size(); ++i) {
      out += ',';
      out += format_double(s.absorbance[i]);
    }
    out += '\n';
  }
  return out;
}

std::vector<Spectrum> parse_spectra_csv(std::string_view text, const std::string& source) {
  std::optional<Provenance> file_provenance;
  std::vector<Spectrum> spectra;
  bool have_header = false;
  bool provenance_column = false;
  std::size_t expected_fields = 0;
  for (const Line& line : split_lines(text)) {
    if (line.text.empty()) continue;
    if (line.text.front() == '#') {
      parse_comment(line.text, line.number, source, file_provenance);
      continue;
    }
    const auto fields = split_fields(line.text);
    if (!have_header) {
      if (fields.size() < 2 || fields[0].text != "class" || fields[1].text != "concentration_ppm") {
        throw DataError(source, line.number, 1,
                        "header must start with class,concentration_ppm");
      }
      provenance_column = fields.size() > 2 && fields[2].text == "provenance";
      expected_fields = 2 + (provenance_column ? 1 : 0) + static_cast<std::size_t>(kChannels);
      if (fields.size() != expected_fields) {
        throw DataError(source, line.number, fields.back().column,
                        "header has " + std::to_string(fields.size()) + " columns, expected " +
                            std::to_string(expected_fields));
      }
      have_header = true;
      continue;
    }
    if (fields.size() != expected_fields) {
      const std::size_t column = fields.size() > expected_fields
                                     ? fields[expected_fields].column
                                     : line.text.size() + 1;
      throw DataError(source, line.number, column,
                      "row has " + std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(expected_fields));
    }
    Spectrum s;
    s.label = parse_class_field(fields[0], source, line.number);
    s.concentration = parse_number(fields[1], source, line.number, "concentration");
    std::size_t first = 2;
    s.provenance = file_provenance.value_or(Provenance::experimental);
    if (provenance_column) {
      auto p = parse_provenance(fields[2].text);
      if (!p) {
        throw DataError(source, line.number, fields[2].column,
                        "unknown provenance '" + std::string(fields[2].text) + "'");
      }
      s.provenance = *p;
      first = 3;
    }
    s.absorbance.resize(kChannels);
    for (Index i = 0; i < kChannels; ++i) {
      const Field& f = fields[first + static_cast<std::size_t>(i)];
      s.absorbance[i] = parse_number(f, source, line.number, "absorbance");
      if (s.absorbance[i] < 0.0) {
        throw DataError(source, line.number, f.column, "negative absorbance");
      }
    }
    try {
      validate(s);
    } catch (const DataError& e) {
      throw DataError(source, line.number, fields[1].column, e.what());
    }
    spectra.push_back(std::move(s));
  }
  if (!have_header) throw DataError(source, 1, 1, "missing header line");
  return spectra;
}

void write_spectra_csv(const fs::path& path, std::span<const Spectrum> spectra) {
  write_file_atomic(path, spectra_to_csv(spectra));
}

std::vector<Spectrum> read_spectra_csv(const fs::path& path) {
  return parse_spectra_csv(read_file(path), path.string());
}

std::vector<Spectrum> parse_raw_csv(std::string_view text, const std::string& source) {
  std::vector<Spectrum> spectra;
  std::vector<double> wavenumbers;
  std::vector<std::size_t> order;
  bool have_header = false;
  for (const Line& line : split_lines(text)) {
    if (line.text.empty() || line.text.front() == '#') continue;
    const auto fields = split_fields(line.text);
    if (!have_header) {
      const char* names[] = {"class", "pid_ppm", "v1_l", "v2_l"};
      for (std::size_t i = 0; i < 4; ++i) {
        if (fields.size() <= i || fields[i].text != names[i]) {
          throw DataError(source, line.number, i < fields.size() ? fields[i].column : 1,
                          "raw header must start with class,pid_ppm,v1_l,v2_l");
        }
      }
      for (std::size_t i = 4; i < fields.size(); ++i) {
        wavenumbers.push_back(parse_number(fields[i], source, line.number, "wavenumber"));
      }
      if (wavenumbers.size() < 2) {
        throw DataError(source, line.number, 1, "raw header lists fewer than two wavenumbers");
      }
      order.resize(wavenumbers.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return wavenumbers[a] < wavenumbers[b]; });
      for (std::size_t i = 1; i < order.size(); ++i) {
        if (wavenumbers[order[i]] == wavenumbers[order[i - 1]]) {
          throw DataError(source, line.number, fields[4 + order[i]].column, "duplicate wavenumber");
        }
      }
      if (wavenumbers[order.front()] > kGridStart || wavenumbers[order.back()] < kGridStop) {
        throw DataError(source, line.number, fields[4].column,
                        "native range " + format_double(wavenumbers[order.front()]) + "-" +
                            format_double(wavenumbers[order.back()]) +
                            " cm^-1 does not cover 700-1300 cm^-1");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != 4 + wavenumbers.size()) {
      throw DataError(source, line.number, line.text.size() + 1,
                      "row has " + std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(4 + wavenumbers.size()));
    }
    Spectrum s;
    s.provenance = Provenance::experimental;
    s.label = parse_class_field(fields[0], source, line.number);
    const double pid = parse_number(fields[1], source, line.number, "pid_ppm");
    const double v1 = parse_number(fields[2], source, line.number, "v1_l");
    const double v2 = parse_number(fields[3], source, line.number, "v2_l");
    if (s.label == VocClass::air) {
      if (pid != 0.0) throw DataError(source, line.number, fields[1].column, "air row with non-zero pid_ppm");
    } else {
      try {
        s.concentration = cell_concentration(pid, conversion_factor(s.label), v1, v2).concentration;
      } catch (const DomainError& e) {
        throw DataError(source, line.number, fields[1].column, e.what());
      }
    }
    std::vector<double> x(order.size()), y(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      x[i] = wavenumbers[order[i]];
      y[i] = parse_number(fields[4 + order[i]], source, line.number, "absorbance");
    }
    const Eigen::VectorXd& grid = channel_grid();
    s.absorbance.resize(kChannels);
    std::size_t k = 0;
    for (Index g = 0; g < kChannels; ++g) {
      while (k + 2 < x.size() && x[k + 1] < grid[g]) ++k;
      const double t = (grid[g] - x[k]) / (x[k + 1] - x[k]);
      s.absorbance[g] = std::max(0.0, (1.0 - t) * y[k] + t * y[k + 1]);
    }
    spectra.push_back(std::move(s));
  }
  if (!have_header) throw DataError(source, 1, 1, "missing header line");
  return spectra;
}

Json recipe_to_json(const CorpusRecipe& recipe) {
  Json classes = Json::object();
  for (VocClass c : all_classes()) {
    const ClassRecipe& r = recipe.classes[class_index(c)];
    classes[std::string(class_name(c))] = {{"count", r.count}, {"min_ppm", r.min_ppm}, {"max_ppm", r.max_ppm}};
  }
  return {{"format_version", kFormatVersion}, {"seed", recipe.seed}, {"folds", recipe.folds},
          {"classes", classes}};
}

CorpusRecipe recipe_from_json(const Json& j) {
  try {
    CorpusRecipe recipe;
    recipe.seed = j.at("seed").get<std::uint64_t>();
    recipe.folds = j.value("folds", 5);
    for (const auto& [name, value] : j.at("classes").items()) {
      auto c = parse_class(name);
      if (!c) throw DataError("recipe: unknown class '" + name + "'");
      ClassRecipe& r = recipe.classes[class_index(*c)];
      r.count = value.at("count").get<int>();
      r.min_ppm = value.value("min_ppm", 0.0);
      r.max_ppm = value.value("max_ppm", 0.0);
    }
    return recipe;
  } catch (const Json::exception& e) {
    throw DataError(std::string("recipe: ") + e.what());
  }
}

Json template_to_json(const PeakTemplate& tpl) {
  Json peaks = Json::object();
  for (VocClass c : all_classes()) {
    Json list = Json::array();
    for (const Peak& p : tpl.of(c)) {
      list.push_back({{"center", p.center}, {"width", p.width}, {"strength", p.strength}});
    }
    peaks[std::string(class_name(c))] = list;
  }
  return {{"format_version", kFormatVersion},
          {"baseline_amplitude", tpl.baseline_amplitude},
          {"noise_sigma", tpl.noise_sigma},
          {"peaks", peaks}};
}

PeakTemplate template_from_json(const Json& j) {
  try {
    PeakTemplate tpl;
    tpl.baseline_amplitude = j.at("baseline_amplitude").get<double>();
    tpl.noise_sigma = j.at("noise_sigma").get<double>();
    for (const auto& [name, list] : j.at("peaks").items()) {
      auto c = parse_class(name);
      if (!c) throw DataError("template: unknown class '" + name + "'");
      for (const auto& p : list) {
        tpl.peaks[class_index(*c)].push_back(
            {p.at("center").get<double>(), p.at("width").get<double>(), p.at("strength").get<double>()});
      }
    }
    tpl.validate();
    return tpl;
  } catch (const Json::exception& e) {
    throw DataError(std::string("template: ") + e.what());
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'E', 'C', 'N', 'E', 'T', '1'};

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename Params>
std::string layout_string(const std::string& describe, const Params& params) {
  std::string text = describe;
  for (const auto* p : params) text += "|" + p->name + shape_string(p->value.shape());
  return text;
}

Json arch_to_json(const DiscriminatorArch& a) {
  return {{"input_length", a.input_length}, {"conv_channels", a.conv_channels},
          {"kernel", a.kernel},             {"padding", a.padding},
          {"pool", a.pool},                 {"hidden1", a.hidden1},
          {"hidden2", a.hidden2},           {"dropout", a.dropout}};
}

DiscriminatorArch discriminator_arch_from_json(const Json& j) {
  DiscriminatorArch a;
  a.input_length = j.at("input_length").get<Index>();
  a.conv_channels = j.at("conv_channels").get<Index>();
  a.kernel = j.at("kernel").get<Index>();
  a.padding = j.at("padding").get<Index>();
  a.pool = j.at("pool").get<Index>();
  a.hidden1 = j.at("hidden1").get<Index>();
  a.hidden2 = j.at("hidden2").get<Index>();
  a.dropout = j.at("dropout").get<double>();
  return a;
}

Json arch_to_json(const CvaeArch& a) {
  return {{"input_length", a.input_length},
          {"latent", a.latent},
          {"encoder_channels", a.encoder_channels},
          {"kernel", a.kernel},
          {"padding", a.padding},
          {"pool", a.pool},
          {"encoder_cond", a.encoder_cond},
          {"encoder_hidden", a.encoder_hidden},
          {"decoder_emb_hidden", a.decoder_emb_hidden},
          {"decoder_emb_channels", a.decoder_emb_channels},
          {"decoder_cond_hidden", a.decoder_cond_hidden},
          {"transpose_kernels", a.transpose_kernels},
          {"transpose_channels", a.transpose_channels},
          {"transpose_stride", a.transpose_stride},
          {"transpose_padding", a.transpose_padding}};
}

CvaeArch cvae_arch_from_json(const Json& j) {
  CvaeArch a;
  a.input_length = j.at("input_length").get<Index>();
  a.latent = j.at("latent").get<Index>();
  a.encoder_channels = j.at("encoder_channels").get<std::array<Index, 4>>();
  a.kernel = j.at("kernel").get<Index>();
  a.padding = j.at("padding").get<Index>();
  a.pool = j.at("pool").get<Index>();
  a.encoder_cond = j.at("encoder_cond").get<std::array<Index, 2>>();
  a.encoder_hidden = j.at("encoder_hidden").get<Index>();
  a.decoder_emb_hidden = j.at("decoder_emb_hidden").get<Index>();
  a.decoder_emb_channels = j.at("decoder_emb_channels").get<Index>();
  a.decoder_cond_hidden = j.at("decoder_cond_hidden").get<std::array<Index, 2>>();
  a.transpose_kernels = j.at("transpose_kernels").get<std::array<Index, 3>>();
  a.transpose_channels = j.at("transpose_channels").get<std::array<Index, 3>>();
  a.transpose_stride = j.at("transpose_stride").get<Index>();
  a.transpose_padding = j.at("transpose_padding").get<Index>();
  return a;
}

void write_checkpoint(const fs::path& path, Json header,
                      const std::vector<const Parameter*>& params) {
  Json list = Json::array();
  for (const Parameter* p : params) list.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  header["parameters"] = list;
  Json order = Json::array();
  for (VocClass c : all_classes()) order.push_back(class_name(c));
  header["class_order"] = order;
  header["format_version"] = kFormatVersion;
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  const std::uint64_t length = text.size();
  out.append(reinterpret_cast<const char*>(&length), sizeof length);
  out += text;
  for (const Parameter* p : params) {
    out.append(reinterpret_cast<const char*>(p->value.data()),
               sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  write_file_atomic(path, out);
}

struct RawCheckpoint {
  Json header;
  std::string blob;
};

RawCheckpoint read_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::string source = path.string();
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError(source, 0, 0, "not a checkpoint (bad magic)");
  }
  std::uint64_t length = 0;
  std::memcpy(&length, bytes.data() + sizeof kMagic, sizeof length);
  const std::size_t offset = sizeof kMagic + sizeof length;
  if (length > bytes.size() - offset) throw DataError(source, 0, 0, "truncated checkpoint header");
  RawCheckpoint raw;
  try {
    raw.header = Json::parse(bytes.substr(offset, length));
  } catch (const Json::exception& e) {
    throw DataError(source, 0, 0, std::string("checkpoint header: ") + e.what());
  }
  if (raw.header.value("format_version", 0) != kFormatVersion) {
    throw DataError(source, 0, 0, "unsupported checkpoint format_version");
  }
  Json order = Json::array();
  for (VocClass c : all_classes()) order.push_back(class_name(c));
  if (raw.header.value("class_order", Json()) != order) {
    throw DataError(source, 0, 0, "checkpoint class order differs from this build");
  }
  raw.blob = bytes.substr(offset + length);
  return raw;
}

void fill_parameters(const RawCheckpoint& raw, const std::vector<Parameter*>& params,
                     const std::string& expected_hash, const std::string& source) {
  if (raw.header.value("architecture_hash", std::string()) != expected_hash) {
    throw DataError(source, 0, 0, "architecture hash mismatch: checkpoint was written by a different layout");
  }
  const Json& list = raw.header.at("parameters");
  if (list.size() != params.size()) throw DataError(source, 0, 0, "parameter count mismatch");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (list[i].at("name").get<std::string>() != p.name ||
        list[i].at("shape").get<Shape>() != p.value.shape()) {
      throw DataError(source, 0, 0, "parameter " + std::to_string(i) + " does not match " + p.name);
    }
    const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(p.value.size());
    if (offset + bytes > raw.blob.size()) throw DataError(source, 0, 0, "truncated parameter blob");
    std::memcpy(p.value.data(), raw.blob.data() + offset, bytes);
    p.zero_grad();
    offset += bytes;
  }
  if (offset != raw.blob.size()) throw DataError(source, 0, 0, "trailing bytes after parameters");
}

template <typename F>
auto with_json_errors(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw DataError(path.string(), 0, 0, std::string("checkpoint header: ") + e.what());
  }
}

}  // namespace

std::string architecture_hash(const DiscriminatorModel& model) {
  return fnv1a_hex(layout_string(model.arch().describe(), model.parameters()));
}

std::string architecture_hash(const CvaeModel& model) {
  return fnv1a_hex(layout_string(model.arch().describe(), model.parameters()));
}

void save_checkpoint(const fs::path& path, const DiscriminatorModel& model) {
  write_checkpoint(path,
                   {{"model_kind", "discriminator"},
                    {"architecture", arch_to_json(model.arch())},
                    {"architecture_hash", architecture_hash(model)}},
                   model.parameters());
}

void save_checkpoint(const fs::path& path, const CvaeModel& model) {
  write_checkpoint(path,
                   {{"model_kind", "cvae"},
                    {"architecture", arch_to_json(model.arch())},
                    {"architecture_hash", architecture_hash(model)},
                    {"training_tag",
                     {{"held_out_fold", model.training_tag.held_out_fold},
                      {"corpus_fingerprint", model.training_tag.corpus_fingerprint}}}},
                   model.parameters());
}

DiscriminatorModel load_discriminator(const fs::path& path) {
  const RawCheckpoint raw = read_checkpoint(path);
  return with_json_errors(path, [&] {
    if (raw.header.at("model_kind") != "discriminator") {
      throw DataError(path.string(), 0, 0, "checkpoint holds a " +
                                               raw.header.at("model_kind").get<std::string>() +
                                               ", expected a discriminator");
    }
    DiscriminatorModel model(discriminator_arch_from_json(raw.header.at("architecture")));
    fill_parameters(raw, model.parameters(), architecture_hash(model), path.string());
    return model;
  });
}

CvaeModel load_cvae(const fs::path& path) {
  const RawCheckpoint raw = read_checkpoint(path);
  return with_json_errors(path, [&] {
    if (raw.header.at("model_kind") != "cvae") {
      throw DataError(path.string(), 0, 0, "checkpoint holds a " +
                                               raw.header.at("model_kind").get<std::string>() +
                                               ", expected a cvae");
    }
    CvaeModel model(cvae_arch_from_json(raw.header.at("architecture")));
    fill_parameters(raw, model.parameters(), architecture_hash(model), path.string());
    const Json& tag = raw.header.at("training_tag");
    model.training_tag = {tag.at("held_out_fold").get<int>(),
                          tag.at("corpus_fingerprint").get<std::uint64_t>()};
    return model;
  });
}

std::string checkpoint_kind(const fs::path& path) {
  const RawCheckpoint raw = read_checkpoint(path);
  const std::string kind = raw.header.value("model_kind", std::string());
  if (kind != "discriminator" && kind != "cvae") {
    throw DataError(path.string(), 0, 0, "unknown model_kind '" + kind + "'");
  }
  return kind;
}

namespace {

Json mean_se_json(const MeanSE& m) { return {{"mean", m.mean}, {"standard_error", m.standard_error}}; }

MeanSE mean_se_from_json(const Json& j) {
  return {j.at("mean").get<double>(), j.at("standard_error").get<double>()};
}

}  // namespace

Json report_to_json(const MetricReport& report) {
  Json per_class = Json::object();
  for (VocClass c : all_classes()) {
    Json entry = Json::object();
    if (const auto& m = report.class_mse[class_index(c)]) entry["mse"] = mean_se_json(*m);
    if (const auto& r = report.class_r2[class_index(c)]) entry["r2"] = mean_se_json(*r);
    per_class[std::string(class_name(c))] = entry;
  }
  return {{"format_version", kFormatVersion},
          {"model", report.model_name},
          {"folds", report.fold_mse.size()},
          {"accuracy", mean_se_json(report.accuracy)},
          {"mse", mean_se_json(report.mse)},
          {"per_class", per_class},
          {"fold_mse", report.fold_mse},
          {"fold_accuracy", report.fold_accuracy}};
}

MetricReport report_from_json(const Json& j) {
  try {
    MetricReport r;
    r.model_name = j.at("model").get<std::string>();
    r.accuracy = mean_se_from_json(j.at("accuracy"));
    r.mse = mean_se_from_json(j.at("mse"));
    r.fold_mse = j.at("fold_mse").get<std::vector<double>>();
    r.fold_accuracy = j.at("fold_accuracy").get<std::vector<double>>();
    for (const auto& [name, entry] : j.at("per_class").items()) {
      auto c = parse_class(name);
      if (!c) throw DataError("report: unknown class '" + name + "'");
      if (entry.contains("mse")) r.class_mse[class_index(*c)] = mean_se_from_json(entry.at("mse"));
      if (entry.contains("r2")) r.class_r2[class_index(*c)] = mean_se_from_json(entry.at("r2"));
    }
    return r;
  } catch (const Json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

std::string report_to_csv(const MetricReport& report) {
  std::string out = "model,metric,class,mean,standard_error\n";
  auto row = [&](std::string_view metric, std::string_view cls, const MeanSE& m) {
    out += report.model_name + "," + std::string(metric) + "," + std::string(cls) + "," +
           format_double(m.mean) + "," + format_double(m.standard_error) + "\n";
  };
  row("accuracy", "", report.accuracy);
  row("mse", "", report.mse);
  for (VocClass c : all_classes()) {
    if (const auto& m = report.class_mse[class_index(c)]) row("class_mse", class_name(c), *m);
  }
  for (VocClass c : all_classes()) {
    if (const auto& r = report.class_r2[class_index(c)]) row("class_r2", class_name(c), *r);
  }
  return out;
}

std::string predictions_to_csv(std::span<const Spectrum> spectra,
                               std::span<const Prediction> predictions) {
  if (spectra.size() != predictions.size()) throw DimensionError("predictions_to_csv: length mismatch");
  std::string out = "index,true_class,true_ppm,predicted_class,predicted_ppm";
  for (VocClass c : all_classes()) out += ",p_" + std::string(class_name(c));
  out += '\n';
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    const Prediction& p = predictions[i];
    out += std::to_string(i) + "," + std::string(class_name(spectra[i].label)) + "," +
           format_double(spectra[i].concentration) + "," +
           std::string(class_name(p.predicted_class)) + "," + format_double(p.predicted_concentration);
    for (Index k = 0; k < p.class_probs.size(); ++k) out += "," + format_double(p.class_probs[k]);
    out += '\n';
  }
  return out;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::string out = "mode,per_class_count,fold,validation_mse,validation_accuracy\n";
  for (const SweepRow& r : rows) {
    out += std::string(augment_mode_name(r.mode)) + "," + std::to_string(r.per_class_count) + "," +
           std::to_string(r.fold) + "," + format_double(r.validation_mse) + "," +
           format_double(r.validation_accuracy) + "\n";
  }
  return out;
}

Json sweep_to_json(const EnhancedResult& result) {
  Json summary = Json::array();
  for (const SweepSummary& s : result.summary) {
    summary.push_back({{"per_class_count", s.per_class_count},
                       {"mse", {{"mean", s.mean_mse}, {"standard_error", s.se_mse}}},
                       {"accuracy", {{"mean", s.mean_accuracy}, {"standard_error", s.se_accuracy}}}});
  }
  return {{"format_version", kFormatVersion},
          {"mode", augment_mode_name(result.mode)},
          {"selected_count", result.selected_count},
          {"summary", summary}};
}

Json comparison_to_json(const KruskalResult& omnibus, const SignificanceMatrix& m) {
  const Index k = static_cast<Index>(m.names.size());
  Json p = Json::array(), z = Json::array(), sig = Json::array();
  for (Index i = 0; i < k; ++i) {
    Json pr = Json::array(), zr = Json::array(), sr = Json::array();
    for (Index j = 0; j < k; ++j) {
      pr.push_back(m.p(i, j));
      zr.push_back(m.z(i, j));
      sr.push_back(static_cast<bool>(m.significant(i, j)));
    }
    p.push_back(pr);
    z.push_back(zr);
    sig.push_back(sr);
  }
  return {{"format_version", kFormatVersion},
          {"omnibus",
           {{"test", "kruskal_wallis"},
            {"statistic", "H"},
            {"note", "rank statistic H; some sources label the same quantity F"},
            {"h", omnibus.h},
            {"p", omnibus.p},
            {"dof", omnibus.dof},
            {"p_method", omnibus.method == PValueMethod::exact ? "exact" : "asymptotic"}}},
          {"posthoc",
           {{"test", "dunn"},
            {"models", m.names},
            {"alpha", m.alpha},
            {"adjustment", adjustment_name(m.adjustment)},
            {"z", z},
            {"p", p},
            {"significant", sig}}}};
}

std::string significance_to_csv(const SignificanceMatrix& m) {
  std::string out = "model_a,model_b,z,p,significant\n";
  const Index k = static_cast<Index>(m.names.size());
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) {
      out += m.names[i] + "," + m.names[j] + "," + format_double(m.z(i, j)) + "," +
             format_double(m.p(i, j)) + "," + (m.significant(i, j) ? "true" : "false") + "\n";
    }
  }
  return out;
}

std::string saliency_to_csv(const SaliencyMap& map) {
  const Eigen::VectorXd& grid = channel_grid();
  if (map.values.size() != grid.size()) throw DimensionError("saliency_to_csv: expected 622 values");
  std::string out = "wavenumber,saliency\n";
  for (Index i = 0; i < grid.size(); ++i) {
    out += format_double(grid[i]) + "," + format_double(map.values[i]) + "\n";
  }
  return out;
}

}  // namespace vocnet
