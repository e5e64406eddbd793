#include "comute/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>

#include "comute/errors.hpp"
#include "comute/nn/checkpoint.hpp"

namespace comute {

namespace {

namespace fs = std::filesystem;

std::size_t parse_size(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a non-negative integer: '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

double parse_number(const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("not a boolean: '" + s + "'");
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    auto item = s.substr(pos, comma - pos);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    out.push_back(parse_number(item));
    pos = comma + 1;
  }
  return out;
}

std::string join(const auto& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += kv::format_double(values[i]);
  }
  return out;
}

std::string fmt(double v) { return kv::format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define SIZE_FIELD(key, member)                                          \
  Field {                                                                \
    key, [](const ExperimentConfig& c) { return fmt(c.member); },        \
        [](ExperimentConfig& c, const std::string& s) { c.member = parse_size(s); } \
  }
#define NUMBER_FIELD(key, member)                                        \
  Field {                                                                \
    key, [](const ExperimentConfig& c) { return fmt(c.member); },        \
        [](ExperimentConfig& c, const std::string& s) { c.member = parse_number(s); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      NUMBER_FIELD("scenario.area_width", scenario.area_width),
      NUMBER_FIELD("scenario.area_height", scenario.area_height),
      NUMBER_FIELD("scenario.cell_width", scenario.cell_width),
      SIZE_FIELD("scenario.n_links", scenario.n_links),
      SIZE_FIELD("channel.subcarriers_per_pair", channel.subcarriers_per_pair),
      SIZE_FIELD("channel.antenna_pairs", channel.antenna_pairs),
      SIZE_FIELD("channel.baseline_taps", channel.baseline_taps),
      NUMBER_FIELD("channel.diffraction_amp", channel.diffraction_amp),
      NUMBER_FIELD("channel.diffraction_width", channel.diffraction_width),
      NUMBER_FIELD("channel.scatter_amp", channel.scatter_amp),
      NUMBER_FIELD("channel.scatter_decay", channel.scatter_decay),
      NUMBER_FIELD("channel.noise_std", channel.noise_std),
      Field{"channel.seed", [](const ExperimentConfig& c) { return std::to_string(c.channel.seed); },
            [](ExperimentConfig& c, const std::string& s) { c.channel.seed = parse_size(s); }},
      SIZE_FIELD("dataset.images_per_location", dataset.images_per_location),
      SIZE_FIELD("dataset.window", dataset.window),
      NUMBER_FIELD("dataset.multi_label_fraction", dataset.multi_label_fraction),
      SIZE_FIELD("dataset.max_targets_in_training", dataset.max_targets_in_training),
      Field{"dataset.split", [](const ExperimentConfig& c) { return join(c.dataset.split_ratio); },
            [](ExperimentConfig& c, const std::string& s) {
              const auto v = parse_list(s);
              if (v.size() != 3) throw std::invalid_argument("expected three ratios");
              std::copy(v.begin(), v.end(), c.dataset.split_ratio.begin());
            }},
      SIZE_FIELD("model.conv_layers", model.conv_layers),
      SIZE_FIELD("model.kernels", model.kernels),
      SIZE_FIELD("model.kernel_size", model.kernel_size),
      SIZE_FIELD("model.hidden_units", model.hidden_units),
      NUMBER_FIELD("model.dropout", model.dropout),
      SIZE_FIELD("training.batch_size", training.batch_size),
      SIZE_FIELD("training.max_epochs", training.max_epochs),
      Field{"training.optimizer",
            [](const ExperimentConfig& c) { return nn::to_string(c.training.optimizer); },
            [](ExperimentConfig& c, const std::string& s) {
              c.training.optimizer = nn::parse_optimizer_kind(s);
            }},
      NUMBER_FIELD("training.learning_rate", training.learning_rate),
      SIZE_FIELD("training.early_stop_patience", training.early_stop_patience),
      NUMBER_FIELD("training.threshold", training.threshold),
      SIZE_FIELD("eval.targets", eval.targets),
      SIZE_FIELD("eval.images", eval.images),
      Field{"sweep.variable", [](const ExperimentConfig& c) { return c.sweep.variable; },
            [](ExperimentConfig& c, const std::string& s) { c.sweep.variable = s; }},
      Field{"sweep.values", [](const ExperimentConfig& c) { return join(c.sweep.values); },
            [](ExperimentConfig& c, const std::string& s) { c.sweep.values = parse_list(s); }},
      Field{"output.dir", [](const ExperimentConfig& c) { return c.output_dir.generic_string(); },
            [](ExperimentConfig& c, const std::string& s) { c.output_dir = s; }},
      Field{"output.wall_clock",
            [](const ExperimentConfig& c) { return std::string(c.wall_clock ? "true" : "false"); },
            [](ExperimentConfig& c, const std::string& s) { c.wall_clock = parse_bool(s); }},
      Field{"seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
            [](ExperimentConfig& c, const std::string& s) { c.seed = parse_size(s); }},
  };
  return table;
}

#undef SIZE_FIELD
#undef NUMBER_FIELD

std::string describe(const std::vector<ConfigIssue>& issues) {
  std::string out = "invalid config:";
  for (const auto& i : issues) out += "\n  " + i.key + ": " + i.message;
  return out;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Issues of everything except the sweep block.
std::vector<ConfigIssue> check_point(const ExperimentConfig& cfg) {
  std::vector<ConfigIssue> issues;
  auto need = [&](bool ok, const char* key, const std::string& message) {
    if (!ok) issues.push_back({key, message});
  };
  const auto& sc = cfg.scenario;
  need(sc.area_width > 0, "scenario.area_width", "must be > 0");
  need(sc.area_height > 0, "scenario.area_height", "must be > 0");
  need(sc.cell_width > 0, "scenario.cell_width", "must be > 0");
  std::size_t n_grids = 0;
  if (sc.area_width > 0 && sc.area_height > 0 && sc.cell_width > 0) {
    try {
      n_grids = build_scenario(sc.area_width, sc.area_height, sc.cell_width, sc.n_links).n_grids;
    } catch (const NonDivisibleArea& e) {
      issues.push_back({"scenario.cell_width", std::string("NonDivisibleArea: ") + e.what()});
    } catch (const TooManyLinks& e) {
      issues.push_back({"scenario.n_links", std::string("TooManyLinks: ") + e.what()});
    }
  }

  const auto& ch = cfg.channel;
  need(ch.subcarriers_per_pair >= 1, "channel.subcarriers_per_pair", "must be >= 1");
  need(ch.antenna_pairs >= 1, "channel.antenna_pairs", "must be >= 1");
  need(ch.baseline_taps >= 1, "channel.baseline_taps", "must be >= 1");
  need(ch.diffraction_amp >= 0, "channel.diffraction_amp", "must be >= 0");
  need(ch.diffraction_width > 0, "channel.diffraction_width", "must be > 0");
  need(ch.scatter_amp >= 0, "channel.scatter_amp", "must be >= 0");
  need(ch.scatter_decay > 0, "channel.scatter_decay", "must be > 0");
  need(ch.noise_std >= 0, "channel.noise_std", "must be >= 0");

  const auto& ds = cfg.dataset;
  need(ds.images_per_location >= 1, "dataset.images_per_location", "must be >= 1");
  need(ds.window >= 1, "dataset.window", "must be >= 1");
  need(ds.multi_label_fraction >= 0 && ds.multi_label_fraction <= 1,
       "dataset.multi_label_fraction", "must be in [0, 1]");
  const double split_sum = ds.split_ratio[0] + ds.split_ratio[1] + ds.split_ratio[2];
  need(ds.split_ratio[0] > 0 && ds.split_ratio[1] > 0 && ds.split_ratio[2] > 0 &&
           std::abs(split_sum - 1.0) <= 1e-9,
       "dataset.split", "ratios must be positive and sum to 1");
  if (ds.multi_label_fraction > 0 && n_grids > 0) {
    need(ds.max_targets_in_training >= 2 && ds.max_targets_in_training <= n_grids,
         "dataset.max_targets_in_training",
         "InsufficientCombinations: must be in [2, " + std::to_string(n_grids) + "]");
  }

  const auto& m = cfg.model;
  need(m.conv_layers >= 1, "model.conv_layers", "must be >= 1");
  need(m.kernels >= 1, "model.kernels", "must be >= 1");
  need(m.kernel_size % 2 == 1, "model.kernel_size", "must be odd");
  need(m.hidden_units >= 1, "model.hidden_units", "must be >= 1");
  need(m.dropout >= 0 && m.dropout < 1, "model.dropout", "must be in [0, 1)");

  const auto& t = cfg.training;
  need(t.batch_size >= 1, "training.batch_size", "must be >= 1");
  need(t.learning_rate > 0, "training.learning_rate", "must be > 0");
  need(t.threshold > 0 && t.threshold < 1, "training.threshold", "must be in (0, 1)");

  if (n_grids > 0) {
    need(cfg.eval.targets <= n_grids, "eval.targets",
         "must be at most the number of grids (" + std::to_string(n_grids) + ")");
  }
  need(cfg.eval.targets == 0 || cfg.eval.images >= 1, "eval.images", "must be >= 1");
  return issues;
}

double elapsed_seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  channel.subcarriers_per_pair = 10;
  model.dropout = 0.2;
  training.max_epochs = 200;
  training.batch_size = 32;
}

ExperimentConfig full_scale_defaults() {
  ExperimentConfig cfg;
  cfg.channel.subcarriers_per_pair = 30;
  cfg.dataset.window = 90;
  cfg.model.dropout = 0.6;
  cfg.training.batch_size = 256;
  cfg.training.max_epochs = 900;
  return cfg;
}

ConfigInvalid::ConfigInvalid(std::vector<ConfigIssue> issues)
    : std::invalid_argument(describe(issues)), issues_(std::move(issues)) {}

ExperimentConfig parse_config(const kv::Document& doc, const ExperimentConfig& base,
                              std::vector<ConfigIssue>& issues) {
  ExperimentConfig cfg = base;
  for (const auto& [key, value] : doc.entries()) {
    const auto it = std::find_if(fields().begin(), fields().end(),
                                 [&](const Field& f) { return key == f.key; });
    if (it == fields().end()) {
      issues.push_back({key, "unknown key"});
      continue;
    }
    try {
      it->set(cfg, value);
    } catch (const std::exception& e) {
      issues.push_back({key, e.what()});
    }
  }
  return cfg;
}

std::vector<ConfigIssue> check_config(const ExperimentConfig& cfg) {
  auto issues = check_point(cfg);
  const auto& names = sweep_variables();
  if (std::find(names.begin(), names.end(), cfg.sweep.variable) == names.end()) {
    issues.push_back({"sweep.variable", "unknown sweep variable '" + cfg.sweep.variable + "'"});
    return issues;
  }
  if (cfg.sweep.values.empty()) issues.push_back({"sweep.values", "needs at least one value"});
  if (!issues.empty()) return issues;
  for (double v : cfg.sweep.values) {
    try {
      for (const auto& issue : check_point(apply_sweep_value(cfg, v))) {
        issues.push_back({"sweep.values", "value " + fmt(v) + " makes " + issue.key + " invalid: " +
                                              issue.message});
      }
    } catch (const std::exception& e) {
      issues.push_back({"sweep.values", e.what()});
    }
  }
  return issues;
}

ExperimentConfig validate_config(const fs::path& path, bool full_scale) {
  kv::Document doc;
  try {
    doc = kv::Document::load(path);
  } catch (const FormatError& e) {
    throw ConfigInvalid({{path.string(), e.what()}});
  }
  std::vector<ConfigIssue> issues;
  auto cfg = parse_config(doc, full_scale ? full_scale_defaults() : ExperimentConfig{}, issues);
  if (issues.empty()) issues = check_config(cfg);
  if (!issues.empty()) throw ConfigInvalid(std::move(issues));
  return cfg;
}

kv::Document to_document(const ExperimentConfig& cfg) {
  kv::Document doc;
  for (const auto& f : fields()) doc.set(f.key, f.get(cfg));
  return doc;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  auto doc = to_document(cfg);
  // The output location does not affect results.
  doc.set("output.dir", std::string{});
  return fnv1a(doc.str());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

const std::vector<std::string>& sweep_variables() {
  static const std::vector<std::string> names = {
      "training.learning_rate", "eval.targets",          "scenario.n_links",
      "scenario.cell_width",    "channel.noise_std",     "dataset.images_per_location",
      "dataset.multi_label_fraction",
  };
  return names;
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& cfg, double value) {
  ExperimentConfig out = cfg;
  const auto& v = cfg.sweep.variable;
  auto as_count = [&] {
    if (!(value >= 0) || value != std::floor(value)) {
      throw std::invalid_argument("sweep value " + fmt(value) + " of " + v +
                                  " must be a non-negative integer");
    }
    return static_cast<std::size_t>(value);
  };
  if (v == "training.learning_rate") out.training.learning_rate = value;
  else if (v == "eval.targets") out.eval.targets = as_count();
  else if (v == "scenario.n_links") out.scenario.n_links = as_count();
  else if (v == "scenario.cell_width") out.scenario.cell_width = value;
  else if (v == "channel.noise_std") out.channel.noise_std = value;
  else if (v == "dataset.images_per_location") out.dataset.images_per_location = as_count();
  else if (v == "dataset.multi_label_fraction") out.dataset.multi_label_fraction = value;
  else throw std::invalid_argument("unknown sweep variable '" + v + "'");
  return out;
}

DatasetSpec dataset_spec(const ExperimentConfig& cfg) {
  DatasetSpec spec;
  spec.scenario = build_scenario(cfg.scenario.area_width, cfg.scenario.area_height,
                                 cfg.scenario.cell_width, cfg.scenario.n_links);
  spec.channel = cfg.channel;
  spec.images_per_location = cfg.dataset.images_per_location;
  spec.window = cfg.dataset.window;
  spec.multi_label_fraction = cfg.dataset.multi_label_fraction;
  spec.max_targets_in_training = cfg.dataset.max_targets_in_training;
  spec.split_ratio = cfg.dataset.split_ratio;
  spec.seed = cfg.seed;
  return spec;
}

std::uint64_t dataset_hash(const ExperimentConfig& cfg) {
  const auto doc = to_document(cfg);
  std::string text;
  for (const auto& [key, value] : doc.entries()) {
    if (key.starts_with("scenario.") || key.starts_with("channel.") ||
        key.starts_with("dataset.") || key == "seed") {
      text += key + '=' + value + '\n';
    }
  }
  text += "format_version=" + std::to_string(kDatasetFormatVersion) + '\n';
  return fnv1a(text);
}

Dataset load_or_synthesize(const ExperimentConfig& cfg, const fs::path& cache_dir) {
  const auto dir = cache_dir / hex64(dataset_hash(cfg));
  if (fs::exists(dir / "manifest.txt") && fs::exists(dir / "records.bin")) {
    return read_dataset(dir);
  }
  auto ds = synthesize_dataset(dataset_spec(cfg));
  write_dataset(dir, ds);
  return ds;
}

nn::Network<float> make_network(const ExperimentConfig& cfg, const Dataset& ds) {
  return nn::Network<float>(ds.shape, nn::build_layer_specs(cfg.model, ds.n_grids), cfg.seed);
}

std::vector<MltfImage> evaluation_images(const ExperimentConfig& cfg, const Dataset& ds) {
  if (cfg.eval.targets == 0) return ds.test;
  return synthesize_eval_images(dataset_spec(cfg), cfg.eval.targets, cfg.eval.images, ds.stats);
}

void write_training_log(const fs::path& path, const std::vector<EpochRecord>& log) {
  std::string out = "epoch,train_loss,val_loss,val_f1_micro\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + ',' + fmt(r.train_loss) + ',' + fmt(r.val_loss) + ',' +
           fmt(r.val_f1) + '\n';
  }
  kv::write_file(path, out);
}

std::uint64_t training_hash(const ExperimentConfig& cfg) {
  const auto doc = to_document(cfg);
  std::string text;
  for (const auto& [key, value] : doc.entries()) {
    if (!key.starts_with("eval.") && !key.starts_with("sweep.") && !key.starts_with("output.")) {
      text += key + '=' + value + '\n';
    }
  }
  return fnv1a(text);
}

PointResult run_point(const ExperimentConfig& cfg, double sweep_value, const fs::path& dir,
                      const fs::path& cache_dir, const PointResult* previous) {
  const auto point = apply_sweep_value(cfg, sweep_value);
  const auto ds = load_or_synthesize(point, cache_dir);

  const bool reuse = previous && training_hash(apply_sweep_value(cfg, previous->sweep_value)) ==
                                     training_hash(point);
  PointResult result{sweep_value, {},
                     reuse ? previous->training
                           : TrainResult{make_network(point, ds), {}, {}, 0, 0},
                     reuse ? previous->train_seconds : 0.0};
  if (!reuse) {
    const auto start = std::chrono::steady_clock::now();
    result.training = train(ds, make_network(point, ds), point.training);
    result.train_seconds = elapsed_seconds(start);
  }

  const FingerprintBaseline baseline(ds.train, ds.stats, ds.n_grids);
  const auto images = evaluation_images(point, ds);
  const auto scenario = dataset_spec(point).scenario;
  result.evaluation =
      evaluate(result.training.network, &baseline, images, scenario, point.training.threshold);

  write_training_log(dir / "train_log.csv", result.training.log);
  nn::write_checkpoint(dir / "checkpoint", result.training.network, result.training.optimizer);
  return result;
}

fs::path run_experiment(const ExperimentConfig& cfg) {
  if (auto issues = check_config(cfg); !issues.empty()) throw ConfigInvalid(std::move(issues));
  const auto out = cfg.output_dir;
  const auto cache_dir = out / "cache";
  const auto hash = hex64(config_hash(cfg));
  to_document(cfg).save(out / "config.txt");

  std::string header = "# config_hash=" + hash + "\n# seed=" + std::to_string(cfg.seed) +
                       "\n# sweep=" + cfg.sweep.variable +
                       "\n# baseline_mde is given the true target count; the CNN infers it "
                       "by thresholding\n";
  std::string results = header +
                        "sweep_value,f1_micro,hamming_loss,mde_thresholded,mde_known_k,"
                        "baseline_mde,train_seconds\n";
  std::string cdf = header + "sweep_value,method,error_m,cumulative_fraction\n";
  std::string timing = "sweep_value,train_seconds,epochs,best_epoch\n";

  auto append_cdf = [&](double value, const char* method, std::vector<double> errors) {
    std::sort(errors.begin(), errors.end());
    for (std::size_t i = 0; i < errors.size(); ++i) {
      cdf += fmt(value) + ',' + method + ',' + fmt(errors[i]) + ',' +
             fmt(double(i + 1) / double(errors.size())) + '\n';
    }
  };

  std::optional<PointResult> previous;
  for (std::size_t i = 0; i < cfg.sweep.values.size(); ++i) {
    const double value = cfg.sweep.values[i];
    previous = run_point(cfg, value, out / "points" / std::to_string(i), cache_dir,
                         previous ? &*previous : nullptr);
    const auto& r = *previous;
    const auto& e = r.evaluation;
    results += fmt(value) + ',' + fmt(e.f1_micro) + ',' + fmt(e.hamming) + ',' +
               fmt(e.mde_thresholded) + ',' + fmt(e.mde_known_k) + ',' + fmt(e.baseline_mde) +
               ',' + (cfg.wall_clock ? fmt(r.train_seconds) : std::string("nan")) + '\n';
    append_cdf(value, "cnn_thresholded", e.errors_thresholded);
    append_cdf(value, "cnn_known_k", e.errors_known_k);
    append_cdf(value, "baseline", e.errors_baseline);
    timing += fmt(value) + ',' + fmt(r.train_seconds) + ',' +
              std::to_string(r.training.log.size()) + ',' +
              std::to_string(r.training.best_epoch) + '\n';
    // Rewrite after every point so partial sweeps leave usable output.
    kv::write_file(out / "results.csv", results);
    kv::write_file(out / "cdf.csv", cdf);
    kv::write_file(out / "timing.csv", timing);
  }
  return out;
}

}  // namespace comute
