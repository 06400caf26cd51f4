#include "fiberspec/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "fiberspec/dataio.hpp"
#include "fiberspec/error.hpp"
#include "fiberspec/evaluation.hpp"
#include "fiberspec/models.hpp"
#include "fiberspec/synth.hpp"

namespace fiberspec::cli {

namespace fs = std::filesystem;

namespace {

// Every key a run config may set, with its command-line flag.
struct KeyInfo {
  const char* key;
  const char* flag;
  const char* help;
};

constexpr KeyInfo kKeys[] = {
    {"seed", "--seed", "random seed"},
    {"out", "--out", "output directory"},
    {"in", "--in", "input file or directory"},
    {"model", "--model", "model checkpoint"},
    {"manifest", "--manifest", "object manifest CSV"},
    {"spec", "--spec", "synthetic spectra spec"},
    {"quantile", "--quantile", "detector threshold quantile"},
    {"target", "--target", "target textile type for the detector"},
    {"block", "--block", "block size for cube smoothing"},
    {"sg_window", "--sg-window", "Savitzky-Golay window"},
    {"sg_order", "--sg-order", "Savitzky-Golay polynomial order"},
    {"sg_deriv", "--sg-deriv", "Savitzky-Golay derivative order"},
    {"snv", "--snv", "apply SNV (true/false)"},
    {"dark_threshold", "--dark-threshold", "mean reflectance below which spectra are dark"},
    {"dark", "--dark", "dark reference cube header"},
    {"white", "--white", "white reference cube header"},
    {"object_id", "--object-id", "object id for spectra taken from a cube"},
    {"label", "--label", "label for spectra taken from a cube"},
    {"ratios", "--ratios", "train/val/test ratios, e.g. \"0.6 0.2 0.2\""},
    {"lr", "--lr", "initial learning rate"},
    {"batch_size", "--batch-size", "mini-batch size"},
    {"lr_factor", "--lr-factor", "learning-rate reduction factor"},
    {"lr_patience", "--lr-patience", "epochs without improvement before reducing the rate"},
    {"early_stop", "--early-stop", "epochs without improvement before stopping"},
    {"max_epochs", "--max-epochs", "epoch limit"},
    {"min_lr", "--min-lr", "learning-rate floor"},
    {"dense_units", "--dense-units", "classifier dense width"},
    {"dropout", "--dropout", "classifier dropout rate"},
    {"threshold", "--threshold", "detector threshold for histogram plots"},
};

using Config = std::map<std::string, std::string>;

Config defaults_for(const std::string& sub) {
  const auto ct = classifier_train_defaults();
  const auto at = autoencoder_train_defaults();
  const bool ae = sub == "train-autoencoder";
  const auto& t = ae ? at : ct;
  const PipelineConfig p;
  return {
      {"seed", "0"},
      {"quantile", "0.95"},
      {"target", "C1"},
      {"block", std::to_string(p.smooth_block)},
      {"sg_window", std::to_string(p.sg_window)},
      {"sg_order", std::to_string(p.sg_polyorder)},
      {"sg_deriv", std::to_string(p.sg_deriv)},
      {"snv", "true"},
      {"dark_threshold", format_double(p.dark_threshold)},
      {"ratios", "0.6 0.2 0.2"},
      {"lr", format_double(t.initial_lr)},
      {"batch_size", std::to_string(t.batch_size)},
      {"lr_factor", format_double(t.lr_factor)},
      {"lr_patience", std::to_string(t.lr_patience)},
      {"early_stop", std::to_string(t.early_stop_patience)},
      {"max_epochs", std::to_string(t.max_epochs)},
      {"min_lr", format_double(t.min_lr)},
      {"dense_units", "128"},
      {"dropout", "0.5"},
      {"spec", "configs/synthetic.cfg"},
      {"label", "unknown"},
  };
}

// Typed access to the resolved configuration.
class Resolved {
 public:
  explicit Resolved(Config c) : c_(std::move(c)) {}

  bool has(const std::string& k) const { return c_.count(k) && !c_.at(k).empty(); }
  const Config& all() const { return c_; }

  std::string str(const std::string& k) const {
    if (!has(k)) fail(ErrorCode::InvalidConfig, "missing required setting '" + k + "'");
    return c_.at(k);
  }
  double real(const std::string& k) const {
    try {
      return parse_double(str(k), k);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidConfig) throw;
      fail(ErrorCode::InvalidConfig, "'" + k + "' must be a number, got '" + c_.at(k) + "'");
    }
  }
  std::size_t count(const std::string& k) const {
    const double v = real(k);
    if (v < 0 || v != std::floor(v) || v > 1e15) {
      fail(ErrorCode::InvalidConfig, "'" + k + "' must be a non-negative integer");
    }
    return static_cast<std::size_t>(v);
  }
  bool flag(const std::string& k) const {
    const auto v = str(k);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(ErrorCode::InvalidConfig, "'" + k + "' must be true or false");
  }
  fs::path path(const std::string& k) const { return fs::path(str(k)); }

 private:
  Config c_;
};

PipelineConfig pipeline_config(const Resolved& r) {
  PipelineConfig p;
  p.apply_snv = r.flag("snv");
  p.smooth_block = r.count("block");
  p.sg_window = r.count("sg_window");
  p.sg_polyorder = r.count("sg_order");
  p.sg_deriv = r.count("sg_deriv");
  p.dark_threshold = r.real("dark_threshold");
  p.validate();
  return p;
}

nn::TrainConfig train_config(const Resolved& r) {
  nn::TrainConfig t;
  t.initial_lr = r.real("lr");
  t.batch_size = r.count("batch_size");
  t.lr_factor = r.real("lr_factor");
  t.lr_patience = r.count("lr_patience");
  t.early_stop_patience = r.count("early_stop");
  t.max_epochs = r.count("max_epochs");
  t.min_lr = r.real("min_lr");
  t.seed = r.count("seed");
  t.validate();
  return t;
}

void require_exists(const fs::path& p) {
  if (!fs::exists(p)) fail(ErrorCode::IoError, "missing input: " + p.string());
}

std::vector<Spectrum> spectra_of(std::span<const LabeledSpectrum> rows) {
  std::vector<Spectrum> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.spectrum);
  return out;
}

std::string history_csv(const nn::TrainHistory& h) {
  std::string out = "epoch,train_loss,val_loss,val_accuracy,learning_rate,improved\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.val_loss) + ',' +
           (std::isnan(e.val_accuracy) ? std::string() : format_double(e.val_accuracy)) + ',' +
           format_double(e.learning_rate) + ',' + (e.improved ? "1" : "0") + '\n';
  }
  return out;
}

void print_history(std::ostream& out, const nn::TrainHistory& h) {
  const auto& best = h.epochs.at(h.best_epoch);
  out << "epochs run: " << h.epochs.size() << (h.early_stopped ? " (early stop)" : "") << '\n';
  out << "best epoch: " << best.epoch << " val_loss " << best.val_loss;
  if (!std::isnan(best.val_accuracy)) out << " val_accuracy " << percent2(best.val_accuracy) << '%';
  out << '\n';
}

// Groups consecutive rows by object id, keeping first-seen order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> group_rows(std::span<const LabeledSpectrum> rows) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto [it, inserted] = where.try_emplace(rows[i].object_id, groups.size());
    if (inserted) groups.push_back({rows[i].object_id, {}});
    groups[it->second].second.push_back(i);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const Resolved& r, std::ostream& out) {
  const auto spec = SyntheticSpec::load(r.path("spec"));
  const auto dir = r.path("out");
  const std::uint64_t seed = r.count("seed");
  DatasetManifest manifest;
  for (const auto& design : spec.datasets) {
    auto ds = gen_dataset(spec, design, seed);
    write_spectra_csv(dir / (design.tag + ".csv"), ds.spectra);
    for (auto& e : ds.objects) manifest.add(std::move(e));
    out << design.tag << ": " << ds.spectra.size() << " spectra, " << design.types.size() << " textile types";
    if (ds.clipped_values) out << ", WARNING " << ds.clipped_values << " values clipped to [0, 1.5]";
    out << '\n';
  }
  write_manifest(dir / "manifest.csv", manifest);
  out << "signature separation (min cosine distance after SNV): " << min_signature_separation(spec) << '\n';
  return kOk;
}

int cmd_preprocess(const Resolved& r, std::ostream& out) {
  const auto in = r.path("in");
  const auto dir = r.path("out");
  const auto cfg = pipeline_config(r);
  std::vector<LabeledSpectrum> kept;
  std::string excluded = "object_id,label,excluded,total,mean_reflectance,reason\n";
  std::size_t n_excluded_objects = 0;

  if (in.extension() == ".hdr") {
    HyperCube cube = read_cube(in);
    if (cube.stage() == Stage::raw) {
      if (!r.has("dark") || !r.has("white")) {
        fail(ErrorCode::InvalidConfig, "raw cube needs --dark and --white references");
      }
      const CalibrationReference dark(read_cube(r.path("dark")));
      const CalibrationReference white(read_cube(r.path("white")));
      cube = calibrate_reflectance(cube, dark, white);
    }
    const std::string object_id = r.has("object_id") ? r.str("object_id") : in.stem().string();
    const std::string label = r.str("label");
    const auto result = pipeline_apply(cube, cfg);
    std::size_t dark_blocks = 0;
    double dark_sum = 0.0;
    for (const auto& b : result.blocks) {
      if (b.dark.exclude) {
        ++dark_blocks;
        dark_sum += b.dark.mean_reflectance;
      } else {
        kept.push_back({object_id, label, b.spectrum});
      }
    }
    if (dark_blocks) {
      excluded += csv_escape(object_id) + ',' + csv_escape(label) + ',' + std::to_string(dark_blocks) + ',' +
                  std::to_string(result.blocks.size()) + ',' + format_double(dark_sum / static_cast<double>(dark_blocks)) +
                  ",dark\n";
      out << "excluded " << dark_blocks << " dark blocks of " << object_id << '\n';
      if (dark_blocks == result.blocks.size()) ++n_excluded_objects;
    }
    if (result.dropped_blocks) {
      out << "dropped " << result.dropped_blocks << " blocks with " << result.zero_variance_pixels
          << " zero-variance pixels\n";
    }
  } else {
    const auto rows = read_spectra_csv(in, Stage::reflectance);
    const auto groups = group_rows(rows);
    for (const auto& [object_id, idx] : groups) {
      std::size_t dark = 0, flat = 0;
      double dark_sum = 0.0;
      for (auto i : idx) {
        const auto decision = dark_sample_filter(rows[i].spectrum, cfg.dark_threshold);
        if (decision.exclude) {
          ++dark;
          dark_sum += decision.mean_reflectance;
          continue;
        }
        try {
          kept.push_back({rows[i].object_id, rows[i].label, preprocess_spectrum(rows[i].spectrum, cfg)});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ZeroVariance) throw;
          ++flat;
        }
      }
      const std::string& label = rows[idx.front()].label;
      if (dark) {
        excluded += csv_escape(object_id) + ',' + csv_escape(label) + ',' + std::to_string(dark) + ',' +
                    std::to_string(idx.size()) + ',' + format_double(dark_sum / static_cast<double>(dark)) + ",dark\n";
      }
      if (flat) {
        excluded += csv_escape(object_id) + ',' + csv_escape(label) + ',' + std::to_string(flat) + ',' +
                    std::to_string(idx.size()) + ",,zero-variance\n";
      }
      if (dark + flat == idx.size()) {
        ++n_excluded_objects;
        out << "excluded object " << object_id << " (" << label << "): " << dark << " dark and " << flat
            << " constant spectra of " << idx.size() << '\n';
      } else if (dark + flat) {
        out << "excluded " << dark + flat << " of " << idx.size() << " spectra of object " << object_id << '\n';
      }
    }
  }
  if (kept.empty()) fail(ErrorCode::EmptyOutput, "every spectrum of " + in.string() + " was excluded");
  const auto target = dir / (in.stem().string() + ".csv");
  write_spectra_csv(target, kept);
  write_text_file(dir / "excluded.csv", excluded);
  out << "kept " << kept.size() << " spectra, excluded " << n_excluded_objects << " objects -> " << target.string()
      << '\n';
  return kOk;
}

int cmd_split(const Resolved& r, std::ostream& out) {
  const auto rows = read_spectra_csv(r.path("in"), Stage::derivative);
  std::istringstream ratio_text(r.str("ratios"));
  std::array<double, 3> ratios{};
  for (auto& v : ratios) {
    std::string w;
    if (!(ratio_text >> w)) fail(ErrorCode::InvalidConfig, "ratios needs three numbers");
    v = parse_double(w, "ratios");
  }
  std::vector<std::string> labels;
  for (const auto& row : rows) labels.push_back(row.label);
  const auto split = stratified_split(labels, ratios, r.count("seed"));
  const auto dir = r.path("out");
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<LabeledSpectrum> part;
    for (auto i : idx) part.push_back(rows[i]);
    return part;
  };
  write_spectra_csv(dir / "train.csv", pick(split.train));
  write_spectra_csv(dir / "val.csv", pick(split.val));
  write_spectra_csv(dir / "test.csv", pick(split.test));
  write_text_file(dir / "split.csv", split_csv(split, rows));
  out << "train " << split.train.size() << ", val " << split.val.size() << ", test " << split.test.size() << '\n';
  return kOk;
}

std::vector<int> class_indices(std::span<const LabeledSpectrum> rows, std::span<const std::string> labels) {
  std::vector<int> out;
  for (const auto& r : rows) {
    const auto it = std::find(labels.begin(), labels.end(), r.label);
    if (it == labels.end()) fail(ErrorCode::ValidationError, "label '" + r.label + "' is not a classifier class");
    out.push_back(static_cast<int>(it - labels.begin()));
  }
  return out;
}

int cmd_train_classifier(const Resolved& r, std::ostream& out) {
  const auto in = r.path("in");
  const auto train = read_spectra_csv(in / "train.csv", Stage::derivative);
  const auto val = read_spectra_csv(in / "val.csv", Stage::derivative);
  const auto& labels = default_class_labels();
  ClassifierSpec spec;
  spec.dense_units = r.count("dense_units");
  spec.dropout = r.real("dropout");
  spec.n_classes = labels.size();
  const auto cfg = train_config(r);
  auto model = train_classifier(spectra_of(train), class_indices(train, labels), spectra_of(val),
                                class_indices(val, labels), cfg, spec);
  const auto dir = r.path("out");
  const nn::Metadata meta{{"model", "classifier"},
                          {"labels", join_labels(labels)},
                          {"dense_units", std::to_string(spec.dense_units)},
                          {"dropout", format_double(spec.dropout)},
                          {"seed", std::to_string(cfg.seed)},
                          {"init", "kaiming_uniform"}};
  nn::save_checkpoint(model.network, meta, dir / "classifier.fspec");
  write_text_file(dir / "history.csv", history_csv(model.history));
  print_history(out, model.history);
  out << "wrote " << (dir / "classifier.fspec").string() << '\n';
  return kOk;
}

int cmd_train_autoencoder(const Resolved& r, std::ostream& out) {
  const auto in = r.path("in");
  const std::string target = r.str("target");
  auto only_target = [&](std::vector<LabeledSpectrum> rows, const char* which) {
    std::vector<Spectrum> kept;
    for (auto& row : rows) {
      if (row.label == target) kept.push_back(std::move(row.spectrum));
    }
    if (kept.empty()) fail(ErrorCode::ValidationError, std::string(which) + " set has no '" + target + "' spectra");
    return kept;
  };
  const auto train = only_target(read_spectra_csv(in / "train.csv", Stage::derivative), "training");
  const auto val = only_target(read_spectra_csv(in / "val.csv", Stage::derivative), "validation");
  const auto cfg = train_config(r);
  auto model = train_autoencoder(train, val, cfg);
  const double q = r.real("quantile");
  const auto errors = reconstruction_error(model.network, train);
  DetectorModel detector{std::move(model.network), fit_threshold(errors, q), q, target};
  const auto dir = r.path("out");
  save_detector(detector, dir / "detector.fspec");
  write_text_file(dir / "history.csv", history_csv(model.history));
  write_text_file(dir / "threshold.txt", "threshold = " + format_double(detector.threshold) + "\nquantile = " +
                                             format_double(q) + "\ntarget = " + target + "\n");
  print_history(out, model.history);
  out << "threshold (q=" << q << "): " << detector.threshold << '\n';
  out << "wrote " << (dir / "detector.fspec").string() << '\n';
  return kOk;
}

int cmd_classify(const Resolved& r, std::ostream& out) {
  auto ckpt = nn::load_checkpoint(r.path("model"));
  const auto it = ckpt.meta.find("labels");
  if (it == ckpt.meta.end()) fail(ErrorCode::ValidationError, "checkpoint is not a classifier");
  const auto labels = split_labels(it->second);
  const auto manifest = read_manifest(r.path("manifest"));
  const auto rows = read_spectra_csv(r.path("in"), Stage::derivative);
  const auto preds = predict_pixels(ckpt.network, spectra_of(rows));

  std::vector<PixelRecord> records;
  std::map<std::string, std::size_t> next_pixel;
  std::map<std::string, int> truth_cache;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    (void)manifest.at(rows[i].object_id);
    auto [t, inserted] = truth_cache.try_emplace(rows[i].label, 0);
    if (inserted) {
      const auto c = class_of(manifest, labels, rows[i].label);
      if (!c) fail(ErrorCode::ValidationError, "textile type '" + rows[i].label + "' maps to no classifier class");
      t->second = *c;
    }
    records.push_back({rows[i].object_id, next_pixel[rows[i].object_id]++, t->second, preds[i].label,
                       preds[i].probabilities});
  }
  const auto dir = r.path("out");
  write_text_file(dir / "predictions.csv", predictions_csv(records, labels));
  std::size_t correct = 0;
  for (const auto& rec : records) correct += rec.true_label == rec.predicted_label;
  out << "classified " << records.size() << " spectra, pixel accuracy "
      << percent2(records.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(records.size())) << "%\n";
  return kOk;
}

int cmd_detect(const Resolved& r, std::ostream& out) {
  auto detector = load_detector(r.path("model"));
  const auto manifest = read_manifest(r.path("manifest"));
  const auto rows = read_spectra_csv(r.path("in"), Stage::derivative);
  std::string target_fiber;
  for (const auto& e : manifest.entries()) {
    if (e.label == detector.target_label) {
      target_fiber = e.fiber;
      break;
    }
  }
  if (target_fiber.empty()) {
    fail(ErrorCode::ValidationError, "manifest has no object of target type '" + detector.target_label + "'");
  }
  std::vector<SpectraGroup> groups;
  for (const auto& [id, idx] : group_rows(rows)) {
    SpectraGroup g{id, {}};
    for (auto i : idx) g.spectra.push_back(rows[i].spectrum);
    groups.push_back(std::move(g));
  }
  const auto decisions = detect(detector, groups);
  std::vector<DetectionRecord> records;
  std::size_t n_target = 0;
  for (const auto& d : decisions) {
    const auto& entry = manifest.at(d.object_id);
    for (std::size_t p = 0; p < d.pixels.size(); ++p) {
      records.push_back({d.object_id, p, entry.label, entry.fiber == target_fiber, d.pixels[p].target,
                         d.pixels[p].error});
    }
    n_target += d.target;
  }
  write_text_file(r.path("out") / "detections.csv", detections_csv(records));
  out << "threshold " << detector.threshold << " (target " << detector.target_label << "): " << n_target << " of "
      << decisions.size() << " objects detected as target\n";
  return kOk;
}

int cmd_evaluate(const Resolved& r, std::ostream& out) {
  const auto text = read_text_file(r.path("in"));
  const auto manifest = read_manifest(r.path("manifest"));
  const auto ids = manifest.object_ids();
  const auto dir = r.path("out");
  if (text.rfind("object_id,pixel_index,textile_type,", 0) == 0) {
    const auto records = parse_detections_csv(text);
    const auto report = detection_report(ids, records);
    std::optional<double> threshold;
    if (r.has("threshold")) threshold = r.real("threshold");
    else if (r.has("model")) threshold = load_detector(r.path("model")).threshold;
    std::vector<std::pair<std::string, std::vector<double>>> groups;
    for (const auto& rec : records) {
      auto g = std::find_if(groups.begin(), groups.end(), [&](const auto& p) { return p.first == rec.group; });
      if (g == groups.end()) {
        groups.push_back({rec.group, {}});
        g = groups.end() - 1;
      }
      g->second.push_back(rec.error);
    }
    const auto hist = re_histogram(groups, threshold.value_or(-1.0));
    const auto rendered = render_text(report, threshold);
    write_text_file(dir / "report.txt", rendered);
    write_text_file(dir / "detection_table.csv", detection_csv(report));
    write_text_file(dir / "re_histogram.svg", histogram_svg(hist, "Reconstruction error by textile type"));
    out << rendered;
  } else {
    const auto table = parse_predictions_csv(text);
    const auto report = accuracy_report(ids, table.records, table.labels);
    const auto rendered = render_text(report);
    write_text_file(dir / "report.txt", rendered);
    write_text_file(dir / "pixel_confusion.csv", confusion_csv(report.pixel_confusion));
    write_text_file(dir / "object_confusion.csv", confusion_csv(report.object_confusion));
    write_text_file(dir / "pixel_confusion.svg", confusion_svg(report.pixel_confusion, "Pixel confusion"));
    write_text_file(dir / "object_confusion.svg", confusion_svg(report.object_confusion, "Object confusion"));
    std::string objects = "object_id,final_label,margin\n";
    for (const auto& o : report.objects) {
      objects += csv_escape(o.object_id) + ',' + csv_escape(table.labels.at(static_cast<std::size_t>(o.final_label))) +
                 ',' + std::to_string(o.margin) + '\n';
    }
    write_text_file(dir / "objects.csv", objects);
    out << rendered;
  }
  return kOk;
}

struct Subcommand {
  const char* name;
  const char* help;
  std::vector<const char*> inputs;   // settings naming files that must exist
  std::vector<const char*> required; // settings that must be present
  int (*fn)(const Resolved&, std::ostream&);
};

const std::vector<Subcommand>& subcommands() {
  static const std::vector<Subcommand> subs{
      {"synth", "generate synthetic datasets and a manifest", {"spec"}, {"out"}, cmd_synth},
      {"preprocess", "dark filter, SNV and Savitzky-Golay on a spectra CSV or ENVI cube", {"in", "dark", "white"},
       {"in", "out"}, cmd_preprocess},
      {"split", "stratified train/val/test split of a spectra CSV", {"in"}, {"in", "out"}, cmd_split},
      {"train-classifier", "train the 1D-CNN on <in>/train.csv and <in>/val.csv", {"in"}, {"in", "out"},
       cmd_train_classifier},
      {"train-autoencoder", "train the detector on target spectra and fit its threshold", {"in"}, {"in", "out"},
       cmd_train_autoencoder},
      {"classify", "predict per-spectrum classes", {"in", "model", "manifest"}, {"in", "model", "manifest", "out"},
       cmd_classify},
      {"detect", "flag spectra and objects as target or non-target", {"in", "model", "manifest"},
       {"in", "model", "manifest", "out"}, cmd_detect},
      {"evaluate", "pixel/object report from predictions or detections", {"in", "manifest", "model"},
       {"in", "manifest", "out"}, cmd_evaluate},
  };
  return subs;
}

Config read_config_file(const fs::path& path) {
  require_exists(path);
  static const std::set<std::string> known = [] {
    std::set<std::string> k;
    for (const auto& info : kKeys) k.insert(info.key);
    return k;
  }();
  Config c;
  for (const auto& kv : parse_key_values(read_text_file(path))) {
    if (!known.count(kv.key)) {
      fail(ErrorCode::InvalidConfig, path.string() + " line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
    }
    c[kv.key] = kv.value;
  }
  return c;
}

std::size_t thread_cap() {
  const char* env = std::getenv("FIBERSPEC_THREADS");
  if (!env || !*env) return 1;
  const double v = parse_double(env, "FIBERSPEC_THREADS");
  if (v < 1 || v != std::floor(v)) fail(ErrorCode::InvalidConfig, "FIBERSPEC_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"NIR hyperspectral textile classification", "fiberspec"};
  app.require_subcommand(1);
  std::map<std::string, std::string> flag_values;
  std::string config_path;
  std::map<std::string, std::vector<std::pair<std::string, CLI::Option*>>> flag_opts;
  for (const auto& sub : subcommands()) {
    auto* s = app.add_subcommand(sub.name, sub.help);
    s->add_option("--config", config_path, "run config file (key = value)");
    for (const auto& info : kKeys) {
      flag_opts[sub.name].emplace_back(info.key, s->add_option(info.flag, flag_values[info.key], info.help));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kValidation;
  }

  const Subcommand* chosen = nullptr;
  for (const auto& sub : subcommands()) {
    if (app.got_subcommand(sub.name)) chosen = &sub;
  }

  try {
    Config c = defaults_for(chosen->name);
    if (!config_path.empty()) {
      for (auto& [k, v] : read_config_file(config_path)) c[k] = v;
    }
    for (const auto& [key, opt] : flag_opts[chosen->name]) {
      if (opt->count()) c[key] = flag_values[key];
    }
    const Resolved resolved(c);
    for (const char* key : chosen->required) (void)resolved.str(key);
    for (const char* key : chosen->inputs) {
      if (resolved.has(key)) require_exists(resolved.path(key));
    }
    const std::size_t threads = thread_cap();

    std::string echo = "# fiberspec " + std::string(chosen->name) + "\n";
    for (const auto& [k, v] : resolved.all()) echo += k + " = " + v + "\n";
    out << echo << "# threads = " << threads << " (cap; this build computes on one thread)\n";
    const auto dir = resolved.path("out");
    fs::create_directories(dir);
    write_text_file(dir / "run_config.txt", echo);
    return chosen->fn(resolved, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::IoError ? kIo : kValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: IoError: " << e.what() << '\n';
    return kIo;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace fiberspec::cli
