#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "rqen/checkpoint.hpp"
#include "rqen/errors.hpp"
#include "rqen/evaluation.hpp"
#include "rqen/kernels.hpp"
#include "rqen/training.hpp"

namespace rqen::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_dashes(std::string key) {
  while (!key.empty() && key.front() == '-') key.erase(key.begin());
  return key;
}

// Name of the long option an argument sets, or "" when it is not an option.
std::string option_key(const std::string& arg) {
  if (arg.size() < 3 || arg.compare(0, 2, "--") != 0) return "";
  return arg.substr(2, arg.find('=') == std::string::npos ? std::string::npos : arg.find('=') - 2);
}

std::filesystem::path default_metrics_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  return p.replace_extension(".metrics.csv");
}

// ---- shared options ---------------------------------------------------------

struct TrainFlags {
  std::size_t epochs = 1;
  std::size_t steps_per_epoch = 0;
  std::size_t batch = 8;
  std::size_t frames_per_sample = 8;
  double lr = 0.05;
  double momentum = 0.9;
  double margin = 0.3;
  std::string regions = "uml";
  bool quality_fixed = false;
  bool no_l2 = false;

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.epochs = epochs;
    c.steps_per_epoch = steps_per_epoch;
    c.batch_size = batch;
    c.frames_per_sample = frames_per_sample;
    c.learning_rate = lr;
    c.momentum = momentum;
    c.margin = margin;
    c.model.regions = RegionMask::parse(regions);
    c.model.quality_fixed = quality_fixed;
    c.model.l2_normalize = !no_l2;
    c.seed = seed;
    c.validate();
    return c;
  }
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--epochs", f.epochs, "passes over the training tracklets")->capture_default_str();
  app->add_option("--steps-per-epoch", f.steps_per_epoch, "0: ceil(tracklets / batch)")
      ->capture_default_str();
  app->add_option("--batch", f.batch, "triplets per step")->capture_default_str();
  app->add_option("--frames-per-sample", f.frames_per_sample, "frames drawn per tracklet")
      ->capture_default_str();
  app->add_option("--lr", f.lr, "learning rate")->capture_default_str();
  app->add_option("--momentum", f.momentum)->capture_default_str();
  app->add_option("--margin", f.margin, "triplet margin")->capture_default_str();
  app->add_option("--regions", f.regions, "active regions, e.g. uml or m")->capture_default_str();
  app->add_flag("--quality-fixed", f.quality_fixed, "all quality scores equal (average pooling)");
  app->add_flag("--no-l2", f.no_l2, "skip the per-part L2 normalization");
}

struct SplitFlags {
  std::string protocol = "fifty-fifty-cross-camera";
  std::vector<std::string> test_cams;
  std::string probe_cam;
};

void add_split_flags(CLI::App* app, SplitFlags& f) {
  app->add_option("--protocol", f.protocol, "fifty-fifty-cross-camera or scene-split")
      ->capture_default_str();
  app->add_option("--test-cams", f.test_cams, "scene-split: cameras of the test scene")
      ->delimiter(',');
  app->add_option("--probe-cam", f.probe_cam, "scene-split: probe camera");
}

int camera_index(const Dataset& ds, const std::string& name) {
  const auto it = std::find(ds.camera_names.begin(), ds.camera_names.end(), name);
  if (it == ds.camera_names.end()) throw DataError("unknown camera '" + name + "'");
  return static_cast<int>(it - ds.camera_names.begin());
}

SplitOptions split_options(const Dataset& ds, const SplitFlags& f) {
  SplitOptions o;
  for (const auto& c : f.test_cams) o.test_cameras.push_back(camera_index(ds, c));
  if (!f.probe_cam.empty()) o.probe_camera = camera_index(ds, f.probe_cam);
  return o;
}

void add_config_option(CLI::App* app) {
  app->add_option("--config", "file of key = value lines standing in for flags");
}

// ---- gen-synth --------------------------------------------------------------

struct GenSynthFlags {
  std::string out;
  SynthConfig config;
  std::string occlude;
};

void register_gen_synth(CLI::App* app, GenSynthFlags& f) {
  SynthConfig& c = f.config;
  app->add_option("--out", f.out, "output directory")->required();
  app->add_option("--ids", c.identities, "identities")->capture_default_str();
  app->add_option("--cams", c.cameras, "cameras")->capture_default_str();
  app->add_option("--tracklets", c.tracklets_per_camera, "tracklets per identity and camera")
      ->capture_default_str();
  app->add_option("--frames", c.frames, "frames per tracklet")->capture_default_str();
  app->add_option("--height", c.height)->capture_default_str();
  app->add_option("--width", c.width)->capture_default_str();
  app->add_option("--occlude", f.occlude, "REGION:FRACTION, e.g. m:0.5");
  app->add_option("--occluder-intensity", c.occlusion.intensity)->capture_default_str();
  app->add_option("--noise", c.noise, "pixel noise std-dev")->capture_default_str();
  app->add_option("--palette", c.palette_size, "colours per band")->capture_default_str();
  app->add_option("--texture", c.texture_amplitude)->capture_default_str();
  app->add_option("--camera-shift", c.camera_shift, "per-camera colour cast")
      ->capture_default_str();
  app->add_option("--landmark-dropout", c.landmark_dropout)->capture_default_str();
  app->add_option("--seed", c.seed)->capture_default_str();
  add_config_option(app);
}

OcclusionSpec parse_occlusion(const std::string& text, double intensity) {
  const auto colon = text.find(':');
  if (colon != 1) throw std::invalid_argument("--occlude expects REGION:FRACTION, got '" + text + "'");
  OcclusionSpec spec;
  spec.region = parse_region(text[0]);
  try {
    std::size_t used = 0;
    spec.fraction = std::stod(text.substr(2), &used);
    if (used != text.size() - 2) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("--occlude expects REGION:FRACTION, got '" + text + "'");
  }
  spec.intensity = intensity;
  return spec;
}

int cmd_gen_synth(GenSynthFlags& f, std::ostream& out) {
  if (!f.occlude.empty()) {
    f.config.occlusion = parse_occlusion(f.occlude, f.config.occlusion.intensity);
  }
  f.config.validate();
  const DatasetManifest m = synth_generate(f.config, f.out);
  std::set<std::string> tracklets;
  for (const auto& r : m.rows) tracklets.insert(r.tracklet_id);
  out << "wrote " << tracklets.size() << " tracklets, " << m.rows.size() << " frames to "
      << f.out << " (seed " << f.config.seed << ")\n";
  return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainCmdFlags {
  std::string data;
  std::string out;
  std::string metrics;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> split_seed;
  bool fit_layout = false;
  std::size_t log_every = 10;
  TrainFlags train;
  SplitFlags split;
};

void register_train(CLI::App* app, TrainCmdFlags& f) {
  app->add_option("--data", f.data, "dataset directory or manifest")->required();
  app->add_option("--out", f.out, "checkpoint path")->required();
  app->add_option("--metrics", f.metrics, "metrics CSV (default: <out>.metrics.csv)");
  app->add_option("--seed", f.seed)->capture_default_str();
  app->add_option("--split-seed", f.split_seed, "identity split seed (default: --seed)");
  app->add_flag("--fit-layout", f.fit_layout, "fit the region layout to the landmarks");
  app->add_option("--log-every", f.log_every, "progress line every N steps, 0 for none")
      ->capture_default_str();
  add_train_flags(app, f.train);
  add_split_flags(app, f.split);
  add_config_option(app);
}

RegionLayout fitted_layout(const Dataset& ds, const std::vector<std::size_t>& tracklets,
                           std::ostream& out) {
  const DatasetManifest m = read_manifest(ds.root);
  if (!m.landmarks) throw DataError("--fit-layout: dataset has no landmarks.tsv");
  std::set<std::string> frames;
  for (std::size_t i : tracklets)
    frames.insert(ds.tracklets[i].frame_paths.begin(), ds.tracklets[i].frame_paths.end());
  std::vector<LandmarkSet> sets;
  for (auto& s : read_landmarks(*m.landmarks))
    if (frames.count(s.frame)) sets.push_back(std::move(s));
  const LayoutFit fit = fit_region_layout(sets);
  if (fit.fell_back) out << "warning: " << fit.warning << "\n";
  const auto r = fit.layout.ratio();
  char line[128];
  std::snprintf(line, sizeof line, "region layout %.3f:%.3f:%.3f\n", r[0], r[1], r[2]);
  out << line;
  return fit.layout;
}

int cmd_train(const TrainCmdFlags& f, std::ostream& out) {
  TrainConfig config = f.train.config(f.seed);
  const Dataset ds = load_dataset(f.data);
  const Protocol protocol = parse_protocol(f.split.protocol);
  const SplitOptions options = split_options(ds, f.split);
  const std::uint64_t split_seed = f.split_seed.value_or(f.seed);
  const DatasetSplit split = split_protocol(ds, protocol, split_seed, options);
  const RegionLayout layout = f.fit_layout ? fitted_layout(ds, split.train, out) : RegionLayout{};

  config.model.backbone.input_channels = ds.frame_shape()[0];
  config.model.backbone.input_height = ds.frame_shape()[1];
  config.model.backbone.input_width = ds.frame_shape()[2];
  out << "training on " << split.train.size() << " tracklets of " << split.train_identities.size()
      << " identities (" << protocol_name(protocol) << ", split seed " << split_seed << ", seed "
      << f.seed << ")\n";

  const auto t0 = std::chrono::steady_clock::now();
  const auto log = [&](const StepMetrics& m) {
    if (f.log_every == 0 || m.step % f.log_every != 0) return;
    char line[160];
    std::snprintf(line, sizeof line, "step %5zu  loss %.4f  softmax %.4f  triplet %.4f\n", m.step,
                  m.loss_total, m.loss_softmax, m.loss_triplet);
    out << line << std::flush;
  };
  const TrainResult result = train(ds, split.train, config, layout, log);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Checkpoint ckpt;
  ckpt.config = result.config;
  ckpt.layout = layout;
  ckpt.params = result.params;
  ckpt.split = TrainingSplit{protocol, split_seed, options.test_cameras, options.probe_camera};
  save_checkpoint(f.out, ckpt);
  const std::filesystem::path metrics = f.metrics.empty() ? default_metrics_path(f.out)
                                                          : std::filesystem::path(f.metrics);
  write_metrics_csv(metrics, result.metrics);
  char line[160];
  std::snprintf(line, sizeof line, "%zu steps in %.1f s, final loss %.4f\n", result.metrics.size(),
                secs, result.metrics.empty() ? 0.0 : result.metrics.back().loss_total);
  out << line << "checkpoint " << f.out << ", metrics " << metrics.string() << "\n";
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalFlags {
  std::string data;
  std::string model;
  bool retrain = false;
  std::size_t trials = 10;
  std::string ranks = "1,5,10,20";
  std::uint64_t seed = 0;
  std::string csv = "cmc.csv";
  std::string summary;
  std::string svg;
  bool compare_qfix = false;
  bool allow_missing = false;
  TrainFlags train;
  SplitFlags split;
};

void register_eval(CLI::App* app, EvalFlags& f) {
  app->add_option("--data", f.data, "dataset directory or manifest")->required();
  auto* model = app->add_option("--model", f.model, "checkpoint to evaluate");
  auto* retrain = app->add_flag("--retrain", f.retrain, "train a fresh model in every trial");
  model->excludes(retrain);
  app->add_option("--trials", f.trials)->capture_default_str();
  app->add_option("--ranks", f.ranks, "comma-separated CMC ranks")->capture_default_str();
  app->add_option("--seed", f.seed)->capture_default_str();
  app->add_option("--csv", f.csv, "CMC table")->capture_default_str();
  app->add_option("--summary", f.summary, "text summary file");
  app->add_option("--svg", f.svg, "CMC plot");
  app->add_flag("--compare-qfix", f.compare_qfix, "also score the model with equal quality scores");
  app->add_flag("--allow-missing", f.allow_missing,
                "count probes without a gallery match as misses");
  add_train_flags(app, f.train);
  add_split_flags(app, f.split);
  add_config_option(app);
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const std::vector<std::size_t> ranks = parse_ranks(f.ranks);
  if (f.model.empty() && !f.retrain) throw std::invalid_argument("eval needs --model or --retrain");
  if (f.compare_qfix && f.retrain) {
    throw std::invalid_argument("--compare-qfix evaluates a trained --model");
  }
  if (f.trials < 1) throw std::invalid_argument("--trials must be at least 1");
  const Dataset ds = load_dataset(f.data);

  TrialPlan plan;
  plan.allow_missing = f.allow_missing;
  std::string title;
  std::vector<std::pair<std::string, const CmcResult*>> series;
  AggregatorComparison cmp;
  CmcResult single;
  char header[256];

  if (!f.model.empty()) {
    const Checkpoint ckpt = load_checkpoint(f.model);
    if (ckpt.split) {
      plan.protocol = ckpt.split->protocol;
      plan.fixed_split_seed = ckpt.split->seed;
      plan.options.test_cameras = ckpt.split->test_cameras;
      plan.options.probe_camera = ckpt.split->probe_camera;
    } else {
      plan.protocol = parse_protocol(f.split.protocol);
      plan.options = split_options(ds, f.split);
      out << "warning: checkpoint records no training split; test identities may overlap it\n";
    }
    std::snprintf(header, sizeof header, "%s, %s, seed %llu", f.model.c_str(),
                  protocol_name(plan.protocol).c_str(), static_cast<unsigned long long>(f.seed));
    if (f.compare_qfix) {
      cmp = compare_aggregators(ds, ckpt.params, ckpt.config, ckpt.layout, plan, f.trials, f.seed,
                                ranks);
      series = {{"quality", &cmp.quality}, {"qfix", &cmp.uniform}};
    } else {
      const TrialModel fixed = [&ckpt](const Dataset&, const DatasetSplit&, std::uint64_t) {
        return model_encoder(ckpt.params, ckpt.config, ckpt.layout);
      };
      single = repeated_trials(ds, fixed, plan, f.trials, f.seed, ranks);
      series = {{"model", &single}};
    }
  } else {
    plan.protocol = parse_protocol(f.split.protocol);
    plan.options = split_options(ds, f.split);
    std::vector<ParamStore> trained;
    trained.reserve(f.trials);
    const TrialModel retrain = [&](const Dataset& d, const DatasetSplit& split, std::uint64_t seed) {
      TrainConfig config = f.train.config(seed);
      config.model.backbone.input_channels = d.frame_shape()[0];
      config.model.backbone.input_height = d.frame_shape()[1];
      config.model.backbone.input_width = d.frame_shape()[2];
      TrainResult r = train(d, split.train, config, RegionLayout{});
      out << "trial " << trained.size() + 1 << ": trained " << r.metrics.size() << " steps\n"
          << std::flush;
      trained.push_back(std::move(r.params));
      return model_encoder(trained.back(), r.config, RegionLayout{});
    };
    single = repeated_trials(ds, retrain, plan, f.trials, f.seed, ranks);
    series = {{"retrained", &single}};
    std::snprintf(header, sizeof header, "retrained per trial, %s, seed %llu",
                  protocol_name(plan.protocol).c_str(), static_cast<unsigned long long>(f.seed));
  }
  title = header;

  std::string text;
  if (f.compare_qfix) {
    write_comparison_csv(f.csv, cmp);
    text = format_summary(cmp.quality, "quality weighting: " + title) +
           format_summary(cmp.uniform, "equal scores: " + title);
  } else {
    write_cmc_csv(f.csv, single);
    text = format_summary(single, title);
  }
  out << text;
  if (!f.summary.empty()) {
    std::ofstream s(f.summary, std::ios::binary);
    if (!s) throw DataError("cannot write " + f.summary);
    s << text;
  }
  if (!f.svg.empty()) {
    std::ofstream s(f.svg, std::ios::binary);
    if (!s) throw DataError("cannot write " + f.svg);
    s << cmc_svg(series, *std::max_element(ranks.begin(), ranks.end()));
  }
  return kOk;
}

// ---- scores -----------------------------------------------------------------

struct ScoresFlags {
  std::string data;
  std::string model;
  std::vector<std::string> tracklets;
  std::string out = "scores.csv";
  std::string heatmap;
};

void register_scores(CLI::App* app, ScoresFlags& f) {
  app->add_option("--data", f.data, "dataset directory or manifest")->required();
  app->add_option("--model", f.model, "checkpoint")->required();
  app->add_option("--tracklet", f.tracklets, "tracklet ids (default: all)")->delimiter(',');
  app->add_option("--out", f.out, "per-frame score CSV")->capture_default_str();
  app->add_option("--heatmap", f.heatmap, "directory for one PPM strip per tracklet");
  add_config_option(app);
}

std::string safe_file_name(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

int cmd_scores(const ScoresFlags& f, std::ostream& out) {
  const Dataset ds = load_dataset(f.data);
  const Checkpoint ckpt = load_checkpoint(f.model);
  std::vector<std::size_t> selected;
  if (f.tracklets.empty()) {
    for (std::size_t i = 0; i < ds.tracklets.size(); ++i) selected.push_back(i);
  } else {
    for (const auto& id : f.tracklets) {
      const auto it = std::find_if(ds.tracklets.begin(), ds.tracklets.end(),
                                   [&id](const Tracklet& t) { return t.id == id; });
      if (it == ds.tracklets.end()) throw DataError("unknown tracklet '" + id + "'");
      selected.push_back(static_cast<std::size_t>(it - ds.tracklets.begin()));
    }
  }

  std::map<std::pair<std::string, char>, bool> occluded;
  const DatasetManifest manifest = read_manifest(ds.root);
  if (manifest.occlusion_truth) {
    for (const auto& t : read_occlusion_truth(*manifest.occlusion_truth))
      occluded[{t.frame_path, region_code(t.region)}] = t.occluded;
  }

  std::ofstream csv(f.out, std::ios::binary);
  if (!csv) throw DataError("cannot write " + f.out);
  csv << "tracklet_id,frame,frame_path,region,raw_score,score\n";
  if (!f.heatmap.empty()) std::filesystem::create_directories(f.heatmap);
  // [region][occluded?] sum and count of normalized scores
  double sum[3][2] = {};
  std::size_t count[3][2] = {};
  char line[128];
  for (std::size_t i : selected) {
    const Tracklet& t = ds.tracklets[i];
    const TrackletOutputs o = forward_tracklet(ckpt.params, ckpt.config, ckpt.layout, t.frames);
    for (std::size_t k = 0; k < t.size(); ++k) {
      for (Region r : ckpt.config.regions.regions()) {
        const std::size_t ri = index_of(r);
        std::snprintf(line, sizeof line, ",%c,%.9f,%.9f\n", region_code(r),
                      o.frames[k].raw_scores[ri], o.scores[ri][k]);
        csv << t.id << ',' << k << ',' << t.frame_paths[k] << line;
        const auto it = occluded.find({t.frame_paths[k], region_code(r)});
        if (it != occluded.end()) {
          sum[ri][it->second] += o.scores[ri][k];
          ++count[ri][it->second];
        }
      }
    }
    if (!f.heatmap.empty()) {
      write_pnm(std::filesystem::path(f.heatmap) / (safe_file_name(t.id) + ".ppm"),
                score_strip(t, o, ckpt.config.regions));
    }
  }
  out << "scores of " << selected.size() << " tracklets written to " << f.out << "\n";
  for (Region r : kAllRegions) {
    const std::size_t ri = index_of(r);
    if (count[ri][1] == 0 || count[ri][0] == 0) continue;
    std::snprintf(line, sizeof line,
                  "region %c: occluded frames mean %.4f (n=%zu), clean frames mean %.4f (n=%zu)\n",
                  region_code(r), sum[ri][1] / count[ri][1], count[ri][1],
                  sum[ri][0] / count[ri][0], count[ri][0]);
    out << line;
  }
  return kOk;
}

// ---- gradcheck --------------------------------------------------------------

struct GradCheckFlags {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double step = 1e-4;
  std::size_t dim = 8;
  std::size_t worst = 10;
};

void register_gradcheck(CLI::App* app, GradCheckFlags& f) {
  app->add_option("--seed", f.seed)->capture_default_str();
  app->add_option("--tolerance", f.tolerance, "largest accepted relative error")
      ->capture_default_str();
  app->add_option("--step", f.step, "central difference step")->capture_default_str();
  app->add_option("--dim", f.dim, "regional feature dimension")->capture_default_str();
  app->add_option("--worst", f.worst, "entries listed in the report")->capture_default_str();
  add_config_option(app);
}

int cmd_gradcheck(const GradCheckFlags& f, std::ostream& out) {
  if (f.dim < 1) throw std::invalid_argument("--dim must be at least 1");
  GradCheckOptions options;
  options.tolerance = f.tolerance;
  options.step = f.step;
  options.report_worst = f.worst;
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckInstance inst = gradcheck_instance(f.seed, f.dim);
  const GradCheckReport report = check_total_loss(inst, options);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "seed " << f.seed << ", step " << f.step << ", " << secs << " s\n";
  out << format_report(report, f.tolerance);
  return report.passed ? kOk : kNumeric;
}

}  // namespace

// ---- public helpers ---------------------------------------------------------

std::vector<std::pair<std::string, std::string>> read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (std::size_t row = 1; std::getline(in, line); ++row) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(row) +
                                  ": expected key = value");
    }
    std::string key = strip_dashes(trim(t.substr(0, eq)));
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(row) + ": empty key");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::set<std::string> given;
  std::vector<std::filesystem::path> files;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string key = option_key(args[i]);
    if (key.empty()) continue;
    given.insert(key);
    if (key != "config") continue;
    if (args[i].find('=') != std::string::npos) {
      files.emplace_back(args[i].substr(args[i].find('=') + 1));
    } else if (i + 1 < args.size()) {
      files.emplace_back(args[i + 1]);
    }
  }
  if (files.empty()) return args;

  // Config entries go right after the subcommand name, before the user's flags.
  std::size_t insert_at = 0;
  while (insert_at < args.size() && args[insert_at].rfind("-", 0) == 0) ++insert_at;
  if (insert_at < args.size()) ++insert_at;

  std::vector<std::string> extra;
  std::set<std::string> from_config;
  for (const auto& file : files) {
    for (const auto& [key, value] : read_config(file)) {
      if (given.count(key) || key == "config") continue;
      if (!from_config.insert(key).second) {
        throw std::invalid_argument("config key '" + key + "' set twice");
      }
      extra.push_back("--" + key + "=" + value);
    }
  }
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(insert_at));
  out.insert(out.end(), extra.begin(), extra.end());
  out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(insert_at), args.end());
  return out;
}

std::vector<std::size_t> parse_ranks(const std::string& text) {
  std::vector<std::size_t> ranks;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    std::size_t k = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), k);
    if (item.empty() || ec != std::errc() || end != item.data() + item.size() || k == 0) {
      throw std::invalid_argument("bad rank list '" + text + "': ranks are positive integers");
    }
    ranks.push_back(k);
  }
  if (ranks.empty() || text.back() == ',') {
    throw std::invalid_argument("bad rank list '" + text + "'");
  }
  return ranks;
}

std::array<std::uint8_t, 3> score_color(double score) {
  const double s = std::clamp(std::isfinite(score) ? score : 0.0, 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255.0 * s)), 0,
          static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - s)))};
}

Image score_strip(const Tracklet& tracklet, const TrackletOutputs& outputs,
                  const RegionMask& mask) {
  const Shape& shape = tracklet.frames.shape();
  const std::size_t n = shape[0], c = shape[1], h = shape[2], w = shape[3];
  const std::size_t cell = std::max<std::size_t>(w, 4);
  const std::vector<Region> regions = mask.regions();
  Image img;
  img.width = n * w;
  img.height = h + regions.size() * cell;
  img.channels = 3;
  img.pixels.assign(img.width * img.height * 3, 255);
  for (std::size_t f = 0; f < n; ++f) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double v = tracklet.frames[((f * c + std::min(ch, c - 1)) * h + y) * w + x];
          img.at(y, f * w + x, ch) = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        }
      }
    }
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const auto rgb = score_color(outputs.frames[f].raw_scores[index_of(regions[r])]);
      for (std::size_t y = h + r * cell; y < h + (r + 1) * cell; ++y)
        for (std::size_t x = f * w; x < (f + 1) * w; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = rgb[ch];
    }
  }
  return img;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region-based quality estimation for video re-identification", "rqen"};
  bool serial = false;
  app.add_flag("--serial", serial, "use the serial reference kernels");
  app.require_subcommand(1);

  GenSynthFlags gen_flags;
  TrainCmdFlags train_flags;
  EvalFlags eval_flags;
  ScoresFlags scores_flags;
  GradCheckFlags grad_flags;
  auto* gen = app.add_subcommand("gen-synth", "write a synthetic tracklet dataset");
  auto* tr = app.add_subcommand("train", "train a model and save a checkpoint");
  auto* ev = app.add_subcommand("eval", "CMC / mAP over repeated trials");
  auto* sc = app.add_subcommand("scores", "per-frame quality scores and heatmaps");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the training loss");
  register_gen_synth(gen, gen_flags);
  register_train(tr, train_flags);
  register_eval(ev, eval_flags);
  register_scores(sc, scores_flags);
  register_gradcheck(gc, grad_flags);

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kUsage;
    }
    kernels::set_parallel(!serial);
    if (gen->parsed()) return cmd_gen_synth(gen_flags, out);
    if (tr->parsed()) return cmd_train(train_flags, out);
    if (ev->parsed()) return cmd_eval(eval_flags, out);
    if (sc->parsed()) return cmd_scores(scores_flags, out);
    return cmd_gradcheck(grad_flags, out);
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace rqen::cli
