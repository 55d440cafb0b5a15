// One PASS/FAIL line per acceptance criterion. Criterion numbers can be given
// on the command line to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli.hpp"
#include "rqen/checkpoint.hpp"
#include "rqen/evaluation.hpp"
#include "rqen/training.hpp"

using namespace rqen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

Tensor random_frames(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({n, 3, 16, 8});
  for (double& v : t.data()) v = u(rng);
  return t;
}

// ---- 1 --------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckInstance inst = gradcheck_instance(1, 8);
  GradCheckOptions opt;
  opt.tolerance = 1e-4;
  const GradCheckReport rep = check_total_loss(inst, opt);
  const double secs = seconds_since(t0);
  return {rep.deterministic && rep.passed && secs < 60.0,
          fmt("%zu parameters, max relative error %.2e (limit 1e-4), %.1f s (limit 60 s)",
              rep.checked, rep.max_relative_error, secs)};
}

// ---- 2 --------------------------------------------------------------------

Outcome normalization_invariant() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> len(1, 32);
  const std::vector<std::string> masks{"uml", "uml", "uml", "m", "ul", "l"};
  double worst = 0.0;
  std::size_t tracklets = 0;
  for (std::size_t group = 0; group < 10; ++group) {
    ModelConfig m;
    m.regions = RegionMask::parse(masks[group % masks.size()]);
    const ParamStore params = init_params(m, 100 + group);
    for (std::size_t i = 0; i < 100; ++i, ++tracklets) {
      const TrackletOutputs out = forward_tracklet(params, m, RegionLayout{}, random_frames(len(rng), rng));
      for (Region r : m.regions.regions()) {
        const auto& s = out.scores[index_of(r)];
        worst = std::max(worst, std::abs(std::accumulate(s.begin(), s.end(), 0.0) - 1.0));
      }
    }
  }
  return {worst <= 1e-6, fmt("%zu tracklets, largest |sum - 1| = %.2e (limit 1e-6)", tracklets, worst)};
}

// ---- 3 --------------------------------------------------------------------

Outcome qfix_equivalence() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 32);
  ModelConfig m;
  m.quality_fixed = true;
  m.l2_normalize = false;
  double worst = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    const ParamStore params = init_params(m, 300 + i / 20);
    const std::size_t n = len(rng);
    const Tensor frames = random_frames(n, rng);
    const TrackletOutputs out = forward_tracklet(params, m, RegionLayout{}, frames);
    // Frame features straight from the backbone, one frame at a time.
    std::array<std::vector<double>, 3> mean;
    for (std::size_t f = 0; f < n; ++f) {
      Tensor one({1, 3, 16, 8});
      std::copy_n(frames.data().begin() + static_cast<std::ptrdiff_t>(f * one.size()), one.size(),
                  one.data().begin());
      const auto regional = regional_features(featurize_frame(one, params, m.backbone).second, RegionLayout{});
      for (std::size_t r = 0; r < 3; ++r) {
        mean[r].resize(regional[r].size(), 0.0);
        for (std::size_t j = 0; j < regional[r].size(); ++j) mean[r][j] += regional[r][j] / static_cast<double>(n);
      }
    }
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < mean[r].size(); ++j)
        worst = std::max(worst, std::abs(out.video.parts[r][j] - mean[r][j]));
  }
  return {worst <= 1e-9, fmt("200 tracklets, largest component difference %.2e (limit 1e-9)", worst)};
}

// ---- 4 --------------------------------------------------------------------

Outcome aggregation_properties() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 32), dim(1, 16);
  std::uniform_real_distribution<double> score(1e-3, 1.0);
  std::normal_distribution<double> gauss;
  const std::size_t cases = 1000;
  double perm_worst = 0.0, single_worst = 0.0, bound_violation = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = len(rng), d = dim(rng);
    const bool l2 = c % 2 == 1;
    Tensor feats({n, d}), raw({n, 1});
    for (double& v : feats.data()) v = gauss(rng);
    for (double& v : raw.data()) v = score(rng);

    // Permutation invariance.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Tensor pf({n, d}), pr({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      pr[i] = raw[order[i]];
      for (std::size_t j = 0; j < d; ++j) pf[i * d + j] = feats[order[i] * d + j];
    }
    const Tensor a = aggregate_set(feats, normalize_scores(raw), l2);
    const Tensor b = aggregate_set(pf, normalize_scores(pr), l2);
    for (std::size_t j = 0; j < d; ++j) perm_worst = std::max(perm_worst, std::abs(a[j] - b[j]));

    // Single frame: the aggregate is the frame itself (normalized when l2 is on).
    Tensor one({1, d}), s1({1, 1}, {score(rng)});
    double len2 = 0;
    for (std::size_t j = 0; j < d; ++j) one[j] = feats[j], len2 += feats[j] * feats[j];
    const Tensor agg1 = aggregate_set(one, normalize_scores(s1), l2);
    for (std::size_t j = 0; j < d; ++j) {
      const double expect = l2 ? one[j] / std::sqrt(len2) : one[j];
      single_worst = std::max(single_worst, std::abs(agg1[j] - expect));
    }

    // Convex combination: every component within the frames' range.
    const Tensor plain = aggregate_set(feats, normalize_scores(raw), false);
    for (std::size_t j = 0; j < d; ++j) {
      double lo = feats[j], hi = feats[j];
      for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, feats[i * d + j]), hi = std::max(hi, feats[i * d + j]);
      bound_violation = std::max({bound_violation, lo - plain[j], plain[j] - hi});
    }
  }
  const bool pass = perm_worst <= 1e-12 && single_worst <= 1e-12 && bound_violation <= 1e-12;
  return {pass, fmt("%zu cases each: permutation %.1e, single frame %.1e, bound overshoot %.1e (limits 1e-12)",
                    cases, perm_worst, single_worst, std::max(bound_violation, 0.0))};
}

// ---- 5 --------------------------------------------------------------------

struct OracleRanking {
  std::vector<double> curve;
  std::vector<double> ap;
  double map = 0.0;
};

// Independent full sort: (distance, gallery index) pairs, ties by index.
OracleRanking oracle_cmc(const ProbeSet& probe, const GallerySet& gallery) {
  const std::size_t G = gallery.size();
  OracleRanking o;
  std::vector<std::size_t> firsts;
  for (const auto& p : probe) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < G; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < p.feature.size(); ++k) {
        dot += p.feature[k] * gallery[j].feature[k];
        na += p.feature[k] * p.feature[k];
        nb += gallery[j].feature[k] * gallery[j].feature[k];
      }
      d.emplace_back(std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0), j);
    }
    std::sort(d.begin(), d.end());
    std::size_t first = 0, found = 0;
    double sum = 0;
    for (std::size_t pos = 0; pos < G; ++pos) {
      if (gallery[d[pos].second].identity != p.identity) continue;
      ++found;
      if (!first) first = pos + 1;
      sum += static_cast<double>(found) / static_cast<double>(pos + 1);
    }
    firsts.push_back(first);
    o.ap.push_back(found ? sum / static_cast<double>(found) : 0.0);
  }
  for (std::size_t k = 1; k <= G; ++k) {
    std::size_t hits = 0;
    for (std::size_t f : firsts) hits += f != 0 && f <= k;
    o.curve.push_back(static_cast<double>(hits) / static_cast<double>(probe.size()));
  }
  for (double a : o.ap) o.map += a;
  o.map /= static_cast<double>(probe.size());
  return o;
}

Outcome cmc_oracle() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> ids(1, 10), dim(1, 4), quant(-2, 2);
  std::size_t mismatches = 0, bad_shape = 0;
  for (int c = 0; c < 200; ++c) {
    const int n_ids = ids(rng), d = dim(rng);
    // Quantized features so distance ties are common.
    const auto feature = [&] {
      std::vector<double> f(static_cast<std::size_t>(d));
      do {
        for (double& v : f) v = quant(rng);
      } while (std::all_of(f.begin(), f.end(), [](double v) { return v == 0.0; }));
      return f;
    };
    ProbeSet probe;
    GallerySet gallery;
    for (int i = 0; i < n_ids; ++i) {
      gallery.push_back({"g" + std::to_string(gallery.size()), i, 1, feature()});
      if (rng() % 3 == 0 && gallery.size() < 10) gallery.push_back({"g" + std::to_string(gallery.size()), i, 1, feature()});
    }
    for (int i = 0; i < n_ids && probe.size() + gallery.size() < 20; ++i)
      if (probe.empty() || rng() % 2) probe.push_back({"p" + std::to_string(i), i, 0, feature()});
    std::shuffle(gallery.begin(), gallery.end(), rng);

    const Ranking r = cmc(probe, gallery);
    const OracleRanking o = oracle_cmc(probe, gallery);
    if (r.curve != o.curve || r.average_precision != o.ap || r.map != o.map) ++mismatches;
    bool monotone = true;
    for (std::size_t k = 1; k < r.curve.size(); ++k) monotone = monotone && r.curve[k] >= r.curve[k - 1];
    if (!monotone || r.at(gallery.size()) != 1.0) ++bad_shape;
  }
  return {mismatches == 0 && bad_shape == 0,
          fmt("200 instances: %zu differ from the oracle, %zu non-monotone or CMC(|G|) != 1", mismatches, bad_shape)};
}

// ---- 6 --------------------------------------------------------------------

Outcome region_split() {
  std::size_t bad = 0;
  for (std::size_t h = 3; h <= 512; ++h) {
    const auto r = split_rows(h, RegionLayout{});
    const auto a = static_cast<std::size_t>(std::floor(3.0 * static_cast<double>(h) / 7.0));
    const auto b = static_cast<std::size_t>(std::floor(5.0 * static_cast<double>(h) / 7.0));
    const bool ok = r[0].begin == 0 && r[0].end == a && r[1].begin == a && r[1].end == b &&
                    r[2].begin == b && r[2].end == h && r[0].size() && r[1].size() && r[2].size();
    bad += !ok;
  }
  const auto seven = split_rows(7, RegionLayout{});
  const bool example = seven[0].size() == 3 && seven[1].size() == 2 && seven[2].size() == 2;
  return {bad == 0 && example, fmt("H = 3..512: %zu bad partitions; H = 7 gives (%zu,%zu,%zu)", bad,
                                   seven[0].size(), seven[1].size(), seven[2].size())};
}

// ---- 7 --------------------------------------------------------------------

// 40 identities x 2 cameras x 16 frames, half the frames occluded in the
// middle band. RQEN and its fixed-quality ablation get the same training
// budget; both are scored on the held-out identities.
Outcome occlusion_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double rank1_rqen = 0, rank1_qfix = 0, occ_mean = 0, clean_mean = 0;
  for (std::uint64_t seed : seeds) {
    SynthConfig sc;
    sc.identities = 40;
    sc.cameras = 2;
    sc.frames = 16;
    sc.occlusion = {Region::middle, 0.5, 1.0};
    sc.noise = 0.35;
    sc.camera_shift = 0.2;
    sc.palette_size = 4;
    sc.seed = seed;
    const SyntheticDataset synth = generate_synthetic(sc);
    const Dataset ds = to_dataset(synth);
    const DatasetSplit split = split_protocol(ds, Protocol::fifty_fifty_cross_camera, seed);

    double rank1[2] = {0, 0};
    for (bool qfix : {false, true}) {
      TrainConfig tc;
      tc.seed = seed;
      tc.epochs = 40;
      tc.learning_rate = 0.05;
      tc.margin = 1.0;
      tc.model.quality_fixed = qfix;
      const TrainResult res = train(ds, split.train, tc, RegionLayout{});
      TrialPlan plan;
      plan.fixed_split_seed = seed;
      const TrialModel model = [&res](const Dataset&, const DatasetSplit&, std::uint64_t) {
        return model_encoder(res.params, res.config, RegionLayout{});
      };
      rank1[qfix] = repeated_trials(ds, model, plan, 5, seed, {1}).mean[0];

      if (!qfix) {
        double so = 0, sc2 = 0;
        std::size_t no = 0, nc = 0;
        std::vector<std::size_t> test = split.probe;
        test.insert(test.end(), split.gallery.begin(), split.gallery.end());
        for (std::size_t i : test) {
          const TrackletOutputs out = forward_tracklet(res.params, res.config, RegionLayout{}, ds.tracklets[i].frames);
          const auto& frames = synth.tracklets[i].frames;
          for (std::size_t f = 0; f < frames.size(); ++f) {
            const double s = out.scores[index_of(Region::middle)][f];
            if (frames[f].occluded) {
              so += s, ++no;
            } else {
              sc2 += s, ++nc;
            }
          }
        }
        occ_mean += so / static_cast<double>(no) / static_cast<double>(seeds.size());
        clean_mean += sc2 / static_cast<double>(nc) / static_cast<double>(seeds.size());
      }
    }
    std::printf("  seed %llu: rank-1 RQEN %.3f, QFix %.3f\n", static_cast<unsigned long long>(seed), rank1[0], rank1[1]);
    std::fflush(stdout);
    rank1_rqen += rank1[0] / static_cast<double>(seeds.size());
    rank1_qfix += rank1[1] / static_cast<double>(seeds.size());
  }
  const double drop = 1.0 - occ_mean / clean_mean;
  const double gap = 100.0 * (rank1_rqen - rank1_qfix);
  const double secs = seconds_since(t0);
  return {drop >= 0.20 && gap >= 5.0 && secs <= 600.0,
          fmt("(a) occluded middle score %.4f vs clean %.4f, %.1f%% lower (need >= 20%%); "
              "(b) rank-1 RQEN %.1f vs QFix %.1f, +%.1f pp (need >= 5); %.0f s (limit 600 s)",
              occ_mean, clean_mean, 100.0 * drop, 100.0 * rank1_rqen, 100.0 * rank1_qfix, gap, secs)};
}

// ---- 8 --------------------------------------------------------------------

int cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

Outcome determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    const fs::path d = dir / run;
    ok = ok && cli_run({"gen-synth", "--out", (d / "data").string(), "--ids", "10", "--frames", "6",
                        "--occlude", "m:0.5", "--seed", "8"}) == 0;
    ok = ok && cli_run({"train", "--data", (d / "data").string(), "--out", (d / "model.ckpt").string(),
                        "--epochs", "3", "--seed", "8", "--log-every", "0"}) == 0;
    ok = ok && cli_run({"eval", "--data", (d / "data").string(), "--model", (d / "model.ckpt").string(),
                        "--trials", "3", "--seed", "8", "--csv", (d / "cmc.csv").string()}) == 0;
  }
  if (!ok) return {false, "a command failed"};
  const bool data = tree_bytes(dir / "a" / "data") == tree_bytes(dir / "b" / "data");
  const bool curve = slurp(dir / "a" / "model.metrics.csv") == slurp(dir / "b" / "model.metrics.csv");
  const bool ckpt = slurp(dir / "a" / "model.ckpt") == slurp(dir / "b" / "model.ckpt");
  const bool csv = slurp(dir / "a" / "cmc.csv") == slurp(dir / "b" / "cmc.csv");
  fs::remove_all(dir);
  const auto yn = [](bool b) { return b ? "identical" : "DIFFERENT"; };
  return {data && curve && ckpt && csv,
          fmt("two runs: dataset %s, loss curve %s, checkpoint %s, evaluation CSV %s", yn(data), yn(curve),
              yn(ckpt), yn(csv))};
}

// ---- 9 --------------------------------------------------------------------

Outcome checkpoint_roundtrip(const fs::path& work) {
  SynthConfig sc;
  sc.identities = 6;
  sc.frames = 4;
  const Dataset ds = to_dataset(generate_synthetic(sc));
  const DatasetSplit split = split_protocol(ds, Protocol::fifty_fifty_cross_camera, 9);
  TrainConfig tc;
  tc.epochs = 2;
  tc.model.regions = RegionMask::parse("um");
  const TrainResult res = train(ds, split.train, tc, RegionLayout{0.4, 0.7});

  std::size_t identical = 0;
  const std::vector<Checkpoint> cases{
      {res.config, RegionLayout{0.4, 0.7}, res.params, TrainingSplit{Protocol::fifty_fifty_cross_camera, 9, {}, -1}},
      {ModelConfig{}, RegionLayout{}, init_params(ModelConfig{}, 4), std::nullopt},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const fs::path a = work / fmt("roundtrip_%zu_a.ckpt", i), b = work / fmt("roundtrip_%zu_b.ckpt", i);
    save_checkpoint(a, cases[i]);
    const Checkpoint loaded = load_checkpoint(a);
    save_checkpoint(b, loaded);
    identical += slurp(a) == slurp(b) && loaded == cases[i];
    fs::remove(a);
    fs::remove(b);
  }
  return {identical == cases.size(),
          fmt("%zu of %zu checkpoints byte-identical after save, load, save", identical, cases.size())};
}

// ---- 10 -------------------------------------------------------------------

Outcome triplet_contract() {
  // One-dimensional features at the stated distances.
  const double e1 = triplet_loss({0.0}, {0.2}, {0.9}, 0.3);
  const double e2 = triplet_loss({0.0}, {0.5}, {0.4}, 0.3);
  bool e3 = true;
  for (double dn : {0.1, 0.25, 0.3, 0.7}) e3 = e3 && triplet_loss({0.0, 0.0}, {0.0, 0.0}, {0.0, dn}, 0.3) == std::max(0.3 - dn, 0.0);
  const bool examples = e1 == 0.0 && e2 == 0.4 && e3;

  std::mt19937_64 rng(10);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  std::uniform_real_distribution<double> margin(0.0, 2.0);
  std::size_t disagreements = 0, zeros = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t d = dim(rng);
    std::vector<double> o(d), p(d), n(d);
    for (std::size_t j = 0; j < d; ++j) o[j] = gauss(rng), p[j] = gauss(rng), n[j] = gauss(rng);
    const double tau = margin(rng);
    double dp = 0, dn = 0;
    for (std::size_t j = 0; j < d; ++j) dp += (o[j] - p[j]) * (o[j] - p[j]), dn += (o[j] - n[j]) * (o[j] - n[j]);
    const bool satisfied = std::sqrt(dp) + tau <= std::sqrt(dn);
    const double loss = triplet_loss(o, p, n, tau);
    disagreements += (loss == 0.0) != satisfied;
    zeros += loss == 0.0;
  }
  return {examples && disagreements == 0,
          fmt("examples: %.17g, %.17g, zero-positive case %s; 1000 random triples: %zu zero losses, "
              "%zu disagree with d(o,p) + tau <= d(o,n)",
              e1, e2, e3 ? "exact" : "WRONG", zeros, disagreements)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "rqen_acceptance").string();
  app.add_option("criteria", only, "criterion numbers to run (default: all)");
  app.add_option("--work", work, "scratch directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"normalization invariant", normalization_invariant},
      {"QFix equivalence", qfix_equivalence},
      {"aggregation properties", aggregation_properties},
      {"CMC oracle equivalence", cmc_oracle},
      {"region split correctness", region_split},
      {"synthetic occlusion trend", occlusion_trend},
      {"determinism", [&] { return determinism(work); }},
      {"checkpoint roundtrip", [&] { return checkpoint_roundtrip(work); }},
      {"triplet loss contract", triplet_contract},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %s: %s - %s\n", number, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
