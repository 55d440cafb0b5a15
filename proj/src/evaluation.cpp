#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "rqen/errors.hpp"
#include "rqen/evaluation.hpp"
#include "rqen/kernels.hpp"
#include "rqen/rng.hpp"

namespace rqen {

namespace {

void require_nonzero(std::span<const double> v, const char* what) {
  for (double x : v)
    if (x != 0.0) return;
  throw std::invalid_argument(std::string("cosine distance of a zero ") + what + " vector");
}

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("cosine distance needs equal, non-zero dimensions (" +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  require_nonzero(a, "first");
  require_nonzero(b, "second");
  double out = 0.0;
  kernels::serial::cosine_distance_matrix(1, 1, a.size(), a, b, {&out, 1});
  return out;
}

std::vector<double> distance_matrix(const ProbeSet& probe, const GallerySet& gallery) {
  if (probe.empty() || gallery.empty()) throw std::invalid_argument("empty probe or gallery set");
  const std::size_t dim = probe.front().feature.size();
  const auto flatten = [dim](const std::vector<RetrievalEntry>& set, const char* what) {
    std::vector<double> flat;
    for (const auto& e : set) {
      if (e.feature.size() != dim) throw ShapeError("retrieval features differ in dimension");
      require_nonzero(e.feature, what);
      flat.insert(flat.end(), e.feature.begin(), e.feature.end());
    }
    return flat;
  };
  const std::vector<double> p = flatten(probe, "probe"), g = flatten(gallery, "gallery");
  std::vector<double> out(probe.size() * gallery.size());
  kernels::cosine_distance_matrix(probe.size(), gallery.size(), dim, p, g, out);
  return out;
}

double Ranking::at(std::size_t k) const {
  if (k == 0) throw std::invalid_argument("ranks start at 1");
  if (curve.empty()) return 0.0;
  return curve[std::min(k, curve.size()) - 1];
}

Ranking cmc(const ProbeSet& probe, const GallerySet& gallery, bool allow_missing) {
  const std::vector<double> dist = distance_matrix(probe, gallery);
  const std::size_t G = gallery.size();
  std::set<int> gallery_ids;
  for (const auto& e : gallery) gallery_ids.insert(e.identity);

  Ranking out;
  out.curve.assign(G, 0.0);
  std::vector<std::size_t> hits_at(G + 1, 0);
  std::vector<std::size_t> order(G);
  for (std::size_t p = 0; p < probe.size(); ++p) {
    if (!gallery_ids.count(probe[p].identity) && !allow_missing) {
      throw DataError("probe '" + probe[p].tracklet_id + "' has no identity match in the gallery");
    }
    std::iota(order.begin(), order.end(), 0);
    const double* row = dist.data() + p * G;
    std::stable_sort(order.begin(), order.end(),
                     [row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    std::size_t first = 0, found = 0;
    double precision_sum = 0.0;
    for (std::size_t pos = 0; pos < G; ++pos) {
      if (gallery[order[pos]].identity != probe[p].identity) continue;
      ++found;
      if (first == 0) first = pos + 1;
      precision_sum += static_cast<double>(found) / static_cast<double>(pos + 1);
    }
    out.first_hit.push_back(first);
    out.average_precision.push_back(found ? precision_sum / static_cast<double>(found) : 0.0);
    ++hits_at[first];
  }
  std::size_t cum = 0;
  const double n = static_cast<double>(probe.size());
  for (std::size_t k = 1; k <= G; ++k) {
    cum += hits_at[k];
    out.curve[k - 1] = static_cast<double>(cum) / n;
  }
  out.map = std::accumulate(out.average_precision.begin(), out.average_precision.end(), 0.0) / n;
  return out;
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

CmcResult summarize(const std::vector<Ranking>& trials, const std::vector<std::size_t>& ranks) {
  if (trials.empty()) throw std::invalid_argument("no trials to summarize");
  CmcResult r;
  r.ranks = ranks;
  r.trials = trials;
  const auto mean_of = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  for (std::size_t k : ranks) {
    std::vector<double> vals;
    for (const auto& t : trials) vals.push_back(t.at(k));
    r.mean.push_back(mean_of(vals));
    r.stddev.push_back(sample_std(vals));
  }
  std::size_t len = trials.front().curve.size();
  for (const auto& t : trials) len = std::min(len, t.curve.size());
  for (std::size_t k = 1; k <= len; ++k) {
    std::vector<double> vals;
    for (const auto& t : trials) vals.push_back(t.at(k));
    r.mean_curve.push_back(mean_of(vals));
  }
  std::vector<double> maps;
  for (const auto& t : trials) maps.push_back(t.map);
  r.map_mean = mean_of(maps);
  r.map_std = sample_std(maps);
  return r;
}

Encoder model_encoder(const ParamStore& params, const ModelConfig& config,
                      const RegionLayout& layout) {
  return [&params, config, layout](const Tracklet& t) {
    return forward_tracklet(params, config, layout, t.frames).video.descriptor();
  };
}

namespace {

RetrievalEntry encode(const Tracklet& t, const Encoder& enc) {
  return RetrievalEntry{t.id, t.identity, t.camera, enc(t)};
}

}  // namespace

CmcResult repeated_trials(const Dataset& dataset, const TrialModel& model, const TrialPlan& plan,
                          std::size_t trials, std::uint64_t seed,
                          const std::vector<std::size_t>& ranks) {
  if (trials < 1) throw std::invalid_argument("at least one trial is required");
  if (ranks.empty()) throw std::invalid_argument("no ranks requested");
  for (std::size_t k : ranks)
    if (k == 0) throw std::invalid_argument("ranks start at 1");
  std::vector<Ranking> results;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed = derive_seed(seed, t);
    SplitOptions opts = plan.options;
    if (plan.protocol == Protocol::fifty_fifty_cross_camera) {
      opts.random_probe_camera = true;
      opts.role_seed = derive_seed(trial_seed, 1);
    }
    const DatasetSplit split = split_protocol(
        dataset, plan.protocol, plan.fixed_split_seed.value_or(trial_seed), opts);
    const Encoder enc = model(dataset, split, trial_seed);
    ProbeSet probe;
    GallerySet gallery;
    for (std::size_t i : split.probe) probe.push_back(encode(dataset.tracklets[i], enc));
    for (std::size_t i : split.gallery) gallery.push_back(encode(dataset.tracklets[i], enc));
    results.push_back(cmc(probe, gallery, plan.allow_missing));
  }
  return summarize(results, ranks);
}

AggregatorComparison compare_aggregators(const Dataset& dataset, const ParamStore& params,
                                         const ModelConfig& config, const RegionLayout& layout,
                                         const TrialPlan& plan, std::size_t trials,
                                         std::uint64_t seed,
                                         const std::vector<std::size_t>& ranks) {
  ModelConfig weighted = config, uniform = config;
  weighted.quality_fixed = false;
  uniform.quality_fixed = true;
  const auto fixed = [&params, &layout](const ModelConfig& c) -> TrialModel {
    return [&params, &layout, c](const Dataset&, const DatasetSplit&, std::uint64_t) {
      return model_encoder(params, c, layout);
    };
  };
  AggregatorComparison out;
  out.quality = repeated_trials(dataset, fixed(weighted), plan, trials, seed, ranks);
  out.uniform = repeated_trials(dataset, fixed(uniform), plan, trials, seed, ranks);
  return out;
}

// ---- reports --------------------------------------------------------------

namespace {

std::ofstream open_report(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report " + path.string());
  return out;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

void write_cmc_csv(const std::filesystem::path& path, const CmcResult& result) {
  auto out = open_report(path);
  out << "rank,mean,std\n";
  for (std::size_t i = 0; i < result.ranks.size(); ++i) {
    out << result.ranks[i] << ',' << fmt("%.6f", result.mean[i]) << ','
        << fmt("%.6f", result.stddev[i]) << '\n';
  }
}

void write_comparison_csv(const std::filesystem::path& path, const AggregatorComparison& cmp) {
  auto out = open_report(path);
  out << "rank,rqen_mean,rqen_std,qfix_mean,qfix_std\n";
  for (std::size_t i = 0; i < cmp.quality.ranks.size(); ++i) {
    out << cmp.quality.ranks[i] << ',' << fmt("%.6f", cmp.quality.mean[i]) << ','
        << fmt("%.6f", cmp.quality.stddev[i]) << ',' << fmt("%.6f", cmp.uniform.mean[i]) << ','
        << fmt("%.6f", cmp.uniform.stddev[i]) << '\n';
  }
}

std::string format_summary(const CmcResult& result, const std::string& title) {
  std::ostringstream s;
  s << title << " (" << result.trials.size() << " trial" << (result.trials.size() == 1 ? "" : "s")
    << ")\n";
  for (std::size_t i = 0; i < result.ranks.size(); ++i) {
    s << "  rank-" << result.ranks[i] << ": " << fmt("%.1f", 100.0 * result.mean[i]) << " +- "
      << fmt("%.1f", 100.0 * result.stddev[i]) << "\n";
  }
  s << "  mAP: " << fmt("%.1f", 100.0 * result.map_mean) << " +- "
    << fmt("%.1f", 100.0 * result.map_std) << "\n";
  return s.str();
}

std::string cmc_svg(const std::vector<std::pair<std::string, const CmcResult*>>& series,
                    std::size_t max_rank) {
  const double W = 480, H = 320, left = 50, right = 20, top = 20, bottom = 40;
  const double pw = W - left - right, ph = H - top - bottom;
  max_rank = std::max<std::size_t>(max_rank, 2);
  const auto x_of = [&](double k) { return left + pw * (k - 1) / static_cast<double>(max_rank - 1); };
  const auto y_of = [&](double v) { return top + ph * (1.0 - v); };
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd"};

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    s << "<text x=\"" << left - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">"
      << static_cast<int>(v * 100) << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">rank</text>\n";
  s << "<text x=\"" << left - 6 << "\" y=\"" << H - bottom + 14 << "\" text-anchor=\"end\">1</text>\n";
  s << "<text x=\"" << left + pw << "\" y=\"" << H - bottom + 14 << "\" text-anchor=\"middle\">"
    << max_rank << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& [name, res] = series[i];
    const char* color = colors[i % 4];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 1; k <= max_rank && !res->mean_curve.empty(); ++k) {
      const double v = res->mean_curve[std::min(k, res->mean_curve.size()) - 1];
      s << fmt("%.1f", x_of(static_cast<double>(k))) << ',' << fmt("%.1f", y_of(v)) << ' ';
    }
    s << "\"/>\n";
    s << "<text x=\"" << left + 10 << "\" y=\"" << top + ph - 10 - 14.0 * static_cast<double>(i)
      << "\" fill=\"" << color << "\">" << name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace rqen
