#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rqen/dataset.hpp"
#include "rqen/model.hpp"

namespace rqen {

// 1 - a.b / (|a||b|), clamped to [0,2]. Zero vectors are rejected.
double cosine_distance(std::span<const double> a, std::span<const double> b);

struct RetrievalEntry {
  std::string tracklet_id;
  int identity = 0;
  int camera = 0;
  std::vector<double> feature;
};

using ProbeSet = std::vector<RetrievalEntry>;
using GallerySet = std::vector<RetrievalEntry>;

// [P, G] row-major probe-to-gallery cosine distances.
std::vector<double> distance_matrix(const ProbeSet& probe, const GallerySet& gallery);

struct Ranking {
  std::vector<double> curve;           // curve[k-1] = fraction of probes matched within rank k
  std::vector<std::size_t> first_hit;  // per probe, 1-based; 0 when the identity is absent
  std::vector<double> average_precision;
  double map = 0.0;

  // CMC at rank k >= 1; ranks beyond the gallery size repeat the last value.
  double at(std::size_t k) const;
};

// Gallery sorted by ascending distance per probe, ties kept in gallery order.
// Probes whose identity is missing from the gallery are rejected unless
// allow_missing is set, in which case they count as never matched.
Ranking cmc(const ProbeSet& probe, const GallerySet& gallery, bool allow_missing = false);

struct CmcResult {
  std::vector<std::size_t> ranks;
  std::vector<Ranking> trials;
  std::vector<double> mean;  // per requested rank
  std::vector<double> stddev;
  std::vector<double> mean_curve;  // over the shortest trial curve
  double map_mean = 0.0;
  double map_std = 0.0;
};

// Sample standard deviation (n - 1); 0 for a single value.
double sample_std(const std::vector<double>& values);

CmcResult summarize(const std::vector<Ranking>& trials, const std::vector<std::size_t>& ranks);

// Descriptor of one tracklet.
using Encoder = std::function<std::vector<double>(const Tracklet&)>;
// Produces the encoder for one trial: trains on split.train or wraps a fixed model.
using TrialModel =
    std::function<Encoder(const Dataset& dataset, const DatasetSplit& split, std::uint64_t seed)>;

Encoder model_encoder(const ParamStore& params, const ModelConfig& config,
                      const RegionLayout& layout);

struct TrialPlan {
  Protocol protocol = Protocol::fifty_fifty_cross_camera;
  SplitOptions options;
  // Keep this identity split for every trial (a model trained on it is being
  // evaluated); otherwise each trial draws its own split.
  std::optional<std::uint64_t> fixed_split_seed;
  bool allow_missing = false;
};

// Trial t uses seed derive_seed(seed, t). Under the fifty-fifty protocol the
// probe camera of each test identity is drawn per trial.
CmcResult repeated_trials(const Dataset& dataset, const TrialModel& model, const TrialPlan& plan,
                          std::size_t trials, std::uint64_t seed,
                          const std::vector<std::size_t>& ranks);

struct AggregatorComparison {
  CmcResult quality;  // learned quality weighting
  CmcResult uniform;  // all raw scores equal
};

// Same parameters, same trials; only the aggregation weights differ.
AggregatorComparison compare_aggregators(const Dataset& dataset, const ParamStore& params,
                                         const ModelConfig& config, const RegionLayout& layout,
                                         const TrialPlan& plan, std::size_t trials,
                                         std::uint64_t seed,
                                         const std::vector<std::size_t>& ranks);

// ---- reports --------------------------------------------------------------

void write_cmc_csv(const std::filesystem::path& path, const CmcResult& result);
void write_comparison_csv(const std::filesystem::path& path, const AggregatorComparison& cmp);
std::string format_summary(const CmcResult& result, const std::string& title);
// CMC curves (mean over trials) up to max_rank, one polyline per series.
std::string cmc_svg(const std::vector<std::pair<std::string, const CmcResult*>>& series,
                    std::size_t max_rank);

}  // namespace rqen
