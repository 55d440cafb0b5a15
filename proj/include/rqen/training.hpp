#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

#include "rqen/autodiff.hpp"
#include "rqen/dataset.hpp"
#include "rqen/gradcheck.hpp"
#include "rqen/model.hpp"
#include "rqen/rng.hpp"

namespace rqen {

// Model switches used for the ablations live in `model`: model.regions selects
// the single-region variants, model.quality_fixed the average-pooling one.
// model.num_classes is overwritten with the number of training identities.
struct TrainConfig {
  ModelConfig model;
  double margin = 0.3;
  std::size_t frames_per_sample = 8;
  std::size_t batch_size = 8;  // triplets per step
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t epochs = 1;
  std::size_t steps_per_epoch = 0;  // 0: one pass over the training tracklets
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrackletSample {
  std::size_t tracklet = 0;          // index into the dataset
  std::vector<std::size_t> frames;  // frame indices inside the tracklet
};

struct Triplet {
  TrackletSample anchor;
  TrackletSample positive;
  TrackletSample negative;
};

struct TripletBatch {
  std::vector<Triplet> triplets;
  // Class label of every sampled frame, in anchor/positive/negative order per
  // triplet.
  std::vector<std::size_t> labels;
};

// Dense class indices for the identities of `tracklets`, in identity order.
std::map<int, std::size_t> class_map(const Dataset& dataset, const std::vector<std::size_t>& tracklets);

// Identity drawn uniformly among those with at least two tracklets, then an
// anchor tracklet of it; the positive is another tracklet of that identity
// (another camera when there is one), the negative a tracklet of a different
// identity. Frames are drawn without replacement, or with replacement from
// tracklets shorter than frames_per_sample.
TripletBatch sample_triplets(const Dataset& dataset, const std::vector<std::size_t>& tracklets,
                             const TrainConfig& config, Rng& rng);

struct LossNodes {
  Var total;
  Var softmax;
  Var triplet;
  std::array<Var, 3> raw_scores{};  // frame scores of the whole batch
};

// Mean frame-level cross-entropy of the classifier over the frame descriptors.
template <typename Store>
Var softmax_loss(Graph& g, Var frame_descriptors, const std::vector<std::size_t>& labels,
                 Store& params);

// [sqrt(d(o,+)) - sqrt(d(o,-)) + margin]_+ on squared Euclidean distances.
Var triplet_loss(Var anchor, Var positive, Var negative, double margin);
double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                    const std::vector<double>& negative, double margin);

// Softmax loss plus batch-mean triplet loss.
template <typename Store>
LossNodes total_loss(Graph& g, const Dataset& dataset, const TripletBatch& batch, Store& params,
                     const TrainConfig& config, const RegionLayout& layout);

struct StepMetrics {
  std::size_t step = 0;
  double loss_total = 0.0;
  double loss_softmax = 0.0;
  double loss_triplet = 0.0;
  std::array<double, 3> mean_mu{};  // mean raw score per region, 0 when inactive
};

struct TrainResult {
  ModelConfig config;
  ParamStore params;
  std::vector<StepMetrics> metrics;
};

using StepCallback = std::function<void(const StepMetrics&)>;

// SGD with momentum. Parameters are initialized from the config seed. Throws
// NumericError when the loss or a gradient stops being finite.
TrainResult train(const Dataset& dataset, const std::vector<std::size_t>& tracklets,
                  const TrainConfig& config, const RegionLayout& layout,
                  const StepCallback& on_step = {});

// Small fixed instance for checking gradients of the total loss: 2 identities
// x 2 cameras x 3 random frames of 16x8, regional feature dimension `dim`. The
// margin is large enough that the triplet term is active.
struct GradCheckInstance {
  Dataset dataset;
  TrainConfig config;
  TripletBatch batch;
  ParamStore params;
};

GradCheckInstance gradcheck_instance(std::uint64_t seed, std::size_t dim = 8);
GradCheckReport check_total_loss(GradCheckInstance& instance, const GradCheckOptions& options = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepMetrics>& metrics);

}  // namespace rqen
