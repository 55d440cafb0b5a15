#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rqen/autodiff.hpp"
#include "rqen/regions.hpp"
#include "rqen/tensor.hpp"

namespace rqen {

// Small convolutional stack. Stage s is a same-padded conv with channels[s]
// filters, a rectifier (except on the last stage) and average pooling by
// pool[s]. The early tap feeds the quality head, the late tap the regional
// features; channels[late_tap] is the regional feature dimension.
struct BackboneConfig {
  std::size_t input_channels = 3;
  std::size_t input_height = 16;
  std::size_t input_width = 8;
  std::vector<std::size_t> channels{8, 64};
  std::vector<std::size_t> pool{2, 1};
  std::size_t kernel = 3;
  std::size_t early_tap = 0;
  std::size_t late_tap = 1;

  std::size_t feature_dim() const { return channels.at(late_tap); }
  std::size_t stages() const { return channels.size(); }
  // [C, H, W] after stage s.
  Shape stage_shape(std::size_t s) const;
  void validate() const;

  bool operator==(const BackboneConfig&) const = default;
};

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t quality_hidden = 32;
  std::size_t num_classes = 2;
  bool l2_normalize = true;  // per-part normalization of the video feature
  RegionMask regions;        // parts used for features and scores
  bool quality_fixed = false;  // all raw scores equal: temporal average pooling

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Randomly initialized trainables: He-normal convolutions and quality hidden
// layers, zero biases, 1/sqrt(fan_in) output and classifier layers.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

std::string backbone_weight(std::size_t stage);
std::string backbone_bias(std::size_t stage);
std::string quality_param(Region r, const char* layer, const char* kind);

// ---- graph construction ---------------------------------------------------

struct BackboneTaps {
  Var mid;   // [n, C_early, h, w]
  Var late;  // [n, D, h', w']
};

// Frame-level quantities for a stack of frames [n, C, H, W].
struct FrameNodes {
  BackboneTaps taps;
  std::array<Var, 3> features{};    // [n, D] for active regions
  std::array<Var, 3> raw_scores{};  // [n, 1] for active regions, in (0,1)
  Var frame_descriptor;             // [n, |mask| * D], unnormalized
};

// Set-level quantities for rows [begin, end) of a FrameNodes stack.
struct TrackletNodes {
  std::array<Var, 3> normalized{};  // [n, 1], each sums to 1
  std::array<Var, 3> parts{};       // [1, D]
  Var descriptor;                   // [1, |mask| * D]
};

template <typename Store>
BackboneTaps featurize_frames(Graph& g, Var frames, Store& params, const BackboneConfig& config);

std::array<Var, 3> regional_features(Var late, const RegionLayout& layout, const RegionMask& mask);

template <typename Store>
std::array<Var, 3> raw_quality_scores(Graph& g, Var mid, const RegionLayout& layout, Store& params,
                                      const ModelConfig& config);

std::array<Var, 3> normalize_scores(const std::array<Var, 3>& raw, const RegionMask& mask);

std::array<Var, 3> aggregate_set(const std::array<Var, 3>& features,
                                 const std::array<Var, 3>& scores, const RegionMask& mask,
                                 bool l2_normalize);

template <typename Store>
FrameNodes frame_nodes(Graph& g, Var frames, Store& params, const ModelConfig& config,
                       const RegionLayout& layout);

TrackletNodes tracklet_nodes(const FrameNodes& frames, std::size_t begin, std::size_t end,
                             const ModelConfig& config);

// ---- value-level API ------------------------------------------------------

struct FrameOutputs {
  std::array<std::vector<double>, 3> features;  // empty for inactive regions
  std::array<double, 3> raw_scores{};
};

using NormalizedScores = std::array<std::vector<double>, 3>;  // [region][frame]

struct VideoFeature {
  std::array<std::vector<double>, 3> parts;  // empty for inactive regions
  // Active parts concatenated in u, m, l order.
  std::vector<double> descriptor() const;
};

struct TrackletOutputs {
  VideoFeature video;
  std::vector<FrameOutputs> frames;
  NormalizedScores scores;
};

// Full forward pass for one tracklet; normalization runs over all its frames.
TrackletOutputs forward_tracklet(const ParamStore& params, const ModelConfig& config,
                                 const RegionLayout& layout, const Tensor& frames);

// The two maps of one frame [C, H, W] (or a stack [n, C, H, W]).
std::pair<Tensor, Tensor> featurize_frame(const Tensor& frame, const ParamStore& params,
                                          const BackboneConfig& config);

// Per-region spatial mean over each band's rows of a late map [n, D, h, w].
std::array<Tensor, 3> regional_features(const Tensor& late, const RegionLayout& layout);

// Raw scores [n, 1] per region from an early map [n, C, h, w].
std::array<Tensor, 3> raw_quality_scores(const Tensor& mid, const RegionLayout& layout,
                                         const ParamStore& params, const ModelConfig& config);

// Each column of raw scores [n, 1] divided by its sum.
Tensor normalize_scores(const Tensor& raw);

// sum_i scores[i] * features[i, :] -> [1, D], optionally L2-normalized.
Tensor aggregate_set(const Tensor& features, const Tensor& scores, bool l2_normalize);

}  // namespace rqen
