#include <cmath>
#include <stdexcept>

#include "rqen/errors.hpp"
#include "rqen/model.hpp"
#include "rqen/rng.hpp"

namespace rqen {

Shape BackboneConfig::stage_shape(std::size_t s) const {
  if (s >= stages()) throw std::out_of_range("backbone stage out of range");
  std::size_t h = input_height, w = input_width;
  for (std::size_t i = 0; i <= s; ++i) {
    h /= pool[i];
    w /= pool[i];
  }
  return {channels[s], h, w};
}

void BackboneConfig::validate() const {
  if (channels.empty() || channels.size() != pool.size()) {
    throw std::invalid_argument("backbone needs one pool factor per stage");
  }
  if (input_channels == 0 || kernel % 2 == 0) {
    throw std::invalid_argument("backbone kernel must be odd and input channels positive");
  }
  if (early_tap >= stages() || late_tap >= stages() || early_tap > late_tap) {
    throw std::invalid_argument("backbone taps must be stage indices with early <= late");
  }
  std::size_t h = input_height, w = input_width;
  for (std::size_t s = 0; s < stages(); ++s) {
    if (channels[s] == 0 || pool[s] == 0) throw std::invalid_argument("empty backbone stage");
    if (h < pool[s] || w < pool[s]) throw std::invalid_argument("pooling shrinks the map to nothing");
    h /= pool[s];
    w /= pool[s];
  }
  if (feature_dim() < 2) throw std::invalid_argument("regional feature dimension must be >= 2");
  if (stage_shape(early_tap)[1] < 3 || stage_shape(late_tap)[1] < 3) {
    throw std::invalid_argument("tapped maps need at least 3 rows for the region split");
  }
}

void ModelConfig::validate() const {
  backbone.validate();
  if (quality_hidden == 0) throw std::invalid_argument("quality head needs a hidden layer");
  if (num_classes < 1) throw std::invalid_argument("classifier needs at least one class");
  if (regions.count() == 0) throw std::invalid_argument("region mask is empty");
}

std::string backbone_weight(std::size_t stage) {
  return "backbone.stage" + std::to_string(stage) + ".weight";
}
std::string backbone_bias(std::size_t stage) {
  return "backbone.stage" + std::to_string(stage) + ".bias";
}
std::string quality_param(Region r, const char* layer, const char* kind) {
  return std::string("quality.") + region_code(r) + "." + layer + "." + kind;
}

namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> gauss(0.0, stddev);
  for (double& v : t.data()) v = gauss(rng);
  return t;
}

}  // namespace

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const BackboneConfig& bb = config.backbone;
  Rng rng(seed);
  ParamStore p;
  std::size_t in = bb.input_channels;
  for (std::size_t s = 0; s < bb.stages(); ++s) {
    const double fan_in = static_cast<double>(in * bb.kernel * bb.kernel);
    p.add(backbone_weight(s),
          normal_tensor({bb.channels[s], in, bb.kernel, bb.kernel}, std::sqrt(2.0 / fan_in), rng));
    p.add(backbone_bias(s), Tensor({bb.channels[s]}));
    in = bb.channels[s];
  }
  const std::size_t c_mid = bb.channels[bb.early_tap];
  const std::size_t h = config.quality_hidden;
  for (Region r : kAllRegions) {
    p.add(quality_param(r, "hidden", "weight"),
          normal_tensor({c_mid, h}, std::sqrt(2.0 / static_cast<double>(c_mid)), rng));
    p.add(quality_param(r, "hidden", "bias"), Tensor({h}));
    p.add(quality_param(r, "out", "weight"),
          normal_tensor({h, 1}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    p.add(quality_param(r, "out", "bias"), Tensor({1}));
  }
  const std::size_t d = config.regions.count() * bb.feature_dim();
  p.add("classifier.weight",
        normal_tensor({d, config.num_classes}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  p.add("classifier.bias", Tensor({config.num_classes}));
  return p;
}

// ---- graph construction ---------------------------------------------------

template <typename Store>
BackboneTaps featurize_frames(Graph& g, Var frames, Store& params, const BackboneConfig& config) {
  const Shape& s = frames.shape();
  if (s.size() != 4 || s[1] != config.input_channels || s[2] != config.input_height ||
      s[3] != config.input_width) {
    throw ShapeError("backbone expects frames [n," + std::to_string(config.input_channels) + "," +
                     std::to_string(config.input_height) + "," +
                     std::to_string(config.input_width) + "], got " + shape_string(s));
  }
  BackboneTaps taps;
  Var x = frames;
  for (std::size_t st = 0; st < config.stages(); ++st) {
    x = ad::conv2d(x, g.parameter(params, backbone_weight(st)),
                   g.parameter(params, backbone_bias(st)));
    if (st + 1 < config.stages()) x = ad::relu(x);
    if (config.pool[st] > 1) x = ad::avg_pool(x, config.pool[st]);
    if (st == config.early_tap) taps.mid = x;
    if (st == config.late_tap) taps.late = x;
  }
  return taps;
}

std::array<Var, 3> regional_features(Var late, const RegionLayout& layout,
                                     const RegionMask& mask) {
  const auto rows = split_rows(late.shape().at(2), layout);
  std::array<Var, 3> out{};
  for (Region r : kAllRegions) {
    if (!mask.contains(r)) continue;
    const RowRange& band = rows[index_of(r)];
    out[index_of(r)] = ad::region_pool(late, band.begin, band.end);
  }
  return out;
}

template <typename Store>
std::array<Var, 3> raw_quality_scores(Graph& g, Var mid, const RegionLayout& layout, Store& params,
                                      const ModelConfig& config) {
  std::array<Var, 3> out{};
  const std::size_t n = mid.shape().at(0);
  if (config.quality_fixed) {
    for (Region r : kAllRegions)
      if (config.regions.contains(r)) out[index_of(r)] = g.input(Tensor({n, 1}, 1.0));
    return out;
  }
  const auto rows = split_rows(mid.shape().at(2), layout);
  for (Region r : kAllRegions) {
    if (!config.regions.contains(r)) continue;
    const RowRange& band = rows[index_of(r)];
    Var pooled = ad::region_pool(mid, band.begin, band.end);
    Var hidden = ad::relu(ad::add_bias(
        ad::matmul(pooled, g.parameter(params, quality_param(r, "hidden", "weight"))),
        g.parameter(params, quality_param(r, "hidden", "bias"))));
    Var logit = ad::add_bias(ad::matmul(hidden, g.parameter(params, quality_param(r, "out", "weight"))),
                             g.parameter(params, quality_param(r, "out", "bias")));
    out[index_of(r)] = ad::sigmoid(logit);
  }
  return out;
}

std::array<Var, 3> normalize_scores(const std::array<Var, 3>& raw, const RegionMask& mask) {
  std::array<Var, 3> out{};
  for (Region r : kAllRegions) {
    if (!mask.contains(r)) continue;
    const Var x = raw[index_of(r)];
    out[index_of(r)] = ad::div(x, ad::sum_axis(x, 0));
  }
  return out;
}

std::array<Var, 3> aggregate_set(const std::array<Var, 3>& features,
                                 const std::array<Var, 3>& scores, const RegionMask& mask,
                                 bool l2_normalize) {
  std::array<Var, 3> out{};
  for (Region r : kAllRegions) {
    if (!mask.contains(r)) continue;
    const std::size_t i = index_of(r);
    if (features[i].shape().at(0) != scores[i].shape().at(0)) {
      throw ShapeError("aggregate: " + std::to_string(features[i].shape()[0]) + " features but " +
                       std::to_string(scores[i].shape()[0]) + " scores");
    }
    Var part = ad::matmul(ad::transpose(scores[i]), features[i]);
    out[i] = l2_normalize ? ad::l2_normalize(part) : part;
  }
  return out;
}

namespace {

Var concat_active(const std::array<Var, 3>& parts, const RegionMask& mask) {
  std::vector<Var> active;
  for (Region r : mask.regions()) active.push_back(parts[index_of(r)]);
  return active.size() == 1 ? active.front() : ad::concat(active, 1);
}

}  // namespace

template <typename Store>
FrameNodes frame_nodes(Graph& g, Var frames, Store& params, const ModelConfig& config,
                       const RegionLayout& layout) {
  FrameNodes out;
  out.taps = featurize_frames(g, frames, params, config.backbone);
  out.features = regional_features(out.taps.late, layout, config.regions);
  out.raw_scores = raw_quality_scores(g, out.taps.mid, layout, params, config);
  out.frame_descriptor = concat_active(out.features, config.regions);
  return out;
}

TrackletNodes tracklet_nodes(const FrameNodes& frames, std::size_t begin, std::size_t end,
                             const ModelConfig& config) {
  const RegionMask& mask = config.regions;
  std::array<Var, 3> feats{}, raw{};
  for (Region r : mask.regions()) {
    const std::size_t i = index_of(r);
    feats[i] = ad::slice_rows(frames.features[i], begin, end);
    raw[i] = ad::slice_rows(frames.raw_scores[i], begin, end);
  }
  TrackletNodes out;
  out.normalized = normalize_scores(raw, mask);
  out.parts = aggregate_set(feats, out.normalized, mask, config.l2_normalize);
  out.descriptor = concat_active(out.parts, mask);
  return out;
}

template BackboneTaps featurize_frames<ParamStore>(Graph&, Var, ParamStore&, const BackboneConfig&);
template BackboneTaps featurize_frames<const ParamStore>(Graph&, Var, const ParamStore&,
                                                         const BackboneConfig&);
template std::array<Var, 3> raw_quality_scores<ParamStore>(Graph&, Var, const RegionLayout&,
                                                           ParamStore&, const ModelConfig&);
template std::array<Var, 3> raw_quality_scores<const ParamStore>(Graph&, Var, const RegionLayout&,
                                                                 const ParamStore&,
                                                                 const ModelConfig&);
template FrameNodes frame_nodes<ParamStore>(Graph&, Var, ParamStore&, const ModelConfig&,
                                            const RegionLayout&);
template FrameNodes frame_nodes<const ParamStore>(Graph&, Var, const ParamStore&,
                                                  const ModelConfig&, const RegionLayout&);

// ---- value-level API ------------------------------------------------------

std::vector<double> VideoFeature::descriptor() const {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

namespace {

Tensor as_stack(const Tensor& frames) {
  if (frames.rank() == 3) {
    Shape s{1};
    s.insert(s.end(), frames.shape().begin(), frames.shape().end());
    return frames.reshaped(std::move(s));
  }
  if (frames.rank() != 4) throw ShapeError("expected frames [C,H,W] or [n,C,H,W], got " +
                                           shape_string(frames.shape()));
  return frames;
}

std::vector<double> row_of(const Tensor& t, std::size_t row) {
  const std::size_t cols = t.size() / t.dim(0);
  const auto begin = t.data().begin() + static_cast<std::ptrdiff_t>(row * cols);
  return std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(cols));
}

}  // namespace

TrackletOutputs forward_tracklet(const ParamStore& params, const ModelConfig& config,
                                 const RegionLayout& layout, const Tensor& frames) {
  if (frames.empty() || (frames.rank() == 4 && frames.dim(0) == 0)) {
    throw std::invalid_argument("forward_tracklet: empty tracklet");
  }
  const Tensor stack = as_stack(frames);
  const std::size_t n = stack.dim(0);
  Graph g;
  const FrameNodes fn = frame_nodes(g, g.input(stack), params, config, layout);
  const TrackletNodes tn = tracklet_nodes(fn, 0, n, config);
  g.forward();

  TrackletOutputs out;
  out.frames.resize(n);
  for (Region r : config.regions.regions()) {
    const std::size_t i = index_of(r);
    const Tensor& feats = fn.features[i].value();
    const Tensor& raw = fn.raw_scores[i].value();
    const Tensor& norm = tn.normalized[i].value();
    for (std::size_t f = 0; f < n; ++f) {
      out.frames[f].features[i] = row_of(feats, f);
      out.frames[f].raw_scores[i] = raw[f];
    }
    out.scores[i] = norm.values();
    out.video.parts[i] = tn.parts[i].value().values();
  }
  return out;
}

std::pair<Tensor, Tensor> featurize_frame(const Tensor& frame, const ParamStore& params,
                                          const BackboneConfig& config) {
  Graph g;
  const BackboneTaps taps = featurize_frames(g, g.input(as_stack(frame)), params, config);
  g.forward();
  return {taps.mid.value(), taps.late.value()};
}

std::array<Tensor, 3> regional_features(const Tensor& late, const RegionLayout& layout) {
  if (late.rank() != 4) throw ShapeError("regional features need a map [n,D,h,w], got " +
                                         shape_string(late.shape()));
  Graph g;
  const auto vars = regional_features(g.input(late), layout, RegionMask{});
  g.forward();
  return {vars[0].value(), vars[1].value(), vars[2].value()};
}

std::array<Tensor, 3> raw_quality_scores(const Tensor& mid, const RegionLayout& layout,
                                         const ParamStore& params, const ModelConfig& config) {
  if (mid.rank() != 4) throw ShapeError("quality head needs a map [n,C,h,w], got " +
                                        shape_string(mid.shape()));
  Graph g;
  const auto vars = raw_quality_scores(g, g.input(mid), layout, params, config);
  g.forward();
  std::array<Tensor, 3> out;
  for (Region r : config.regions.regions()) out[index_of(r)] = vars[index_of(r)].value();
  return out;
}

Tensor normalize_scores(const Tensor& raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_scores: no frames");
  if (raw.rank() != 2 || raw.dim(1) != 1) {
    throw ShapeError("normalize_scores expects [n,1], got " + shape_string(raw.shape()));
  }
  Graph g;
  Var x = g.input(raw);
  Var y = ad::div(x, ad::sum_axis(x, 0));
  g.forward();
  return y.value();
}

Tensor aggregate_set(const Tensor& features, const Tensor& scores, bool l2_normalize) {
  if (features.rank() != 2 || scores.rank() != 2 || scores.dim(1) != 1) {
    throw ShapeError("aggregate expects features [n,D] and scores [n,1], got " +
                     shape_string(features.shape()) + " and " + shape_string(scores.shape()));
  }
  Graph g;
  std::array<Var, 3> f{}, s{};
  f[0] = g.input(features);
  s[0] = g.input(scores);
  const auto out = aggregate_set(f, s, RegionMask::only(Region::upper), l2_normalize);
  g.forward();
  return out[0].value();
}

}  // namespace rqen
