#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rqen/errors.hpp"
#include "rqen/training.hpp"

namespace rqen {

void TrainConfig::validate() const {
  if (!(margin >= 0.0)) throw std::invalid_argument("triplet margin must be >= 0");
  if (frames_per_sample < 1) throw std::invalid_argument("frames per sample must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(learning_rate >= 0.0) || !(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("learning rate must be >= 0 and momentum in [0,1)");
  }
  if (model.regions.count() == 0) throw std::invalid_argument("region mask is empty");
}

std::map<int, std::size_t> class_map(const Dataset& dataset,
                                     const std::vector<std::size_t>& tracklets) {
  std::map<int, std::size_t> out;
  for (std::size_t t : tracklets) out.emplace(dataset.tracklets.at(t).identity, 0);
  std::size_t next = 0;
  for (auto& [_, c] : out) c = next++;
  return out;
}

namespace {

TrackletSample sample_frames(const Dataset& ds, std::size_t tracklet, std::size_t count, Rng& rng) {
  TrackletSample s;
  s.tracklet = tracklet;
  const std::size_t n = ds.tracklets[tracklet].size();
  if (n >= count) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
    s.frames.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    for (std::size_t i = 0; i < count; ++i) s.frames.push_back(uniform_index(rng, n));
  }
  return s;
}

}  // namespace

TripletBatch sample_triplets(const Dataset& dataset, const std::vector<std::size_t>& tracklets,
                             const TrainConfig& config, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t t : tracklets) by_identity[dataset.tracklets.at(t).identity].push_back(t);
  if (by_identity.size() < 2) throw DataError("triplet sampling needs at least two identities");
  std::vector<int> identities, anchors;
  for (const auto& [id, ts] : by_identity) {
    identities.push_back(id);
    if (ts.size() >= 2) anchors.push_back(id);
  }
  if (anchors.empty()) throw DataError("no identity has two tracklets to form a positive pair");
  const auto classes = class_map(dataset, tracklets);

  TripletBatch batch;
  const std::size_t ns = config.frames_per_sample;
  for (std::size_t b = 0; b < config.batch_size; ++b) {
    const int id = anchors[uniform_index(rng, anchors.size())];
    const auto& own = by_identity[id];
    const std::size_t anchor = own[uniform_index(rng, own.size())];
    const int anchor_cam = dataset.tracklets[anchor].camera;
    std::vector<std::size_t> cross, same;
    for (std::size_t t : own) {
      if (t == anchor) continue;
      (dataset.tracklets[t].camera != anchor_cam ? cross : same).push_back(t);
    }
    const auto& pos_pool = cross.empty() ? same : cross;
    const std::size_t positive = pos_pool[uniform_index(rng, pos_pool.size())];
    const auto self = static_cast<std::size_t>(
        std::lower_bound(identities.begin(), identities.end(), id) - identities.begin());
    std::size_t k = uniform_index(rng, identities.size() - 1);
    if (k >= self) ++k;  // skip the anchor identity
    const auto& other = by_identity[identities[k]];
    const std::size_t negative = other[uniform_index(rng, other.size())];

    Triplet t{sample_frames(dataset, anchor, ns, rng), sample_frames(dataset, positive, ns, rng),
              sample_frames(dataset, negative, ns, rng)};
    for (const TrackletSample* s : {&t.anchor, &t.positive, &t.negative}) {
      const std::size_t label = classes.at(dataset.tracklets[s->tracklet].identity);
      batch.labels.insert(batch.labels.end(), s->frames.size(), label);
    }
    batch.triplets.push_back(std::move(t));
  }
  return batch;
}

template <typename Store>
Var softmax_loss(Graph& g, Var frame_descriptors, const std::vector<std::size_t>& labels,
                 Store& params) {
  Var logits = ad::add_bias(ad::matmul(frame_descriptors, g.parameter(params, "classifier.weight")),
                            g.parameter(params, "classifier.bias"));
  return ad::softmax_cross_entropy(logits, labels);
}

Var triplet_loss(Var anchor, Var positive, Var negative, double margin) {
  Graph& g = *anchor.graph;
  Var d_pos = ad::sqrt(ad::squared_l2_distance(anchor, positive));
  Var d_neg = ad::sqrt(ad::squared_l2_distance(anchor, negative));
  // Adding the margin first keeps short decimal cases exact: 0.5 + 0.3 - 0.4
  // is the double nearest 0.4, 0.5 - 0.4 + 0.3 is one ulp below it.
  Var shifted = ad::add(d_pos, g.input(Tensor({1, 1}, margin)));
  return ad::hinge(ad::add(shifted, ad::scale(d_neg, -1.0)));
}

double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                    const std::vector<double>& negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
    throw ShapeError("triplet features differ in dimension");
  }
  Graph g;
  const auto row = [&](const std::vector<double>& v) {
    return g.input(Tensor({1, v.size()}, v));
  };
  Var loss = triplet_loss(row(anchor), row(positive), row(negative), margin);
  g.forward();
  return loss.value().item();
}

template <typename Store>
LossNodes total_loss(Graph& g, const Dataset& dataset, const TripletBatch& batch, Store& params,
                     const TrainConfig& config, const RegionLayout& layout) {
  if (batch.triplets.empty()) throw std::invalid_argument("empty triplet batch");
  std::vector<double> pixels;
  Shape stack_shape{0};
  const Shape frame = dataset.frame_shape();
  stack_shape.insert(stack_shape.end(), frame.begin(), frame.end());
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const Triplet& t : batch.triplets) {
    for (const TrackletSample* s : {&t.anchor, &t.positive, &t.negative}) {
      const Tensor f = dataset.tracklets.at(s->tracklet).gather(s->frames);
      spans.emplace_back(stack_shape[0], stack_shape[0] + s->frames.size());
      stack_shape[0] += s->frames.size();
      pixels.insert(pixels.end(), f.data().begin(), f.data().end());
    }
  }
  if (batch.labels.size() != stack_shape[0]) {
    throw std::invalid_argument("batch labels do not match the sampled frames");
  }

  const FrameNodes fn =
      frame_nodes(g, g.input(Tensor(stack_shape, std::move(pixels))), params, config.model, layout);
  LossNodes out;
  out.raw_scores = fn.raw_scores;
  out.softmax = softmax_loss(g, fn.frame_descriptor, batch.labels, params);

  std::vector<Var> losses;
  for (std::size_t i = 0; i < batch.triplets.size(); ++i) {
    Var d[3];
    for (std::size_t k = 0; k < 3; ++k) {
      const auto [begin, end] = spans[3 * i + k];
      d[k] = tracklet_nodes(fn, begin, end, config.model).descriptor;
    }
    losses.push_back(triplet_loss(d[0], d[1], d[2], config.margin));
  }
  out.triplet = losses.size() == 1 ? losses.front() : ad::mean_rows(ad::concat(losses, 0));
  out.total = ad::add(out.softmax, out.triplet);
  return out;
}

template Var softmax_loss<ParamStore>(Graph&, Var, const std::vector<std::size_t>&, ParamStore&);
template Var softmax_loss<const ParamStore>(Graph&, Var, const std::vector<std::size_t>&,
                                            const ParamStore&);
template LossNodes total_loss<ParamStore>(Graph&, const Dataset&, const TripletBatch&, ParamStore&,
                                          const TrainConfig&, const RegionLayout&);
template LossNodes total_loss<const ParamStore>(Graph&, const Dataset&, const TripletBatch&,
                                                const ParamStore&, const TrainConfig&,
                                                const RegionLayout&);

TrainResult train(const Dataset& dataset, const std::vector<std::size_t>& tracklets,
                  const TrainConfig& config, const RegionLayout& layout,
                  const StepCallback& on_step) {
  config.validate();
  if (tracklets.empty()) throw DataError("no training tracklets");
  TrainConfig cfg = config;
  cfg.model.num_classes = class_map(dataset, tracklets).size();

  TrainResult result;
  result.config = cfg.model;
  result.params = init_params(cfg.model, derive_seed(cfg.seed, 1));
  ParamStore& params = result.params;
  Rng sampler(derive_seed(cfg.seed, 2));

  std::map<std::string, Tensor> velocity;
  for (const auto& name : params.names()) velocity.emplace(name, Tensor(params.value(name).shape()));

  const std::size_t per_epoch = cfg.steps_per_epoch > 0
                                    ? cfg.steps_per_epoch
                                    : (tracklets.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t steps = cfg.epochs * per_epoch;
  for (std::size_t step = 0; step < steps; ++step) {
    const TripletBatch batch = sample_triplets(dataset, tracklets, cfg, sampler);
    Graph g;
    const LossNodes loss = total_loss(g, dataset, batch, params, cfg, layout);
    try {
      g.forward();
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    params.zero_grad();
    g.backward(loss.total);

    StepMetrics m;
    m.step = step;
    m.loss_total = loss.total.value().item();
    m.loss_softmax = loss.softmax.value().item();
    m.loss_triplet = loss.triplet.value().item();
    for (Region r : cfg.model.regions.regions()) {
      const Tensor& s = loss.raw_scores[index_of(r)].value();
      double sum = 0.0;
      for (double v : s.data()) sum += v;
      m.mean_mu[index_of(r)] = sum / static_cast<double>(s.size());
    }

    for (const auto& name : params.names()) {
      const Tensor& grad = params.grad(name);
      if (!grad.all_finite()) {
        throw NumericError("training diverged at step " + std::to_string(step) +
                           ": non-finite gradient for '" + name + "'");
      }
      Tensor& v = velocity.at(name);
      Tensor& p = params.value(name);
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = cfg.momentum * v[i] + grad[i];
        p[i] -= cfg.learning_rate * v[i];
      }
    }
    result.metrics.push_back(m);
    if (on_step) on_step(m);
  }
  params.zero_grad();
  return result;
}

GradCheckInstance gradcheck_instance(std::uint64_t seed, std::size_t dim) {
  // Random frames whose row bands have their own brightness, so frames of a
  // tracklet differ enough for the quality scores to matter. No exact zeros,
  // which would put rectifiers on a kink.
  GradCheckInstance inst;
  Rng pixel_rng(derive_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int id = 0; id < 2; ++id) {
    inst.dataset.identity_names.push_back("id" + std::to_string(id));
    for (int cam = 0; cam < 2; ++cam) {
      if (id == 0) inst.dataset.camera_names.push_back("cam" + std::to_string(cam));
      Tracklet t;
      t.id = "id" + std::to_string(id) + "_cam" + std::to_string(cam);
      t.identity_name = inst.dataset.identity_names.back();
      t.camera_name = "cam" + std::to_string(cam);
      t.identity = id;
      t.camera = cam;
      t.frames = Tensor({3, 3, 16, 8});
      for (std::size_t f = 0; f < 3; ++f) {
        std::array<double, 3> level{};
        for (double& l : level) l = 0.2 + 1.6 * unit(pixel_rng);
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 8; ++x)
              t.frames[((f * 3 + c) * 16 + y) * 8 + x] = level[y < 7 ? 0 : y < 11 ? 1 : 2] * unit(pixel_rng);
      }
      t.frame_paths = {"0", "1", "2"};
      inst.dataset.tracklets.push_back(std::move(t));
    }
  }
  inst.config.model.backbone.channels = {4, dim};
  inst.config.model.quality_hidden = 8;
  inst.config.model.num_classes = 2;
  inst.config.frames_per_sample = 3;
  inst.config.batch_size = 2;
  inst.config.margin = 2.0;
  inst.config.seed = seed;
  std::vector<std::size_t> all(inst.dataset.tracklets.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Rng rng(derive_seed(seed, 2));
  inst.batch = sample_triplets(inst.dataset, all, inst.config, rng);
  inst.params = init_params(inst.config.model, derive_seed(seed, 1));
  // Non-zero biases so no unit starts exactly on a rectifier kink.
  std::uniform_real_distribution<double> bias(0.05, 0.25);
  Rng bias_rng(derive_seed(seed, 3));
  for (const auto& name : inst.params.names()) {
    if (name.ends_with(".bias"))
      for (double& v : inst.params.value(name).data()) v = bias(bias_rng);
  }
  return inst;
}

GradCheckReport check_total_loss(GradCheckInstance& inst, const GradCheckOptions& options) {
  const LossBuilder build = [&inst](Graph& g, ParamStore& params) {
    return total_loss(g, inst.dataset, inst.batch, params, inst.config, RegionLayout{}).total;
  };
  return gradient_check(inst.params, build, options);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepMetrics>& metrics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write metrics " + path.string());
  out << "step,loss_total,loss_softmax,loss_triplet,mean_mu_u,mean_mu_m,mean_mu_l\n";
  char line[256];
  for (const auto& m : metrics) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.step,
                  m.loss_total, m.loss_softmax, m.loss_triplet, m.mean_mu[0], m.mean_mu[1],
                  m.mean_mu[2]);
    out << line;
  }
}

}  // namespace rqen
