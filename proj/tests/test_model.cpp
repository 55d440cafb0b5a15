#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "rqen/checkpoint.hpp"
#include "rqen/errors.hpp"
#include "rqen/model.hpp"

using namespace rqen;

namespace {

Tensor random_frames(std::size_t n, std::mt19937_64& rng, std::size_t h = 16, std::size_t w = 8) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({n, 3, h, w});
  for (double& v : t.data()) v = u(rng);
  return t;
}

ModelConfig small_config() {
  ModelConfig c;
  c.backbone.channels = {6, 12};
  c.quality_hidden = 8;
  c.num_classes = 3;
  return c;
}

void zero_all(ParamStore& p, const std::string& prefix) {
  for (const auto& n : p.names())
    if (n.rfind(prefix, 0) == 0) p.value(n).fill(0.0);
}

Tensor frame_subset(const Tensor& frames, const std::vector<std::size_t>& order) {
  const std::size_t per = frames.size() / frames.dim(0);
  Shape s = frames.shape();
  s[0] = order.size();
  Tensor out(s);
  for (std::size_t i = 0; i < order.size(); ++i)
    std::copy_n(frames.data().begin() + static_cast<std::ptrdiff_t>(order[i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  return out;
}

}  // namespace

TEST_CASE("backbone shapes") {
  const BackboneConfig b;
  CHECK(b.stage_shape(1)[1] >= 7);
  CHECK(b.feature_dim() == 64);
  BackboneConfig bad;
  bad.late_tap = 5;
  CHECK_THROWS(bad.validate());
  bad = BackboneConfig{};
  bad.channels = {8, 1};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("featurize_frame") {
  std::mt19937_64 rng(1);
  const ModelConfig config;
  ParamStore p = init_params(config, 3);
  const Tensor frame = random_frames(1, rng);
  const auto [mid, late] = featurize_frame(frame, p, config.backbone);
  CHECK(mid.shape() == Shape{1, 8, 8, 4});
  CHECK(late.shape() == Shape{1, 64, 8, 4});
  CHECK(late.dim(2) >= 7);

  const auto again = featurize_frame(frame, p, config.backbone);
  CHECK(again.first == mid);
  CHECK(again.second == late);

  zero_all(p, "backbone.stage1");
  const auto zero = featurize_frame(Tensor({3, 16, 8}), p, config.backbone);
  for (double v : zero.second.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(featurize_frame(Tensor({3, 12, 8}), p, config.backbone), ShapeError);
  CHECK_THROWS_AS(featurize_frame(Tensor({1, 16, 8}), p, config.backbone), ShapeError);
}

TEST_CASE("regional features") {
  std::mt19937_64 rng(2);
  SUBCASE("constant map") {
    const auto f = regional_features(Tensor({2, 5, 7, 4}, 1.75), RegionLayout{});
    for (const auto& part : f) {
      CHECK(part.shape() == Shape{2, 5});
      for (double v : part.data()) CHECK(v == 1.75);
    }
  }
  SUBCASE("block structure") {
    Tensor map({1, 3, 7, 4}, 0.0);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 4; ++x) map[(c * 7 + y) * 4 + x] = 1.0;
    const auto f = regional_features(map, RegionLayout{});
    for (double v : f[0].data()) CHECK(v == 1.0);
    for (double v : f[1].data()) CHECK(v == 0.0);
    for (double v : f[2].data()) CHECK(v == 0.0);
  }
  SUBCASE("random map against direct summation") {
    for (int c = 0; c < 50; ++c) {
      const std::size_t D = 5, h = 7, w = 4;
      Tensor map({1, D, h, w});
      std::normal_distribution<double> n;
      for (double& v : map.data()) v = n(rng);
      const auto f = regional_features(map, RegionLayout{});
      const std::size_t bounds[4] = {0, 3, 5, 7};
      for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t d = 0; d < D; ++d) {
          double sum = 0;
          for (std::size_t y = bounds[r]; y < bounds[r + 1]; ++y)
            for (std::size_t x = 0; x < w; ++x) sum += map[(d * h + y) * w + x];
          CHECK(f[r][d] == doctest::Approx(sum / ((bounds[r + 1] - bounds[r]) * w)).epsilon(1e-13));
        }
      }
    }
  }
}

TEST_CASE("raw quality scores") {
  std::mt19937_64 rng(3);
  const ModelConfig config = small_config();
  ParamStore p = init_params(config, 4);
  Tensor mid({4, 6, 8, 4});
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (double& v : mid.data()) v = u(rng);

  SUBCASE("scores lie in (0,1)") {
    for (const auto& s : raw_quality_scores(mid, RegionLayout{}, p, config)) {
      CHECK(s.shape() == Shape{4, 1});
      for (double v : s.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }
  SUBCASE("zero weights give one half") {
    zero_all(p, "quality.");
    for (const auto& s : raw_quality_scores(mid, RegionLayout{}, p, config))
      for (double v : s.data()) CHECK(v == 0.5);
  }
  SUBCASE("a large output bias saturates towards one") {
    zero_all(p, "quality.");
    for (Region r : kAllRegions) p.value(quality_param(r, "out", "bias")).fill(10.0);
    for (const auto& s : raw_quality_scores(mid, RegionLayout{}, p, config))
      for (double v : s.data()) CHECK(v > 0.9999);
  }
  SUBCASE("each region only sees its own rows") {
    const auto before = raw_quality_scores(mid, RegionLayout{}, p, config);
    Tensor changed = mid;
    const auto rows = split_rows(8, RegionLayout{});
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t c = 0; c < 6; ++c)
        for (std::size_t y = rows[2].begin; y < rows[2].end; ++y)
          for (std::size_t x = 0; x < 4; ++x) changed[((n * 6 + c) * 8 + y) * 4 + x] += u(rng);
    const auto after = raw_quality_scores(changed, RegionLayout{}, p, config);
    CHECK(after[0] == before[0]);
    CHECK(after[1] == before[1]);
    CHECK(after[2] != before[2]);
  }
}

TEST_CASE("score normalization examples") {
  CHECK(normalize_scores(Tensor({1, 1}, {0.37}))[0] == 1.0);
  const Tensor uniform = normalize_scores(Tensor({4, 1}, 0.2));
  for (double v : uniform.data()) CHECK(v == 0.25);
  const Tensor two = normalize_scores(Tensor({2, 1}, {0.9, 0.3}));
  CHECK(two[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(two[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(normalize_scores(Tensor{}), std::invalid_argument);
  CHECK_THROWS_AS(normalize_scores(Tensor({2, 2}, 0.5)), ShapeError);
}

TEST_CASE("aggregation examples") {
  const Tensor f({2, 2}, {1, 0, 0, 1});
  const Tensor w({2, 1}, {0.25, 0.75});
  const Tensor agg = aggregate_set(f, w, false);
  CHECK(agg.shape() == Shape{1, 2});
  CHECK(agg[0] == 0.25);
  CHECK(agg[1] == 0.75);

  const Tensor single = aggregate_set(Tensor({1, 3}, {0.5, -2, 4}), Tensor({1, 1}, {1.0}), false);
  CHECK(single.values() == std::vector<double>{0.5, -2, 4});

  const Tensor mean = aggregate_set(Tensor({4, 1}, {1, 2, 3, 6}), Tensor({4, 1}, 0.25), false);
  CHECK(mean[0] == 3.0);

  const Tensor unit = aggregate_set(f, w, true);
  CHECK(std::hypot(unit[0], unit[1]) == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(aggregate_set(Tensor({3, 2}), Tensor({2, 1}, 0.5), false), ShapeError);
}

TEST_CASE("aggregation properties on random sets") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int c = 0; c < 200; ++c) {
    const std::size_t count = std::uniform_int_distribution<std::size_t>(1, 12)(rng), D = 6;
    Tensor f({count, D}), raw({count, 1});
    for (double& v : f.data()) v = n(rng);
    for (double& v : raw.data()) v = u(rng);
    const Tensor s = normalize_scores(raw);
    const Tensor agg = aggregate_set(f, s, false);

    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor shuffled = aggregate_set(frame_subset(f, perm), frame_subset(s, perm), false);
    for (std::size_t d = 0; d < D; ++d) {
      CHECK(std::abs(shuffled[d] - agg[d]) <= 1e-12);
      double lo = f[d], hi = f[d];
      for (std::size_t i = 1; i < count; ++i) {
        lo = std::min(lo, f[i * D + d]);
        hi = std::max(hi, f[i * D + d]);
      }
      CHECK(agg[d] >= lo - 1e-12);
      CHECK(agg[d] <= hi + 1e-12);
    }
  }
}

TEST_CASE("forward_tracklet") {
  std::mt19937_64 rng(6);
  ModelConfig config = small_config();
  const ParamStore p = init_params(config, 7);
  const Tensor frames = random_frames(5, rng);

  SUBCASE("outputs are consistent") {
    const TrackletOutputs out = forward_tracklet(p, config, RegionLayout{}, frames);
    CHECK(out.frames.size() == 5);
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(std::accumulate(out.scores[r].begin(), out.scores[r].end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
      double norm = 0;
      for (double v : out.video.parts[r]) norm += v * v;
      CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    }
    CHECK(out.video.descriptor().size() == 36);
  }
  SUBCASE("a single frame gives its own regional features") {
    config.l2_normalize = false;
    const Tensor one = frame_subset(frames, {2});
    const TrackletOutputs out = forward_tracklet(p, config, RegionLayout{}, one);
    for (std::size_t r = 0; r < 3; ++r) CHECK(out.video.parts[r] == out.frames[0].features[r]);
  }
  SUBCASE("frame order does not matter") {
    const TrackletOutputs a = forward_tracklet(p, config, RegionLayout{}, frames);
    const TrackletOutputs b = forward_tracklet(p, config, RegionLayout{}, frame_subset(frames, {3, 0, 4, 2, 1}));
    const auto da = a.video.descriptor(), db = b.video.descriptor();
    for (std::size_t i = 0; i < da.size(); ++i) CHECK(std::abs(da[i] - db[i]) <= 1e-12);
  }
  SUBCASE("a duplicated frame matches the single frame") {
    const TrackletOutputs a = forward_tracklet(p, config, RegionLayout{}, frame_subset(frames, {1}));
    const TrackletOutputs b = forward_tracklet(p, config, RegionLayout{}, frame_subset(frames, {1, 1}));
    CHECK(b.scores[0] == std::vector<double>{0.5, 0.5});
    const auto da = a.video.descriptor(), db = b.video.descriptor();
    for (std::size_t i = 0; i < da.size(); ++i) CHECK(std::abs(da[i] - db[i]) <= 1e-15);
  }
  SUBCASE("quality-fixed aggregation is the temporal average") {
    config.quality_fixed = true;
    config.l2_normalize = false;
    const TrackletOutputs out = forward_tracklet(p, config, RegionLayout{}, frames);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t d = 0; d < 12; ++d) {
        double sum = 0;
        for (const auto& f : out.frames) sum += f.features[r][d];
        CHECK(std::abs(out.video.parts[r][d] - sum / 5) <= 1e-9);
      }
    }
  }
  SUBCASE("region masks drop parts") {
    config.regions = RegionMask::parse("m");
    const ParamStore pm = init_params(config, 7);
    const TrackletOutputs out = forward_tracklet(pm, config, RegionLayout{}, frames);
    CHECK(out.video.parts[0].empty());
    CHECK(out.video.parts[1].size() == 12);
    CHECK(out.video.descriptor().size() == 12);
  }
  SUBCASE("empty tracklet is rejected") {
    CHECK_THROWS_AS(forward_tracklet(p, config, RegionLayout{}, Tensor{}), std::invalid_argument);
  }
}

TEST_CASE("checkpoint encoding") {
  ModelConfig config = small_config();
  config.regions = RegionMask::parse("u,l");
  config.quality_fixed = true;
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.layout = RegionLayout{0.4, 0.7};
  ckpt.params = init_params(config, 11);
  ckpt.split = TrainingSplit{Protocol::scene_split, 99, {1, 2}, 2};

  const auto bytes = encode_checkpoint(ckpt);
  CHECK(std::equal(bytes.begin(), bytes.begin() + 8, kCheckpointMagic));
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back == ckpt);
  CHECK(encode_checkpoint(back) == bytes);

  SUBCASE("file roundtrip is byte-identical") {
    const auto dir = std::filesystem::temp_directory_path() / "rqen_ckpt_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "a.ckpt", ckpt);
    save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
    std::ifstream a(dir / "a.ckpt", std::ios::binary), b(dir / "b.ckpt", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    std::filesystem::remove_all(dir);
  }
  SUBCASE("corrupt input is rejected") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), DataError);
    auto cut = bytes;
    cut.resize(bytes.size() / 2);
    CHECK_THROWS_AS(decode_checkpoint(cut), DataError);
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(extra), DataError);
  }
}
