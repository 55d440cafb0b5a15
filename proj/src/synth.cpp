#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "rqen/dataset.hpp"
#include "rqen/errors.hpp"
#include "rqen/rng.hpp"

namespace rqen {

void SynthConfig::validate() const {
  if (identities < 1 || cameras < 1 || tracklets_per_camera < 1 || frames < 1) {
    throw std::invalid_argument("synthetic counts must all be >= 1");
  }
  if (height < 3 || width < 1) throw std::invalid_argument("synthetic frames need height >= 3");
  if (!(occlusion.fraction >= 0.0 && occlusion.fraction <= 1.0)) {
    throw std::invalid_argument("occlusion fraction must lie in [0,1]");
  }
  if (!(occlusion.intensity >= 0.0 && occlusion.intensity <= 1.0)) {
    throw std::invalid_argument("occluder intensity must lie in [0,1]");
  }
  if (noise < 0.0 || palette_size < 1) throw std::invalid_argument("bad noise or palette size");
  if (landmark_dropout < 0.0 || landmark_dropout > 1.0) {
    throw std::invalid_argument("landmark dropout must lie in [0,1]");
  }
}

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Canonical vertical landmark positions (fraction of height) whose group
// centroids sit at the midpoints of the 3:2:2 bands.
constexpr std::array<double, kLandmarkCount> kLandmarkY{
    0.5 / 14, 1.5 / 14, 2.0 / 14, 2.5 / 14, 4.0 / 14,  2.0 / 14,  2.5 / 14,
    4.0 / 14, 5.5 / 14, 5.5 / 14, 10.5 / 14, 10.5 / 14, 13.5 / 14, 13.5 / 14};
constexpr std::array<double, kLandmarkCount> kLandmarkX{
    0.50, 0.50, 0.35, 0.30, 0.28, 0.65, 0.70, 0.72, 0.40, 0.60, 0.40, 0.60, 0.40, 0.60};

struct Appearance {
  std::array<Rgb, 3> band_color;
  std::array<int, 3> texture;  // 0 flat, 1 vertical stripes, 2 horizontal stripes
};

}  // namespace

SyntheticDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng palette_rng(derive_seed(cfg.seed, 0));
  Rng identity_rng(derive_seed(cfg.seed, 1));
  Rng frame_rng(derive_seed(cfg.seed, 2));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t P = cfg.palette_size;
  std::array<std::vector<Rgb>, 3> palette;
  for (auto& band : palette) {
    const double offset = unit(palette_rng);
    for (std::size_t k = 0; k < P; ++k) {
      band.push_back(hsv_to_rgb(offset + static_cast<double>(k) / static_cast<double>(P), 0.55,
                                0.45 + 0.3 * static_cast<double>(k % 2)));
    }
  }

  // Distinct colour combinations while they last.
  std::vector<std::array<std::size_t, 3>> combos;
  for (std::size_t a = 0; a < P; ++a)
    for (std::size_t b = 0; b < P; ++b)
      for (std::size_t c = 0; c < P; ++c) combos.push_back({a, b, c});
  std::shuffle(combos.begin(), combos.end(), identity_rng);
  std::vector<Appearance> people(cfg.identities);
  for (std::size_t i = 0; i < cfg.identities; ++i) {
    const auto& combo = combos[i % combos.size()];
    for (std::size_t b = 0; b < 3; ++b) {
      people[i].band_color[b] = palette[b][combo[b]];
      people[i].texture[b] = static_cast<int>(uniform_index(identity_rng, 3));
    }
  }

  std::vector<Rgb> camera_cast(cfg.cameras);
  for (auto& cast : camera_cast)
    for (double& v : cast) v = (2.0 * unit(identity_rng) - 1.0) * cfg.camera_shift;

  const auto bands = split_rows(cfg.height, RegionLayout{});
  SyntheticDataset out;
  out.occluded_rows = bands[index_of(cfg.occlusion.region)];
  out.occluder.width = cfg.width;
  out.occluder.height = out.occluded_rows.size();
  out.occluder.channels = 3;
  out.occluder.pixels.resize(out.occluder.width * out.occluder.height * 3);
  for (std::size_t y = 0; y < out.occluder.height; y += 2)
    for (std::size_t x = 0; x < out.occluder.width; x += 2) {
      std::array<std::uint8_t, 3> c;
      for (auto& v : c) v = quantize(cfg.occlusion.intensity * static_cast<double>(uniform_index(palette_rng, 2)));
      for (std::size_t yy = y; yy < std::min(y + 2, out.occluder.height); ++yy)
        for (std::size_t xx = x; xx < std::min(x + 2, out.occluder.width); ++xx)
          for (std::size_t ch = 0; ch < 3; ++ch) out.occluder.at(yy, xx, ch) = c[ch];
    }

  char name[64];
  for (std::size_t cam = 0; cam < cfg.cameras; ++cam) {
    for (std::size_t id = 0; id < cfg.identities; ++id) {
      for (std::size_t tr = 0; tr < cfg.tracklets_per_camera; ++tr) {
        SyntheticTracklet t;
        std::snprintf(name, sizeof name, "id%03zu", id);
        t.identity = name;
        std::snprintf(name, sizeof name, "cam%zu", cam);
        t.camera = name;
        std::snprintf(name, sizeof name, "id%03zu_cam%zu_t%zu", id, cam, tr);
        t.id = name;
        const Appearance& look = people[id];
        for (std::size_t f = 0; f < cfg.frames; ++f) {
          SyntheticFrame frame;
          std::snprintf(name, sizeof name, "/%03zu.ppm", f);
          frame.path = "images/" + t.camera + "/" + t.identity + "/" + t.id + name;
          Image& img = frame.image;
          img.width = cfg.width;
          img.height = cfg.height;
          img.channels = 3;
          img.pixels.resize(cfg.width * cfg.height * 3);
          const long dy = static_cast<long>(uniform_index(frame_rng, 3)) - 1;
          const long dx = static_cast<long>(uniform_index(frame_rng, 3)) - 1;
          for (std::size_t y = 0; y < cfg.height; ++y) {
            const long sy = std::clamp<long>(static_cast<long>(y) - dy, 0, static_cast<long>(cfg.height) - 1);
            const std::size_t band = sy < static_cast<long>(bands[0].end)   ? 0
                                     : sy < static_cast<long>(bands[1].end) ? 1
                                                                            : 2;
            for (std::size_t x = 0; x < cfg.width; ++x) {
              const long sx = std::clamp<long>(static_cast<long>(x) - dx, 0, static_cast<long>(cfg.width) - 1);
              double tex = 0.0;
              if (look.texture[band] == 1) tex = (sx % 2 ? 1.0 : -1.0) * cfg.texture_amplitude;
              if (look.texture[band] == 2) tex = (sy % 2 ? 1.0 : -1.0) * cfg.texture_amplitude;
              for (std::size_t c = 0; c < 3; ++c) {
                const double v = look.band_color[band][c] + tex + camera_cast[cam][c] +
                                 cfg.noise * gauss(frame_rng);
                img.at(y, x, c) = quantize(v);
              }
            }
          }
          frame.occluded = unit(frame_rng) < cfg.occlusion.fraction;
          if (frame.occluded) {
            for (std::size_t y = 0; y < out.occluder.height; ++y)
              for (std::size_t x = 0; x < cfg.width; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                  img.at(out.occluded_rows.begin + y, x, c) = out.occluder.at(y, x, c);
          }
          frame.landmarks.frame = frame.path;
          for (std::size_t k = 0; k < kLandmarkCount; ++k) {
            Landmark& p = frame.landmarks.points[k];
            const double jx = 0.01 * gauss(frame_rng), jy = 0.01 * gauss(frame_rng);
            const bool drop = unit(frame_rng) < cfg.landmark_dropout;
            p.valid = !drop;
            p.x = p.valid ? std::clamp(kLandmarkX[k] + static_cast<double>(dx) / static_cast<double>(cfg.width) + jx, 0.0, 1.0) : -1.0;
            p.y = p.valid ? std::clamp(kLandmarkY[k] + static_cast<double>(dy) / static_cast<double>(cfg.height) + jy, 0.0, 1.0) : -1.0;
          }
          t.frames.push_back(std::move(frame));
        }
        out.tracklets.push_back(std::move(t));
      }
    }
  }
  return out;
}

DatasetManifest synth_generate(const SynthConfig& config, const std::filesystem::path& root) {
  const SyntheticDataset data = generate_synthetic(config);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec || !std::filesystem::is_directory(root)) {
    throw DataError("cannot create output directory " + root.string());
  }

  DatasetManifest m;
  m.root = root;
  std::vector<LandmarkSet> landmarks;
  std::ofstream truth(root / "occlusion_truth.tsv", std::ios::binary);
  if (!truth) throw DataError("cannot write " + (root / "occlusion_truth.tsv").string());
  truth << "frame_path\tregion\toccluded\n";
  for (const auto& t : data.tracklets) {
    for (const auto& f : t.frames) {
      const auto path = root / f.path;
      std::filesystem::create_directories(path.parent_path(), ec);
      if (ec) throw DataError("cannot create directory " + path.parent_path().string());
      write_pnm(path, f.image);
      m.rows.push_back(ManifestRow{t.id, t.identity, t.camera, f.path});
      landmarks.push_back(f.landmarks);
      for (Region r : kAllRegions) {
        const bool occ = f.occluded && r == config.occlusion.region;
        truth << f.path << '\t' << region_code(r) << '\t' << (occ ? 1 : 0) << '\n';
      }
    }
  }
  truth.close();
  write_manifest(root / "manifest.tsv", m.rows);
  write_landmarks(root / "landmarks.tsv", landmarks);
  m.landmarks = root / "landmarks.tsv";
  m.occlusion_truth = root / "occlusion_truth.tsv";
  return m;
}

Dataset to_dataset(const SyntheticDataset& data) {
  Dataset ds;
  std::map<std::string, int> identity_index, camera_index;
  for (const auto& st : data.tracklets) {
    if (st.frames.empty()) throw DataError("synthetic tracklet '" + st.id + "' has no frames");
    Tracklet t;
    t.id = st.id;
    t.identity_name = st.identity;
    t.camera_name = st.camera;
    auto [iid, inew] = identity_index.try_emplace(st.identity, static_cast<int>(identity_index.size()));
    if (inew) ds.identity_names.push_back(st.identity);
    auto [cid, cnew] = camera_index.try_emplace(st.camera, static_cast<int>(camera_index.size()));
    if (cnew) ds.camera_names.push_back(st.camera);
    t.identity = iid->second;
    t.camera = cid->second;
    std::vector<double> pixels;
    Shape shape{st.frames.size()};
    for (const auto& f : st.frames) {
      const Tensor x = image_to_tensor(f.image);
      if (shape.size() == 1) shape.insert(shape.end(), x.shape().begin(), x.shape().end());
      pixels.insert(pixels.end(), x.data().begin(), x.data().end());
      t.frame_paths.push_back(f.path);
    }
    t.frames = Tensor(std::move(shape), std::move(pixels));
    ds.tracklets.push_back(std::move(t));
  }
  return ds;
}

std::vector<OcclusionTruth> read_occlusion_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<OcclusionTruth> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1 || line.empty()) continue;
    std::stringstream ss(line);
    std::string p, r, o;
    if (!std::getline(ss, p, '\t') || !std::getline(ss, r, '\t') || !std::getline(ss, o, '\t') ||
        r.size() != 1 || (o != "0" && o != "1")) {
      throw DataError(path.string() + ":" + std::to_string(row) + ": malformed occlusion row");
    }
    out.push_back(OcclusionTruth{p, parse_region(r[0]), o == "1"});
  }
  return out;
}

}  // namespace rqen
