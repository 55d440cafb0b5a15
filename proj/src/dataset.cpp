#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rqen/dataset.hpp"
#include "rqen/errors.hpp"
#include "rqen/rng.hpp"

namespace rqen {

Tensor Tracklet::gather(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw std::invalid_argument("gather: no frame indices");
  const std::size_t stride = frames.size() / frames.dim(0);
  Shape s = frames.shape();
  s[0] = indices.size();
  std::vector<double> vals;
  vals.reserve(indices.size() * stride);
  for (std::size_t i : indices) {
    if (i >= frames.dim(0)) throw std::out_of_range("gather: frame index out of range");
    const auto base = frames.data().begin() + static_cast<std::ptrdiff_t>(i * stride);
    vals.insert(vals.end(), base, base + static_cast<std::ptrdiff_t>(stride));
  }
  return Tensor(std::move(s), std::move(vals));
}

Shape Dataset::frame_shape() const {
  if (tracklets.empty()) throw std::logic_error("frame_shape of an empty dataset");
  const Shape& s = tracklets.front().frames.shape();
  return {s[1], s[2], s[3]};
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string f;
  std::stringstream ss(line);
  while (std::getline(ss, f, '\t')) fields.push_back(f);
  if (!line.empty() && line.back() == '\t') fields.emplace_back();
  return fields;
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& root_or_manifest) {
  const auto manifest_path = std::filesystem::is_directory(root_or_manifest)
                                 ? root_or_manifest / "manifest.tsv"
                                 : root_or_manifest;
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line != kManifestHeader) {
        throw DataError(manifest_path.string() + ":1: expected header '" +
                        std::string(kManifestHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 4 || f[0].empty() || f[1].empty() || f[2].empty() || f[3].empty()) {
      throw DataError(manifest_path.string() + ":" + std::to_string(row) +
                      ": expected 4 non-empty tab-separated fields");
    }
    m.rows.push_back(ManifestRow{f[0], f[1], f[2], f[3]});
  }
  if (!header_seen) throw DataError(manifest_path.string() + ": empty manifest");
  if (m.rows.empty()) throw DataError(manifest_path.string() + ": manifest lists no frames");
  if (std::filesystem::exists(m.root / "landmarks.tsv")) m.landmarks = m.root / "landmarks.tsv";
  if (std::filesystem::exists(m.root / "occlusion_truth.tsv")) {
    m.occlusion_truth = m.root / "occlusion_truth.tsv";
  }
  return m;
}

void write_manifest(const std::filesystem::path& manifest_path,
                    const std::vector<ManifestRow>& rows) {
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + manifest_path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : rows) {
    out << r.tracklet_id << '\t' << r.identity << '\t' << r.camera << '\t' << r.frame_path
        << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& root_or_manifest) {
  const DatasetManifest m = read_manifest(root_or_manifest);

  Dataset ds;
  ds.root = m.root;
  std::map<std::string, int> identity_index, camera_index;
  std::map<std::string, std::size_t> tracklet_index;
  std::vector<std::vector<double>> pixels;
  std::optional<Shape> frame_shape;

  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    const ManifestRow& row = m.rows[r];
    const std::string where = (m.root / "manifest.tsv").string() + ":" + std::to_string(r + 2);
    auto [iid, inew] = identity_index.try_emplace(row.identity, static_cast<int>(identity_index.size()));
    if (inew) ds.identity_names.push_back(row.identity);
    auto [cid, cnew] = camera_index.try_emplace(row.camera, static_cast<int>(camera_index.size()));
    if (cnew) ds.camera_names.push_back(row.camera);

    auto [tit, tnew] = tracklet_index.try_emplace(row.tracklet_id, ds.tracklets.size());
    if (tnew) {
      Tracklet t;
      t.id = row.tracklet_id;
      t.identity_name = row.identity;
      t.camera_name = row.camera;
      t.identity = iid->second;
      t.camera = cid->second;
      ds.tracklets.push_back(std::move(t));
      pixels.emplace_back();
    }
    Tracklet& t = ds.tracklets[tit->second];
    if (t.identity_name != row.identity || t.camera_name != row.camera) {
      throw DataError(where + ": tracklet '" + row.tracklet_id +
                      "' changes identity or camera between rows");
    }

    const auto path = m.root / row.frame_path;
    Image img;
    try {
      img = read_pnm(path);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    Tensor frame = image_to_tensor(img);
    if (!frame_shape) {
      frame_shape = frame.shape();
    } else if (*frame_shape != frame.shape()) {
      throw DataError(where + ": frame " + path.string() + " has shape " +
                      shape_string(frame.shape()) + ", expected " + shape_string(*frame_shape));
    }
    t.frame_paths.push_back(row.frame_path);
    auto& buf = pixels[tit->second];
    buf.insert(buf.end(), frame.data().begin(), frame.data().end());
  }

  for (std::size_t i = 0; i < ds.tracklets.size(); ++i) {
    Tracklet& t = ds.tracklets[i];
    Shape s{t.frame_paths.size()};
    s.insert(s.end(), frame_shape->begin(), frame_shape->end());
    t.frames = Tensor(std::move(s), std::move(pixels[i]));
  }
  return ds;
}

// ---- protocol splits ------------------------------------------------------

Protocol parse_protocol(const std::string& text) {
  if (text == "fifty-fifty-cross-camera" || text == "fifty-fifty") {
    return Protocol::fifty_fifty_cross_camera;
  }
  if (text == "scene-split") return Protocol::scene_split;
  throw std::invalid_argument("unknown protocol '" + text + "'");
}

std::string protocol_name(Protocol p) {
  return p == Protocol::fifty_fifty_cross_camera ? "fifty-fifty-cross-camera" : "scene-split";
}

namespace {

DatasetSplit split_fifty_fifty(const Dataset& ds, std::uint64_t seed, const SplitOptions& opt) {
  std::map<int, std::set<int>> cameras_of;
  for (const auto& t : ds.tracklets) cameras_of[t.identity].insert(t.camera);
  if (ds.camera_count() < 2) {
    throw DataError("fifty-fifty-cross-camera protocol needs at least two cameras");
  }
  std::vector<int> eligible, single_camera;
  for (const auto& [id, cams] : cameras_of) (cams.size() >= 2 ? eligible : single_camera).push_back(id);
  if (eligible.size() < 2) {
    throw DataError("fifty-fifty-cross-camera protocol needs at least two identities seen by "
                    "two cameras");
  }

  Rng rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  const std::size_t n_train = eligible.size() / 2;
  DatasetSplit split;
  split.train_identities.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.train_identities.insert(split.train_identities.end(), single_camera.begin(), single_camera.end());
  split.test_identities.assign(eligible.begin() + static_cast<std::ptrdiff_t>(n_train), eligible.end());
  std::sort(split.train_identities.begin(), split.train_identities.end());
  std::sort(split.test_identities.begin(), split.test_identities.end());

  std::map<int, int> probe_camera;
  Rng role_rng(opt.role_seed);
  for (int id : split.test_identities) {
    const auto& cams = cameras_of[id];
    std::vector<int> c(cams.begin(), cams.end());
    probe_camera[id] = opt.random_probe_camera ? c[uniform_index(role_rng, c.size())] : c.front();
  }
  const std::set<int> train_set(split.train_identities.begin(), split.train_identities.end());
  for (std::size_t i = 0; i < ds.tracklets.size(); ++i) {
    const auto& t = ds.tracklets[i];
    if (train_set.count(t.identity)) {
      split.train.push_back(i);
    } else if (t.camera == probe_camera[t.identity]) {
      split.probe.push_back(i);
    } else {
      split.gallery.push_back(i);
    }
  }
  return split;
}

DatasetSplit split_scene(const Dataset& ds, const SplitOptions& opt) {
  if (opt.test_cameras.empty()) throw DataError("scene-split protocol needs test cameras");
  const std::set<int> test_cams(opt.test_cameras.begin(), opt.test_cameras.end());
  if (!test_cams.count(opt.probe_camera)) {
    throw DataError("scene-split probe camera must be one of the test cameras");
  }
  std::set<int> test_ids;
  for (const auto& t : ds.tracklets)
    if (test_cams.count(t.camera)) test_ids.insert(t.identity);
  DatasetSplit split;
  std::set<int> train_ids;
  for (std::size_t i = 0; i < ds.tracklets.size(); ++i) {
    const auto& t = ds.tracklets[i];
    if (!test_ids.count(t.identity)) {
      split.train.push_back(i);
      train_ids.insert(t.identity);
    } else if (t.camera == opt.probe_camera) {
      split.probe.push_back(i);
    } else if (test_cams.count(t.camera)) {
      split.gallery.push_back(i);
    }
  }
  if (split.train.empty()) throw DataError("scene-split leaves no training identities");
  if (split.probe.empty() || split.gallery.empty()) {
    throw DataError("scene-split yields an empty probe or gallery set");
  }
  split.train_identities.assign(train_ids.begin(), train_ids.end());
  split.test_identities.assign(test_ids.begin(), test_ids.end());
  return split;
}

}  // namespace

DatasetSplit split_protocol(const Dataset& dataset, Protocol protocol, std::uint64_t seed,
                            const SplitOptions& options) {
  if (dataset.tracklets.empty()) throw DataError("cannot split an empty dataset");
  return protocol == Protocol::fifty_fifty_cross_camera ? split_fifty_fifty(dataset, seed, options)
                                                        : split_scene(dataset, options);
}

}  // namespace rqen
