#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rqen/image_io.hpp"
#include "rqen/regions.hpp"
#include "rqen/tensor.hpp"

namespace rqen {

// One person under one camera: frames [n, C, H, W] in manifest order.
struct Tracklet {
  std::string id;
  std::string identity_name;
  std::string camera_name;
  int identity = 0;  // dense index, order of first appearance
  int camera = 0;    // dense index, order of first appearance
  Tensor frames;
  std::vector<std::string> frame_paths;

  std::size_t size() const { return frames.empty() ? 0 : frames.dim(0); }
  // Frames at the given indices, in that order.
  Tensor gather(const std::vector<std::size_t>& indices) const;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<Tracklet> tracklets;
  std::vector<std::string> identity_names;
  std::vector<std::string> camera_names;

  std::size_t identity_count() const { return identity_names.size(); }
  std::size_t camera_count() const { return camera_names.size(); }
  // [C, H, W] shared by every frame.
  Shape frame_shape() const;
};

struct ManifestRow {
  std::string tracklet_id;
  std::string identity;
  std::string camera;
  std::string frame_path;  // relative to the dataset root
};

inline constexpr const char* kManifestHeader = "tracklet_id\tidentity\tcamera\tframe_path";

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestRow> rows;
  std::optional<std::filesystem::path> landmarks;
  std::optional<std::filesystem::path> occlusion_truth;
};

// Accepts the manifest file or the directory holding manifest.tsv.
DatasetManifest read_manifest(const std::filesystem::path& root_or_manifest);
void write_manifest(const std::filesystem::path& manifest_path, const std::vector<ManifestRow>& rows);

// Loads `<root>/manifest.tsv` (or the manifest file itself) and every frame.
// Pixels are scaled to [0,1]. Errors name the offending path and row.
Dataset load_dataset(const std::filesystem::path& root_or_manifest);

// ---- synthetic data -------------------------------------------------------

struct OcclusionSpec {
  Region region = Region::middle;
  double fraction = 0.0;   // per-frame occlusion probability
  double intensity = 1.0;  // scales the occluder pattern
};

struct SynthConfig {
  std::size_t identities = 10;
  std::size_t cameras = 2;
  std::size_t tracklets_per_camera = 1;
  std::size_t frames = 16;
  std::size_t height = 16;
  std::size_t width = 8;
  OcclusionSpec occlusion;
  double noise = 0.08;            // std-dev of additive pixel noise
  std::size_t palette_size = 4;   // colours available per band
  double texture_amplitude = 0.06;
  double camera_shift = 0.06;     // per-camera colour cast
  double landmark_dropout = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct OcclusionTruth {
  std::string frame_path;
  Region region = Region::upper;
  bool occluded = false;
};

struct SyntheticFrame {
  std::string path;  // relative to root
  Image image;
  bool occluded = false;
  LandmarkSet landmarks;
};

struct SyntheticTracklet {
  std::string id;
  std::string identity;
  std::string camera;
  std::vector<SyntheticFrame> frames;
};

struct SyntheticDataset {
  std::vector<SyntheticTracklet> tracklets;
  Image occluder;  // band-sized pattern written over occluded frames
  RowRange occluded_rows;
};

// Pure function of the config.
SyntheticDataset generate_synthetic(const SynthConfig& config);

// Writes the synthetic dataset under `root` (manifest.tsv, images/,
// landmarks.tsv, occlusion_truth.tsv) and returns its manifest.
DatasetManifest synth_generate(const SynthConfig& config, const std::filesystem::path& root);

// The in-memory equivalent of synth_generate followed by load_dataset.
Dataset to_dataset(const SyntheticDataset& data);

std::vector<OcclusionTruth> read_occlusion_truth(const std::filesystem::path& path);

// ---- protocol splits ------------------------------------------------------

enum class Protocol { fifty_fifty_cross_camera, scene_split };

Protocol parse_protocol(const std::string& text);
std::string protocol_name(Protocol p);

struct SplitOptions {
  // scene_split: cameras whose identities form the test scene, and the probe
  // camera among them.
  std::vector<int> test_cameras;
  int probe_camera = -1;
  // fifty_fifty: draw the probe camera per identity at random instead of
  // using the identity's first camera.
  bool random_probe_camera = false;
  std::uint64_t role_seed = 0;
};

struct DatasetSplit {
  std::vector<std::size_t> train;    // tracklet indices
  std::vector<std::size_t> probe;
  std::vector<std::size_t> gallery;
  std::vector<int> train_identities;
  std::vector<int> test_identities;
};

DatasetSplit split_protocol(const Dataset& dataset, Protocol protocol, std::uint64_t seed,
                            const SplitOptions& options = {});

}  // namespace rqen
