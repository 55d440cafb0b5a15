#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rqen/autodiff.hpp"
#include "rqen/dataset.hpp"
#include "rqen/model.hpp"
#include "rqen/regions.hpp"

namespace rqen {

inline constexpr char kCheckpointMagic[8] = {'R', 'Q', 'E', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// How the training identities were chosen, so evaluation can hold them out.
struct TrainingSplit {
  Protocol protocol = Protocol::fifty_fifty_cross_camera;
  std::uint64_t seed = 0;
  std::vector<int> test_cameras;  // scene split only
  int probe_camera = -1;

  bool operator==(const TrainingSplit&) const = default;
};

struct Checkpoint {
  ModelConfig config;
  RegionLayout layout;
  ParamStore params;
  std::optional<TrainingSplit> split;

  bool operator==(const Checkpoint&) const = default;
};

// Little-endian binary encoding: magic, version, parameter table (name length,
// name, rank, extents, float64 values), backbone and head configuration,
// region layout, training split.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rqen
