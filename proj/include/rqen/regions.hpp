#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rqen/tensor.hpp"

namespace rqen {

enum class Region : std::size_t { upper = 0, middle = 1, lower = 2 };

inline constexpr std::array<Region, 3> kAllRegions{Region::upper, Region::middle, Region::lower};
inline constexpr std::size_t kRegionCount = 3;

inline std::size_t index_of(Region r) { return static_cast<std::size_t>(r); }
char region_code(Region r);  // 'u', 'm', 'l'
Region parse_region(char code);

// Subset of regions that participate in features and scoring.
class RegionMask {
 public:
  RegionMask() = default;  // all regions
  static RegionMask only(Region r);
  // Accepts codes like "m", "u,l", "uml".
  static RegionMask parse(const std::string& text);

  bool contains(Region r) const { return on_[index_of(r)]; }
  std::size_t count() const;
  std::vector<Region> regions() const;
  std::string str() const;  // "uml" order

  bool operator==(const RegionMask&) const = default;

 private:
  std::array<bool, 3> on_{true, true, true};
};

// Horizontal bands of the frame: upper [0,b1), middle [b1,b2), lower [b2,1)
// as fractions of the image height.
struct RegionLayout {
  double upper_end = 3.0 / 7.0;
  double middle_end = 5.0 / 7.0;

  static RegionLayout from_ratio(double upper, double middle, double lower);
  std::array<double, 3> ratio() const;
  bool valid() const { return 0.0 < upper_end && upper_end < middle_end && middle_end < 1.0; }

  bool operator==(const RegionLayout&) const = default;
};

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

// Row ranges of a map with `height` rows. Boundaries are floor(b * height);
// the lower band absorbs the remainder. Requires height >= 3; every band gets
// at least one row.
std::array<RowRange, 3> split_rows(std::size_t height, const RegionLayout& layout);

// Splits `map` along `height_axis` into the three bands.
std::array<Tensor, 3> split_regions(const Tensor& map, const RegionLayout& layout,
                                    std::size_t height_axis);

inline constexpr std::size_t kLandmarkCount = 14;

struct Landmark {
  double x = -1.0;  // fraction of width
  double y = -1.0;  // fraction of height
  bool valid = false;
};

struct LandmarkSet {
  std::string frame;
  std::array<Landmark, kLandmarkCount> points{};
};

// Landmark index groups (1-based) whose centroids anchor the three bands.
struct RegionGrouping {
  std::array<std::vector<std::size_t>, 3> groups{
      std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10},
      std::vector<std::size_t>{9, 10, 11, 12},
      std::vector<std::size_t>{11, 12, 13, 14}};

  void validate() const;
};

struct LayoutFit {
  RegionLayout layout;
  std::array<double, 3> centroids{};  // NaN where a group had no valid point
  bool fell_back = false;
  std::string warning;
};

// One centroid per group over the y coordinates of all valid landmarks in the
// collection, then the band boundaries whose midpoints best match the three
// centroids in least squares. Falls back to the 3:2:2 default (with a warning)
// for an empty collection, a group without valid points, or centroids that do
// not produce an ordered layout.
LayoutFit fit_region_layout(std::span<const LandmarkSet> landmarks,
                            const RegionGrouping& grouping = {});

// Least-squares boundaries for band midpoints c1 < c2 < c3.
RegionLayout layout_from_centroids(double c1, double c2, double c3);

// Tab-separated: frame path then 14 (x, y) pairs; "-1 -1" marks a missing point.
std::vector<LandmarkSet> read_landmarks(const std::filesystem::path& path);
void write_landmarks(const std::filesystem::path& path, std::span<const LandmarkSet> sets);

}  // namespace rqen
