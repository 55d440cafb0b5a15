#include "rqen/regions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "rqen/errors.hpp"

namespace rqen {

char region_code(Region r) {
  switch (r) {
    case Region::upper: return 'u';
    case Region::middle: return 'm';
    case Region::lower: return 'l';
  }
  return '?';
}

Region parse_region(char code) {
  switch (code) {
    case 'u': return Region::upper;
    case 'm': return Region::middle;
    case 'l': return Region::lower;
    default: throw std::invalid_argument(std::string("unknown region code '") + code + "'");
  }
}

RegionMask RegionMask::only(Region r) {
  RegionMask m;
  m.on_ = {false, false, false};
  m.on_[index_of(r)] = true;
  return m;
}

RegionMask RegionMask::parse(const std::string& text) {
  RegionMask m;
  m.on_ = {false, false, false};
  for (char c : text) {
    if (c == ',' || c == ' ') continue;
    m.on_[index_of(parse_region(c))] = true;
  }
  if (m.count() == 0) throw std::invalid_argument("region mask must not be empty");
  return m;
}

std::size_t RegionMask::count() const {
  return static_cast<std::size_t>(std::count(on_.begin(), on_.end(), true));
}

std::vector<Region> RegionMask::regions() const {
  std::vector<Region> out;
  for (Region r : kAllRegions)
    if (contains(r)) out.push_back(r);
  return out;
}

std::string RegionMask::str() const {
  std::string s;
  for (Region r : regions()) s += region_code(r);
  return s;
}

RegionLayout RegionLayout::from_ratio(double upper, double middle, double lower) {
  if (!(upper > 0 && middle > 0 && lower > 0)) {
    throw std::invalid_argument("region ratio components must be positive");
  }
  const double total = upper + middle + lower;
  return RegionLayout{upper / total, (upper + middle) / total};
}

std::array<double, 3> RegionLayout::ratio() const {
  return {upper_end, middle_end - upper_end, 1.0 - middle_end};
}

std::array<RowRange, 3> split_rows(std::size_t height, const RegionLayout& layout) {
  if (height < 3) {
    throw std::invalid_argument("split_rows: height " + std::to_string(height) + " < 3");
  }
  if (!layout.valid()) throw std::invalid_argument("split_rows: invalid region layout");
  // The small offset absorbs representation error, e.g. (3/7) * 7.
  auto boundary = [&](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(height) + 1e-9));
  };
  const std::size_t b1 = std::clamp<std::size_t>(boundary(layout.upper_end), 1, height - 2);
  const std::size_t b2 = std::clamp<std::size_t>(boundary(layout.middle_end), b1 + 1, height - 1);
  return {RowRange{0, b1}, RowRange{b1, b2}, RowRange{b2, height}};
}

std::array<Tensor, 3> split_regions(const Tensor& map, const RegionLayout& layout,
                                    std::size_t height_axis) {
  if (height_axis >= map.rank()) throw std::invalid_argument("split_regions: bad height axis");
  const Shape& s = map.shape();
  const auto rows = split_rows(s[height_axis], layout);
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < height_axis; ++a) outer *= s[a];
  for (std::size_t a = height_axis + 1; a < s.size(); ++a) inner *= s[a];

  std::array<Tensor, 3> out;
  for (std::size_t r = 0; r < 3; ++r) {
    Shape rs = s;
    rs[height_axis] = rows[r].size();
    std::vector<double> vals;
    vals.reserve(shape_size(rs));
    for (std::size_t o = 0; o < outer; ++o) {
      const auto base = map.data().begin() + (o * s[height_axis] + rows[r].begin) * inner;
      vals.insert(vals.end(), base, base + rows[r].size() * inner);
    }
    out[r] = Tensor(std::move(rs), std::move(vals));
  }
  return out;
}

void RegionGrouping::validate() const {
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("landmark group must not be empty");
    for (auto idx : g) {
      if (idx < 1 || idx > kLandmarkCount) {
        throw std::invalid_argument("landmark index " + std::to_string(idx) + " outside 1..14");
      }
    }
  }
}

RegionLayout layout_from_centroids(double c1, double c2, double c3) {
  // Midpoints of the bands are b1/2, (b1+b2)/2, (b2+1)/2. Normal equations:
  //   b1 + b2/2 = c1 + c2,   b1/2 + b2 = c2 + c3 - 1/2.
  const double a = c1 + c2;
  const double b = c2 + c3 - 0.5;
  const double b1 = (4.0 * a - 2.0 * b) / 3.0;
  const double b2 = b - b1 / 2.0;
  return RegionLayout{b1, b2};
}

LayoutFit fit_region_layout(std::span<const LandmarkSet> landmarks,
                            const RegionGrouping& grouping) {
  grouping.validate();
  LayoutFit fit;
  fit.centroids.fill(std::numeric_limits<double>::quiet_NaN());
  if (landmarks.empty()) {
    fit.fell_back = true;
    fit.warning = "no landmarks; using the default 3:2:2 layout";
    return fit;
  }
  for (std::size_t g = 0; g < 3; ++g) {
    std::vector<double> ys;
    for (const LandmarkSet& set : landmarks)
      for (auto idx : grouping.groups[g])
        if (set.points[idx - 1].valid) ys.push_back(set.points[idx - 1].y);
    if (ys.empty()) {
      fit.fell_back = true;
      fit.warning = "landmark group " + std::to_string(g + 1) +
                    " has no valid points; using the default 3:2:2 layout";
      return fit;
    }
    // Sorted summation makes the centroid independent of collection order.
    std::sort(ys.begin(), ys.end());
    double sum = 0.0;
    for (double y : ys) sum += y;
    fit.centroids[g] = sum / static_cast<double>(ys.size());
  }
  const auto& c = fit.centroids;
  if (!(c[0] < c[1] && c[1] < c[2])) {
    fit.fell_back = true;
    fit.warning = "landmark group centroids are not ordered top to bottom; using the default "
                  "3:2:2 layout";
    return fit;
  }
  const RegionLayout candidate = layout_from_centroids(c[0], c[1], c[2]);
  if (!candidate.valid()) {
    fit.fell_back = true;
    fit.warning = "fitted boundaries are degenerate; using the default 3:2:2 layout";
    return fit;
  }
  fit.layout = candidate;
  return fit;
}

std::vector<LandmarkSet> read_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark file " + path.string());
  std::vector<LandmarkSet> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    const std::string where = path.string() + ":" + std::to_string(row);
    if (fields.size() != 1 + 2 * kLandmarkCount) {
      throw DataError(where + ": expected 29 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    LandmarkSet set;
    set.frame = fields[0];
    for (std::size_t k = 0; k < kLandmarkCount; ++k) {
      double x = 0, y = 0;
      try {
        std::size_t px = 0, py = 0;
        x = std::stod(fields[1 + 2 * k], &px);
        y = std::stod(fields[2 + 2 * k], &py);
        if (px != fields[1 + 2 * k].size() || py != fields[2 + 2 * k].size()) throw 0;
      } catch (...) {
        throw DataError(where + ": landmark " + std::to_string(k + 1) + " is not numeric");
      }
      Landmark& p = set.points[k];
      p.x = x;
      p.y = y;
      if (x == -1.0 && y == -1.0) {
        p.valid = false;
      } else if (x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0) {
        p.valid = true;
      } else {
        throw DataError(where + ": landmark " + std::to_string(k + 1) + " outside [0,1]");
      }
    }
    out.push_back(std::move(set));
  }
  return out;
}

void write_landmarks(const std::filesystem::path& path, std::span<const LandmarkSet> sets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write landmark file " + path.string());
  char buf[64];
  for (const LandmarkSet& set : sets) {
    out << set.frame;
    for (const Landmark& p : set.points) {
      if (p.valid) {
        std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f", p.x, p.y);
      } else {
        std::snprintf(buf, sizeof buf, "\t-1\t-1");
      }
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace rqen
