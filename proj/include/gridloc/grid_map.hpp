#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "gridloc/util.hpp"

namespace gridloc {

enum class Occupancy : std::uint8_t { kFree = 0, kOccupied = 1, kUnknown = 2 };

// Robot or hypothesis pose in world coordinates; theta in [0, tau).
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

// One range-finder beam, bearing relative to the robot heading.
struct Beam {
  double bearing = 0.0;
  double max_range = 5.0;
};

// 2-D occupancy grid. Cell (0, 0) covers the minimum-x, minimum-y corner;
// cell (ix, iy) spans [origin + i*res, origin + (i+1)*res) on each axis.
class OccupancyGrid {
 public:
  OccupancyGrid(int width_cells, int height_cells, double resolution,
                double origin_x = 0.0, double origin_y = 0.0,
                Occupancy fill = Occupancy::kFree);

  // Text format: header "MAP <width_cells> <height_cells> <resolution_m>
  // <origin_x> <origin_y>", then height_cells rows of width_cells symbols
  // from {'.', '#', '?'}. The first data row is the minimum-y row.
  // Throws ParseError with line/column on malformed input.
  static OccupancyGrid load(std::istream& is);
  void save(std::ostream& os) const;

  int width_cells() const { return width_; }
  int height_cells() const { return height_; }
  double resolution() const { return resolution_; }
  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  double width_m() const { return width_ * resolution_; }
  double height_m() const { return height_ * resolution_; }

  Occupancy at(int ix, int iy) const { return cells_[index(ix, iy)]; }
  void set(int ix, int iy, Occupancy v) { cells_[index(ix, iy)] = v; }

  bool occupied(int ix, int iy) const { return at(ix, iy) == Occupancy::kOccupied; }
  // Unknown cells count as traversable free space.
  bool traversable(int ix, int iy) const { return !occupied(ix, iy); }

  bool contains(double x, double y) const {
    return x >= origin_x_ && y >= origin_y_ && x < origin_x_ + width_m() &&
           y < origin_y_ + height_m();
  }

  int cell_x(double x) const {
    return static_cast<int>(std::floor((x - origin_x_) / resolution_));
  }
  int cell_y(double y) const {
    return static_cast<int>(std::floor((y - origin_y_) / resolution_));
  }
  double center_x(int ix) const { return origin_x_ + (ix + 0.5) * resolution_; }
  double center_y(int iy) const { return origin_y_ + (iy + 0.5) * resolution_; }

  int free_cell_count() const;

 private:
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * width_ + ix;
  }

  int width_;
  int height_;
  double resolution_;
  double origin_x_;
  double origin_y_;
  std::vector<Occupancy> cells_;
};

// Distance from the pose to the first occupied cell along heading
// pose.theta + bearing, measured to the entry face of that cell. Uses a
// supercover grid walk (exact corner crossings check both side cells).
// Unknown cells are treated as free; returns max_range when nothing is hit
// within range or the ray leaves the map. Throws std::out_of_range when the
// pose lies outside the map, std::invalid_argument when max_range <= 0.
double ray_cast(const OccupancyGrid& map, const Pose& pose, double bearing,
                double max_range);

}  // namespace gridloc
