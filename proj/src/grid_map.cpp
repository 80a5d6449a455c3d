#include "gridloc/grid_map.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace gridloc {

OccupancyGrid::OccupancyGrid(int width_cells, int height_cells, double resolution,
                             double origin_x, double origin_y, Occupancy fill)
    : width_(width_cells),
      height_(height_cells),
      resolution_(resolution),
      origin_x_(origin_x),
      origin_y_(origin_y),
      cells_(static_cast<std::size_t>(width_cells) * height_cells, fill) {
  if (width_cells < 1 || height_cells < 1)
    throw std::invalid_argument("map dimensions must be at least 1x1");
  if (resolution <= 0.0) throw std::invalid_argument("map resolution must be positive");
}

OccupancyGrid OccupancyGrid::load(std::istream& is) {
  std::string line;
  int line_no = 0;

  if (!std::getline(is, line)) throw ParseError("empty map stream", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::istringstream header(line);
  std::string tag;
  int w = 0, h = 0;
  double res = 0.0, ox = 0.0, oy = 0.0;
  if (!(header >> tag) || tag != "MAP")
    throw ParseError("expected header starting with MAP", line_no);
  if (!(header >> w >> h >> res >> ox >> oy))
    throw ParseError("malformed MAP header, expected width height resolution origin_x origin_y",
                     line_no);
  std::string extra;
  if (header >> extra) throw ParseError("trailing content after MAP header", line_no);
  if (w < 1 || h < 1) throw ParseError("map dimensions must be positive", line_no);
  if (res <= 0.0) throw ParseError("map resolution must be positive", line_no);

  OccupancyGrid grid(w, h, res, ox, oy);
  for (int row = 0; row < h; ++row) {
    if (!std::getline(is, line))
      throw ParseError("dimension mismatch: expected " + std::to_string(h) +
                           " map rows, got " + std::to_string(row),
                       line_no + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (static_cast<int>(line.size()) != w)
      throw ParseError("dimension mismatch: row has " + std::to_string(line.size()) +
                           " cells, header says " + std::to_string(w),
                       line_no);
    for (int col = 0; col < w; ++col) {
      Occupancy v;
      switch (line[col]) {
        case '.': v = Occupancy::kFree; break;
        case '#': v = Occupancy::kOccupied; break;
        case '?': v = Occupancy::kUnknown; break;
        default:
          throw ParseError(std::string("illegal cell symbol '") + line[col] + "'", line_no,
                           col + 1);
      }
      grid.set(col, row, v);
    }
  }
  return grid;
}

void OccupancyGrid::save(std::ostream& os) const {
  os << "MAP " << width_ << ' ' << height_ << ' ' << resolution_ << ' ' << origin_x_ << ' '
     << origin_y_ << '\n';
  for (int row = 0; row < height_; ++row) {
    for (int col = 0; col < width_; ++col) {
      char c = '.';
      switch (at(col, row)) {
        case Occupancy::kFree: c = '.'; break;
        case Occupancy::kOccupied: c = '#'; break;
        case Occupancy::kUnknown: c = '?'; break;
      }
      os.put(c);
    }
    os.put('\n');
  }
}

int OccupancyGrid::free_cell_count() const {
  int n = 0;
  for (int iy = 0; iy < height_; ++iy)
    for (int ix = 0; ix < width_; ++ix)
      if (traversable(ix, iy)) ++n;
  return n;
}

double ray_cast(const OccupancyGrid& map, const Pose& pose, double bearing,
                double max_range) {
  if (max_range <= 0.0) throw std::invalid_argument("max_range must be positive");
  if (!map.contains(pose.x, pose.y))
    throw std::out_of_range("ray_cast pose outside map bounds");

  const double res = map.resolution();
  const double angle = pose.theta + bearing;
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);

  int ix = map.cell_x(pose.x);
  int iy = map.cell_y(pose.y);
  if (map.occupied(ix, iy)) return 0.0;

  const double inf = std::numeric_limits<double>::infinity();
  const int step_x = dx > 0.0 ? 1 : (dx < 0.0 ? -1 : 0);
  const int step_y = dy > 0.0 ? 1 : (dy < 0.0 ? -1 : 0);

  // Parameter t along the ray (in meters) at which the next cell boundary on
  // each axis is crossed.
  double t_max_x = inf, t_delta_x = inf;
  if (step_x != 0) {
    const double edge =
        map.origin_x() + (ix + (step_x > 0 ? 1 : 0)) * res;
    t_max_x = (edge - pose.x) / dx;
    t_delta_x = res / std::abs(dx);
  }
  double t_max_y = inf, t_delta_y = inf;
  if (step_y != 0) {
    const double edge =
        map.origin_y() + (iy + (step_y > 0 ? 1 : 0)) * res;
    t_max_y = (edge - pose.y) / dy;
    t_delta_y = res / std::abs(dy);
  }

  const int max_steps = 4 * (map.width_cells() + map.height_cells()) +
                        static_cast<int>(4.0 * max_range / res) + 8;
  auto blocked = [&map](int cx, int cy) {
    return cx >= 0 && cy >= 0 && cx < map.width_cells() && cy < map.height_cells() &&
           map.occupied(cx, cy);
  };

  for (int i = 0; i < max_steps; ++i) {
    double t;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      ix += step_x;
      t_max_x += t_delta_x;
    } else if (t_max_y < t_max_x) {
      t = t_max_y;
      iy += step_y;
      t_max_y += t_delta_y;
    } else {
      // Exact corner crossing: the supercover visits both side cells the ray
      // grazes before entering the diagonal cell.
      t = t_max_x;
      if (t > max_range) return max_range;
      if (blocked(ix + step_x, iy) || blocked(ix, iy + step_y)) return t;
      ix += step_x;
      iy += step_y;
      t_max_x += t_delta_x;
      t_max_y += t_delta_y;
    }
    if (t > max_range) return max_range;
    if (ix < 0 || iy < 0 || ix >= map.width_cells() || iy >= map.height_cells())
      return max_range;  // left the map without hitting anything
    if (map.occupied(ix, iy)) return t;
  }
  return max_range;
}

}  // namespace gridloc
