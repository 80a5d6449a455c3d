#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "gridloc/grid_map.hpp"

namespace gridloc::test {

// Builds a map from rows written top-down (first string is the maximum-y
// row), which is how the fixtures read naturally in source.
inline OccupancyGrid make_map(const std::vector<std::string>& rows_top_down,
                              double resolution = 0.2, double origin_x = 0.0,
                              double origin_y = 0.0) {
  const int h = static_cast<int>(rows_top_down.size());
  const int w = static_cast<int>(rows_top_down.front().size());
  OccupancyGrid map(w, h, resolution, origin_x, origin_y);
  for (int k = 0; k < h; ++k) {
    const std::string& row = rows_top_down[k];
    const int iy = h - 1 - k;
    for (int ix = 0; ix < w; ++ix) {
      switch (row[ix]) {
        case '.': map.set(ix, iy, Occupancy::kFree); break;
        case '#': map.set(ix, iy, Occupancy::kOccupied); break;
        case '?': map.set(ix, iy, Occupancy::kUnknown); break;
        default: throw std::runtime_error("bad fixture symbol");
      }
    }
  }
  return map;
}

// Empty bordered box, free interior.
inline OccupancyGrid box_world(int w, int h, double resolution = 0.2) {
  OccupancyGrid map(w, h, resolution);
  for (int ix = 0; ix < w; ++ix) {
    map.set(ix, 0, Occupancy::kOccupied);
    map.set(ix, h - 1, Occupancy::kOccupied);
  }
  for (int iy = 0; iy < h; ++iy) {
    map.set(0, iy, Occupancy::kOccupied);
    map.set(w - 1, iy, Occupancy::kOccupied);
  }
  return map;
}

// Fully free map (no walls at all); useful with torus-boundary convolutions.
inline OccupancyGrid open_world(int w, int h, double resolution = 0.2) {
  return OccupancyGrid(w, h, resolution);
}

// A small office: two rooms off a corridor, a pillar, and door gaps. 48 x 36
// cells at 0.2 m (9.6 m x 7.2 m). Structured enough for global localization
// with a handful of beams.
inline OccupancyGrid office_world() {
  const int w = 48, h = 36;
  OccupancyGrid map = box_world(w, h);
  // Corridor wall along y = 4.0 (iy = 20), with two door gaps.
  for (int ix = 1; ix < w - 1; ++ix) {
    if ((ix >= 10 && ix <= 13) || (ix >= 34 && ix <= 37)) continue;
    map.set(ix, 20, Occupancy::kOccupied);
  }
  // Wall splitting the upper area into two rooms, with its own doorway.
  for (int iy = 21; iy < h - 1; ++iy) {
    if (iy >= 26 && iy <= 28) continue;
    map.set(24, iy, Occupancy::kOccupied);
  }
  // Pillar in the lower open area.
  for (int iy = 8; iy <= 11; ++iy)
    for (int ix = 20; ix <= 23; ++ix) map.set(ix, iy, Occupancy::kOccupied);
  return map;
}

inline std::string map_to_string(const OccupancyGrid& map) {
  std::ostringstream os;
  map.save(os);
  return os.str();
}

}  // namespace gridloc::test
