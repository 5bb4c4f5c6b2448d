#pragma once

// Initial placement table for automated collection.

#include "uavtrack/common.hpp"
#include "uavtrack/types.hpp"

namespace uavtrack::expert {

struct Range {
  double lo = 0.0, hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct PlacementRow {
  Range x, y, z;
  std::array<Range, 3> yaw_deg;  // indexed by Sector
};

/// Rows for the close, suitable and far tiers (the table's Near, Close and
/// Far rows respectively). Two-wheelers use the vehicle rows.
inline const PlacementRow& placement_row(TargetClass cls, DistanceTier tier) {
  static const std::array<PlacementRow, 3> vehicle{{
      {{-2.5, -1.75}, {-3.0, 3.0}, {0.2, 1.5}, {{{-10, 10}, {-60, -10}, {10, 60}}}},
      {{-4.0, -1.0}, {-2.0, 2.0}, {0.3, 2.5}, {{{-10, 10}, {-60, -10}, {10, 60}}}},
      {{-8.0, -2.0}, {-1.5, 1.5}, {0.6, 5.0}, {{{-10, 10}, {-60, -10}, {10, 60}}}},
  }};
  static const std::array<PlacementRow, 3> pedestrian{{
      {{-1.5, -0.5}, {-0.5, 0.5}, {0.1, 0.7}, {{{-8, 8}, {-50, -8}, {8, 50}}}},
      {{-2.0, -0.8}, {-1.0, 1.0}, {0.2, 1.5}, {{{-8, 8}, {-50, -8}, {8, 50}}}},
      {{-4.0, -1.6}, {-0.8, 0.8}, {0.4, 3.0}, {{{-8, 8}, {-50, -8}, {8, 50}}}},
  }};
  const auto idx = static_cast<std::size_t>(tier);
  if (idx >= 3) throw Error("unknown distance tier");
  return cls == TargetClass::pedestrian ? pedestrian[idx] : vehicle[idx];
}

inline AnchorOffset sample_initial_offset(TargetClass cls, DistanceTier tier, Sector sector, Rng& rng) {
  const PlacementRow& row = placement_row(cls, tier);
  const auto s = static_cast<std::size_t>(sector);
  if (s >= 3) throw Error("unknown sector");
  AnchorOffset a;
  a.sector = sector;
  a.x = rng.uniform(row.x.lo, row.x.hi);
  a.y = rng.uniform(row.y.lo, row.y.hi);
  a.z = rng.uniform(row.z.lo, row.z.hi);
  a.yaw = deg2rad(rng.uniform(row.yaw_deg[s].lo, row.yaw_deg[s].hi));
  return a;
}

}  // namespace uavtrack::expert
