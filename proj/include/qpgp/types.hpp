#pragma once

#include <string>

namespace qpgp {

/// Monitoring-station coordinates on the globe, degrees.
struct StationLocation {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
};

/// Planar position in km east/north of the projection center.
struct PlanarCoord {
  double x = 0.0;
  double y = 0.0;
};

/// Planar position plus hours since the dataset epoch.
struct SpaceTimePoint {
  PlanarCoord coord;
  double t = 0.0;
};

/// The three lags every covariance consumes: spatial distance (km),
/// clock angle (radians in [0, pi]) and linear-time lag (hours).
struct LagTriple {
  double h = 0.0;
  double theta = 0.0;
  double u = 0.0;
};

}  // namespace qpgp
