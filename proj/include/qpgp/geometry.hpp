#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qpgp/types.hpp"

namespace qpgp {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kDefaultPeriodHours = 24.0;

/// Centroid of the inputs in degrees; the default projection center.
inline StationLocation projection_center(const std::vector<StationLocation>& stations) {
  if (stations.empty()) throw std::invalid_argument("projection_center: need at least one station");
  StationLocation c{"center", 0.0, 0.0};
  for (const auto& s : stations) {
    c.lat += s.lat;
    c.lon += s.lon;
  }
  c.lat /= static_cast<double>(stations.size());
  c.lon /= static_cast<double>(stations.size());
  return c;
}

/// Inverse of the local equirectangular projection about `center`.
inline StationLocation unproject(const PlanarCoord& p, const StationLocation& center) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double kx = kEarthRadiusKm * std::cos(center.lat * deg) * deg;
  const double ky = kEarthRadiusKm * deg;
  return {"", center.lat + p.y / ky, center.lon + p.x / kx};
}

/// Local equirectangular projection about `center` (defaults to the centroid
/// of the inputs): x = R cos(lat0) dlon, y = R dlat, angles in radians.
/// Valid for city-scale domains only.
inline std::vector<PlanarCoord> project(const std::vector<StationLocation>& stations,
                                        std::optional<StationLocation> center = std::nullopt) {
  if (stations.empty()) throw std::invalid_argument("project: need at least one station");
  auto check = [](const StationLocation& s) {
    if (!(s.lat >= -90.0 && s.lat <= 90.0))
      throw std::invalid_argument("project: latitude out of range for station '" + s.id + "'");
    if (!(s.lon >= -180.0 && s.lon <= 180.0))
      throw std::invalid_argument("project: longitude out of range for station '" + s.id + "'");
  };
  for (const auto& s : stations) check(s);

  double lat0, lon0;
  if (center) {
    check(*center);
    lat0 = center->lat;
    lon0 = center->lon;
  } else {
    const StationLocation c = projection_center(stations);
    lat0 = c.lat;
    lon0 = c.lon;
  }

  constexpr double deg = std::numbers::pi / 180.0;
  const double kx = kEarthRadiusKm * std::cos(lat0 * deg) * deg;
  const double ky = kEarthRadiusKm * deg;
  std::vector<PlanarCoord> out;
  out.reserve(stations.size());
  for (const auto& s : stations) out.push_back({kx * (s.lon - lon0), ky * (s.lat - lat0)});
  return out;
}

/// Great-circle angle between two times mapped onto a clock of `period`
/// hours. Symmetric, periodic, and always in [0, pi].
template <class Scalar>
Scalar circular_lag(Scalar t1, Scalar t2, Scalar period = Scalar(kDefaultPeriodHours)) {
  if (!(period > Scalar(0))) throw std::invalid_argument("circular_lag: period must be positive");
  if (!std::isfinite(t1) || !std::isfinite(t2))
    throw std::invalid_argument("circular_lag: non-finite time");
  const Scalar m = std::fmod(std::abs(t1 - t2), period);
  const Scalar arc = std::min(m, period - m);
  const Scalar theta = Scalar(2) * std::numbers::pi_v<Scalar> * arc / period;
  return std::clamp(theta, Scalar(0), std::numbers::pi_v<Scalar>);
}

inline double spatial_distance(const PlanarCoord& a, const PlanarCoord& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Assemble (h, theta, u) for a pair of points sharing one projection.
inline LagTriple lag_triple(const SpaceTimePoint& p1, const SpaceTimePoint& p2,
                            double period = kDefaultPeriodHours) {
  LagTriple lag;
  lag.h = spatial_distance(p1.coord, p2.coord);
  lag.u = std::abs(p1.t - p2.t);
  lag.theta = circular_lag(p1.t, p2.t, period);
  return lag;
}

}  // namespace qpgp
