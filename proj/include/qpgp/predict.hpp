#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "qpgp/inference.hpp"
#include "qpgp/kernels.hpp"
#include "qpgp/nngp.hpp"
#include "qpgp/rng.hpp"
#include "qpgp/types.hpp"

namespace qpgp {

/// Conditioning set for a prediction target: the training recipe applied
/// with lags both backward and forward in time, drawn from the whole
/// reference set. Nodes coincident with the target (same coordinates and
/// time) are excluded. Throws if no window matches (target lies outside the
/// data range by more than the largest lag).
std::vector<int> prediction_neighbors(const SpaceTimePoint& target, const ReferenceSet& ref,
                                      const NeighborSpec& spec,
                                      double period = kDefaultPeriodHours);

/// One draw of the latent field at the target from its conditional normal
/// given the neighbors' latent values under one posterior state.
double draw_w(const SpaceTimePoint& target, std::span<const int> neighbors,
              const ReferenceSet& ref, const KernelSpec& spec, const Eigen::VectorXd& w, Rng& rng,
              double period = kDefaultPeriodHours);

/// Inverse-squared-distance weights over simultaneously observed stations;
/// an exact positional match (d < 1e-6 km) returns that station's row.
Eigen::VectorXd interpolate_covariates(const PlanarCoord& target,
                                       const std::vector<PlanarCoord>& station_coords,
                                       const Eigen::MatrixXd& station_covariates);

struct PredictionTask {
  std::vector<SpaceTimePoint> targets;
  NeighborSpec neighbor_spec;        // bidirectional lags
  bool hull_check = true;            // require targets inside the station hull
};

/// Posterior predictive samples on the observable (ppb) scale, draws x
/// targets; draw m is pushed through posterior state m exactly.
struct PredictiveDraws {
  Eigen::MatrixXd ppb;
};

/// Composition sampling: y* = x*' beta + w* + eps on the sqrt scale per
/// retained state, squared back to ppb. `target_X` holds one covariate row
/// per target. `station_hull` is used when hull_check is set.
PredictiveDraws posterior_predictive(const PredictionTask& task, const ReferenceSet& ref,
                                     const PosteriorDraws& draws, const KernelSpec& spec_template,
                                     const Eigen::MatrixXd& target_X,
                                     const std::vector<PlanarCoord>& station_hull,
                                     std::uint64_t seed, double period = kDefaultPeriodHours);

/// Convex hull (counter-clockwise) of a point set; Andrew's monotone chain.
std::vector<PlanarCoord> convex_hull(std::vector<PlanarCoord> points);

/// True if p lies inside or on the boundary of the hull (ccw order).
bool in_hull(const PlanarCoord& p, const std::vector<PlanarCoord>& hull, double tol = 1e-9);

}  // namespace qpgp
