#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace qpgp {

/// Monte Carlo CRPS: mean |Y_j - y| - (1/2M^2) sum_jk |Y_j - Y_k|, lower is
/// better. The pairwise term is evaluated through the sorted order-statistic
/// identity, so large sample sets stay O(M log M).
double crps_mc(std::span<const double> samples, double y);

/// Monte Carlo energy score with Euclidean norms, eta = 1; rows of `samples`
/// are draws. In one dimension this routes through crps_mc and so matches it
/// exactly.
double energy_score_mc(const Eigen::MatrixXd& samples, const Eigen::VectorXd& y);

struct PointScores {
  double rmspe = 0.0;
  double mape = 0.0;
  double coverage = 0.0;
};

/// RMSPE/MAPE against the predictive means; coverage is the fraction of
/// observations inside their central [lo, hi] interval.
PointScores point_scores(std::span<const double> means, std::span<const double> lo,
                         std::span<const double> hi, std::span<const double> y);

/// Empirical quantile of a draw column (linear interpolation between order
/// statistics).
double empirical_quantile(std::vector<double> draws, double q);

/// Uniformly sample `fraction` of the distinct hour indices [0, n_hours)
/// without replacement; returned sorted. Mirrors the hold-all-stations-at-
/// selected-hours validation design.
std::vector<int> holdout_hours(int n_hours, double fraction, std::uint64_t seed);

}  // namespace qpgp
