#include "qpgp/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qpgp/rng.hpp"

namespace qpgp {

double crps_mc(std::span<const double> samples, double y) {
  const long m = static_cast<long>(samples.size());
  if (m < 2) throw std::invalid_argument("crps_mc: need at least two samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  double term1 = 0.0;
  double pair_sum = 0.0;  // sum_{j<k} (s_(k) - s_(j)), via order statistics
  for (long i = 0; i < m; ++i) {
    term1 += std::abs(s[i] - y);
    pair_sum += (2.0 * i + 1.0 - m) * s[i];
  }
  return term1 / m - pair_sum / (static_cast<double>(m) * m);
}

double energy_score_mc(const Eigen::MatrixXd& samples, const Eigen::VectorXd& y) {
  const long m = samples.rows();
  if (m < 2) throw std::invalid_argument("energy_score_mc: need at least two samples");
  if (samples.cols() != y.size())
    throw std::invalid_argument("energy_score_mc: dimension mismatch between samples and y");
  if (y.size() == 1) {
    // definitional reduction: 1-D energy score is CRPS
    std::vector<double> col(samples.col(0).data(), samples.col(0).data() + m);
    return crps_mc(col, y[0]);
  }
  double term1 = 0.0;
  for (long j = 0; j < m; ++j) term1 += (samples.row(j).transpose() - y).norm();
  double term2 = 0.0;
  for (long i = 0; i < m; ++i)
    for (long j = i + 1; j < m; ++j) term2 += (samples.row(i) - samples.row(j)).norm();
  return term1 / m - term2 / (static_cast<double>(m) * m);
}

PointScores point_scores(std::span<const double> means, std::span<const double> lo,
                         std::span<const double> hi, std::span<const double> y) {
  const std::size_t n = y.size();
  if (means.size() != n || lo.size() != n || hi.size() != n)
    throw std::invalid_argument("point_scores: length mismatch");
  PointScores out;
  if (n == 0) return out;
  double sq = 0.0, ab = 0.0;
  long covered = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = means[i] - y[i];
    sq += r * r;
    ab += std::abs(r);
    if (y[i] >= lo[i] && y[i] <= hi[i]) ++covered;
  }
  out.rmspe = std::sqrt(sq / n);
  out.mape = ab / n;
  out.coverage = static_cast<double>(covered) / n;
  return out;
}

double empirical_quantile(std::vector<double> draws, double q) {
  if (draws.empty()) throw std::invalid_argument("empirical_quantile: empty draws");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("empirical_quantile: q in [0,1]");
  std::sort(draws.begin(), draws.end());
  const double pos = q * (draws.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  if (lo == hi) return draws[lo];
  const double t = pos - lo;
  return (1.0 - t) * draws[lo] + t * draws[hi];
}

std::vector<int> holdout_hours(int n_hours, double fraction, std::uint64_t seed) {
  if (n_hours < 1) throw std::invalid_argument("holdout_hours: n_hours must be >= 1");
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw std::invalid_argument("holdout_hours: fraction must lie in [0,1)");
  const int k = static_cast<int>(std::llround(fraction * n_hours));
  std::vector<int> idx(n_hours);
  for (int i = 0; i < n_hours; ++i) idx[i] = i;
  Rng rng(seed);
  for (int i = 0; i < k; ++i) {  // partial Fisher-Yates
    const int j = i + static_cast<int>(rng.integer(static_cast<std::uint64_t>(n_hours - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace qpgp
