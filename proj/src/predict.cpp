#include "qpgp/predict.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

#include "qpgp/util.hpp"

namespace qpgp {

namespace {

bool coincident(const SpaceTimePoint& a, const SpaceTimePoint& b) {
  return std::abs(a.t - b.t) < 1e-9 && spatial_distance(a.coord, b.coord) < 1e-9;
}

void nearest_in_window(const SpaceTimePoint& target, const ReferenceSet& ref,
                       const std::vector<double>& times, double lo, double hi, int keep,
                       std::vector<int>* out) {
  const auto a = std::lower_bound(times.begin(), times.end(), lo) - times.begin();
  const auto b = std::upper_bound(times.begin(), times.end(), hi) - times.begin();
  std::vector<std::pair<double, int>> cand;
  for (auto j = a; j < b; ++j) {
    if (coincident(target, ref.points[j])) continue;
    cand.emplace_back(spatial_distance(target.coord, ref.points[j].coord), static_cast<int>(j));
  }
  const int k = std::min<int>(keep, static_cast<int>(cand.size()));
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
  for (int q = 0; q < k; ++q) out->push_back(cand[q].second);
}

}  // namespace

std::vector<int> prediction_neighbors(const SpaceTimePoint& target, const ReferenceSet& ref,
                                      const NeighborSpec& spec, double period) {
  (void)period;
  spec.validate();
  std::vector<double> times(ref.size());
  for (int i = 0; i < ref.size(); ++i) times[i] = ref.points[i].t;

  std::vector<int> picked;
  for (double lag : spec.lags_back) {
    for (double sign : {-1.0, 1.0}) {
      const double center = target.t + sign * lag;
      nearest_in_window(target, ref, times, center - spec.lag_tolerance,
                        center + spec.lag_tolerance, spec.n_spatial, &picked);
    }
  }
  if (spec.include_simultaneous)
    nearest_in_window(target, ref, times, target.t - spec.lag_tolerance,
                      target.t + spec.lag_tolerance, spec.n_spatial, &picked);

  std::sort(picked.begin(), picked.end());
  picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
  if (picked.empty())
    throw std::invalid_argument(
        "prediction_neighbors: no reference nodes within the lag windows (target outside the "
        "data range?)");

  if (static_cast<int>(picked.size()) > spec.max_neighbors) {
    std::vector<std::tuple<double, double, int>> ranked;
    ranked.reserve(picked.size());
    for (int j : picked)
      ranked.emplace_back(std::abs(target.t - ref.points[j].t),
                          spatial_distance(target.coord, ref.points[j].coord), j);
    std::partial_sort(ranked.begin(), ranked.begin() + spec.max_neighbors, ranked.end());
    picked.clear();
    for (int q = 0; q < spec.max_neighbors; ++q) picked.push_back(std::get<2>(ranked[q]));
    std::sort(picked.begin(), picked.end());
  }
  return picked;
}

double draw_w(const SpaceTimePoint& target, std::span<const int> neighbors,
              const ReferenceSet& ref, const KernelSpec& spec, const Eigen::VectorXd& w, Rng& rng,
              double period) {
  const int m = static_cast<int>(neighbors.size());
  if (m == 0) return rng.normal(0.0, std::sqrt(eval(spec, LagTriple{})));

  const double sigma2 = spec.sigma2;
  const double jitter = kFactorJitterRel * sigma2;
  Eigen::MatrixXd block(m, m);
  Eigen::VectorXd cross(m), wn(m);
  for (int a = 0; a < m; ++a) {
    block(a, a) = sigma2 + jitter;
    for (int b = a + 1; b < m; ++b) {
      const double v =
          eval(spec, lag_triple(ref.points[neighbors[a]], ref.points[neighbors[b]], period));
      block(a, b) = v;
      block(b, a) = v;
    }
    cross(a) = eval(spec, lag_triple(target, ref.points[neighbors[a]], period));
    wn(a) = w[neighbors[a]];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(block);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("draw_w: neighbor block not positive definite after jitter");
  const Eigen::VectorXd b = llt.solve(cross);
  const double mean = b.dot(wn);
  double var = sigma2 - b.dot(cross);
  if (var < -1e-8 * sigma2)
    throw std::runtime_error("draw_w: negative conditional variance");
  var = std::max(var, 0.0);
  return mean + std::sqrt(var) * rng.normal();
}

Eigen::VectorXd interpolate_covariates(const PlanarCoord& target,
                                       const std::vector<PlanarCoord>& station_coords,
                                       const Eigen::MatrixXd& station_covariates) {
  const int n = static_cast<int>(station_coords.size());
  if (n == 0 || station_covariates.rows() != n)
    throw std::invalid_argument("interpolate_covariates: need simultaneous station records");
  double wsum = 0.0;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(station_covariates.cols());
  for (int i = 0; i < n; ++i) {
    const double d = spatial_distance(target, station_coords[i]);
    if (d < 1e-6) return station_covariates.row(i);
    const double wt = 1.0 / (d * d);
    wsum += wt;
    out += wt * station_covariates.row(i).transpose();
  }
  return out / wsum;
}

PredictiveDraws posterior_predictive(const PredictionTask& task, const ReferenceSet& ref,
                                     const PosteriorDraws& draws, const KernelSpec& spec_template,
                                     const Eigen::MatrixXd& target_X,
                                     const std::vector<PlanarCoord>& station_hull,
                                     std::uint64_t seed, double period) {
  const int n_targets = static_cast<int>(task.targets.size());
  const int m_draws = draws.draw_count();
  if (target_X.rows() != n_targets)
    throw std::invalid_argument("posterior_predictive: one covariate row per target required");
  if (draws.w.rows() != m_draws || draws.w.cols() != ref.size())
    throw std::invalid_argument("posterior_predictive: latent draws missing or mis-sized");
  if (task.hull_check) {
    const auto hull = convex_hull(station_hull);
    for (int t = 0; t < n_targets; ++t)
      if (!in_hull(task.targets[t].coord, hull))
        throw std::invalid_argument("posterior_predictive: target " + std::to_string(t) +
                                    " lies outside the station convex hull");
  }

  const int p = static_cast<int>(target_X.cols());
  const int tau2_col = draws.column("tau2");
  const int sigma2_col = draws.column("sigma2");
  const auto free_names = free_param_names(spec_template);
  std::vector<int> param_cols(free_names.size());
  for (std::size_t k = 0; k < free_names.size(); ++k)
    param_cols[k] = draws.column(free_names[k]);

  PredictiveDraws out;
  out.ppb.resize(m_draws, n_targets);
  const Rng root(seed);

  parallel_for(static_cast<std::size_t>(n_targets), [&](std::size_t ut) {
    const int t = static_cast<int>(ut);
    Rng rng = root.substream(static_cast<std::uint64_t>(t));
    const auto neighbors = prediction_neighbors(task.targets[t], ref, task.neighbor_spec, period);

    // geometry is fixed across states; cache the lags once per target
    const int m = static_cast<int>(neighbors.size());
    std::vector<LagTriple> pair_lags;
    pair_lags.reserve(m * (m - 1) / 2);
    for (int a = 0; a < m; ++a)
      for (int b = a + 1; b < m; ++b)
        pair_lags.push_back(
            lag_triple(ref.points[neighbors[a]], ref.points[neighbors[b]], period));
    std::vector<LagTriple> cross_lags(m);
    for (int a = 0; a < m; ++a)
      cross_lags[a] = lag_triple(task.targets[t], ref.points[neighbors[a]], period);

    KernelSpec spec = spec_template;
    Eigen::MatrixXd block(m, m);
    Eigen::VectorXd cross(m), wn(m);
    for (int d = 0; d < m_draws; ++d) {
      spec.sigma2 = draws.params(d, sigma2_col);
      std::vector<double> values(free_names.size());
      for (std::size_t k = 0; k < values.size(); ++k) values[k] = draws.params(d, param_cols[k]);
      set_free_params(spec, values);

      const double jitter = kFactorJitterRel * spec.sigma2;
      int q = 0;
      for (int a = 0; a < m; ++a) {
        block(a, a) = spec.sigma2 + jitter;
        for (int b = a + 1; b < m; ++b, ++q) {
          const double v = eval(spec, pair_lags[q]);
          block(a, b) = v;
          block(b, a) = v;
        }
        cross(a) = eval(spec, cross_lags[a]);
        wn(a) = draws.w(d, neighbors[a]);
      }
      Eigen::LLT<Eigen::MatrixXd> llt(block);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("posterior_predictive: neighbor block not positive definite");
      const Eigen::VectorXd bvec = llt.solve(cross);
      double var = spec.sigma2 - bvec.dot(cross);
      var = std::max(var, 0.0);
      const double w_star = bvec.dot(wn) + std::sqrt(var) * rng.normal();

      double xb = 0.0;
      for (int k = 0; k < p; ++k) xb += target_X(t, k) * draws.params(d, k);
      const double eps = std::sqrt(draws.params(d, tau2_col)) * rng.normal();
      const double y_star = xb + w_star + eps;
      out.ppb(d, t) = y_star * y_star;  // model lives on the sqrt scale
    }
  });
  return out;
}

std::vector<PlanarCoord> convex_hull(std::vector<PlanarCoord> pts) {
  if (pts.size() < 3) return pts;
  std::sort(pts.begin(), pts.end(), [](const PlanarCoord& a, const PlanarCoord& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const PlanarCoord& a, const PlanarCoord& b) {
                          return a.x == b.x && a.y == b.y;
                        }),
            pts.end());
  const auto cross = [](const PlanarCoord& o, const PlanarCoord& a, const PlanarCoord& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  const int n = static_cast<int>(pts.size());
  if (n < 3) return pts;
  std::vector<PlanarCoord> hull(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (int i = n - 2, lower = k + 1; i >= 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool in_hull(const PlanarCoord& p, const std::vector<PlanarCoord>& hull, double tol) {
  if (hull.empty()) return false;
  if (hull.size() == 1)
    return spatial_distance(p, hull[0]) <= tol;
  if (hull.size() == 2) {
    // degenerate hull: distance to the segment
    const double vx = hull[1].x - hull[0].x, vy = hull[1].y - hull[0].y;
    const double len2 = vx * vx + vy * vy;
    double s = ((p.x - hull[0].x) * vx + (p.y - hull[0].y) * vy) / len2;
    s = std::clamp(s, 0.0, 1.0);
    return spatial_distance(p, {hull[0].x + s * vx, hull[0].y + s * vy}) <= tol;
  }
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const double cr = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (cr < -tol) return false;  // ccw hull: inside points sit left of every edge
  }
  return true;
}

}  // namespace qpgp
