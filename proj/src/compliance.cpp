#include "qpgp/compliance.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qpgp/scoring.hpp"

namespace qpgp {

void RegulatoryLimits::validate() const {
  if (!(hourly_ppb > 0.0) || !(eight_hour_ppb > 0.0))
    throw std::invalid_argument("limits: thresholds must be positive");
}

RegulatoryLimits RegulatoryLimits::from_json(const nlohmann::json& j) {
  RegulatoryLimits l;
  l.hourly_ppb = j.value("hourly_ppb", l.hourly_ppb);
  l.eight_hour_ppb = j.value("eight_hour_ppb", l.eight_hour_ppb);
  l.validate();
  return l;
}

void RiskParams::validate() const {
  if (!(threshold_ppb > 0.0) || !(coef_hd > 0.0) || !(coef_on > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("risk: threshold, coefficients and scale must be positive");
  if (lag_days < 1) throw std::invalid_argument("risk: lag_days must be >= 1");
  if (night_start_hour < 0 || night_start_hour > 23 || night_end_hour < 0 || night_end_hour > 23)
    throw std::invalid_argument("risk: night window hours must be clock hours");
}

RiskParams RiskParams::from_json(const nlohmann::json& j) {
  RiskParams p;
  p.threshold_ppb = j.value("threshold_ppb", p.threshold_ppb);
  p.coef_hd = j.value("coef_hd", p.coef_hd);
  p.coef_on = j.value("coef_on", p.coef_on);
  p.scale = j.value("scale", p.scale);
  p.night_start_hour = j.value("night_start_hour", p.night_start_hour);
  p.night_end_hour = j.value("night_end_hour", p.night_end_hour);
  p.lag_days = j.value("lag_days", p.lag_days);
  p.validate();
  return p;
}

std::vector<bool> hourly_exceed(std::span<const double> series, double limit) {
  std::vector<bool> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = series[i] > limit;
  return out;
}

std::vector<bool> eight_hour_exceed(std::span<const double> series, double limit) {
  std::vector<bool> out(series.size(), false);
  if (series.size() < 8) return out;
  double window = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    window += series[i];
    if (i >= 8) window -= series[i - 8];
    if (i >= 7) out[i] = window / 8.0 > limit;
  }
  return out;
}

DailyRisk daily_risk(std::span<const double> day_series,
                     const std::vector<std::vector<double>>& prior_nights,
                     const RiskParams& params) {
  params.validate();
  if (day_series.empty()) throw std::invalid_argument("daily_risk: empty day series");

  int hours_above = 0;
  double day_max = day_series[0];
  for (double v : day_series) {
    if (v > params.threshold_ppb) ++hours_above;
    day_max = std::max(day_max, v);
  }
  // the excess is floored at zero, so the product term vanishes with H
  const double excess = day_max > params.threshold_ppb ? day_max - params.threshold_ppb : 0.0;

  DailyRisk out;
  double night_mean = 0.0;
  int nights = 0;
  for (const auto& night : prior_nights) {
    if (night.empty()) continue;
    double m = 0.0;
    for (double v : night) m += v;
    night_mean += m / static_cast<double>(night.size());
    ++nights;
  }
  if (nights > 0)
    night_mean /= nights;
  else
    out.no_nights = true;

  out.r = params.scale *
          std::exp(params.coef_hd * hours_above * excess + params.coef_on * night_mean);
  return out;
}

double calibrate_risk_scale(const std::vector<std::vector<double>>& station_series,
                            const RiskParams& params) {
  params.validate();
  RiskParams unit = params;
  unit.scale = 1.0;
  const int night_len = (24 - params.night_start_hour) + params.night_end_hour + 1;
  double total = 0.0;
  long days = 0;
  for (const auto& series : station_series) {
    if (series.size() < 24 || series.size() % 24 != 0)
      throw std::invalid_argument("calibrate_risk_scale: series must cover whole days");
    const int n_days = static_cast<int>(series.size()) / 24;
    for (int d = 0; d < n_days; ++d) {
      std::vector<std::vector<double>> nights;
      for (int j = 0; j < unit.lag_days; ++j) {
        const int k = d - j;
        if (k < 1) continue;
        const int start = 24 * (k - 1) + unit.night_start_hour;
        nights.emplace_back(series.begin() + start, series.begin() + start + night_len);
      }
      total += daily_risk(std::span<const double>(series.data() + 24 * d, 24), nights, unit).r;
      ++days;
    }
  }
  if (days == 0) throw std::invalid_argument("calibrate_risk_scale: no days supplied");
  return static_cast<double>(days) / total;
}

ComplianceReport posterior_compliance(const Eigen::MatrixXd& draws, int n_locations, int n_hours,
                                      const RegulatoryLimits& limits, const RiskParams& params) {
  limits.validate();
  params.validate();
  if (n_locations < 1 || n_hours < 24)
    throw std::invalid_argument("posterior_compliance: need >= 1 location and >= 24 hours");
  if (n_hours % 24 != 0)
    throw std::invalid_argument("posterior_compliance: the grid must cover whole days");
  const int n_draws = static_cast<int>(draws.rows());
  if (n_draws < 1 || draws.cols() != static_cast<long>(n_locations) * n_hours)
    throw std::invalid_argument("posterior_compliance: draws must be M x (locations*hours)");
  const int n_days = n_hours / 24;
  const int night_len = (24 - params.night_start_hour) + params.night_end_hour + 1;

  ComplianceReport rep;
  rep.n_locations = n_locations;
  rep.n_days = n_days;
  rep.p_exceed = Eigen::MatrixXd::Zero(n_locations, n_days);

  // per-draw stores for the quantile summaries
  std::vector<double> risk(static_cast<std::size_t>(n_draws) * n_locations * n_days);
  Eigen::MatrixXd prop(n_draws, n_days), cw_mean(n_draws, n_days), cw_max(n_draws, n_days);
  Eigen::MatrixXd loc_frac(n_draws, n_locations), loc_mean(n_draws, n_locations),
      loc_max(n_draws, n_locations);

  std::vector<double> series(n_hours);
  for (int m = 0; m < n_draws; ++m) {
    for (int d = 0; d < n_days; ++d) {
      prop(m, d) = 0.0;
      cw_mean(m, d) = 0.0;
      cw_max(m, d) = 0.0;
    }
    for (int l = 0; l < n_locations; ++l) {
      for (int h = 0; h < n_hours; ++h) series[h] = draws(m, static_cast<long>(l) * n_hours + h);
      const auto one_hr = hourly_exceed(series, limits.hourly_ppb);
      const auto eight_hr = eight_hour_exceed(series, limits.eight_hour_ppb);

      int flagged_hours = 0;
      double risk_sum = 0.0, risk_max = 0.0;
      for (int d = 0; d < n_days; ++d) {
        bool day_exceeds = false;
        for (int h = 24 * d; h < 24 * (d + 1); ++h) {
          const bool f = one_hr[h] || eight_hr[h];
          day_exceeds = day_exceeds || f;
          flagged_hours += f ? 1 : 0;
        }
        if (day_exceeds) {
          rep.p_exceed(l, d) += 1.0;
          prop(m, d) += 1.0;
        }

        std::vector<std::vector<double>> nights;
        for (int j = 0; j < params.lag_days; ++j) {
          const int k = d - j;  // night ending the morning of day k
          if (k < 1) continue;
          std::vector<double> night(night_len);
          const int start = 24 * (k - 1) + params.night_start_hour;
          for (int q = 0; q < night_len; ++q) night[q] = series[start + q];
          nights.push_back(std::move(night));
        }
        const double r =
            daily_risk(std::span<const double>(series.data() + 24 * d, 24), nights, params).r;
        risk[(static_cast<std::size_t>(m) * n_locations + l) * n_days + d] = r;
        cw_mean(m, d) += r;
        cw_max(m, d) = std::max(cw_max(m, d), r);
        risk_sum += r;
        risk_max = std::max(risk_max, r);
      }
      loc_frac(m, l) = static_cast<double>(flagged_hours) / n_hours;
      loc_mean(m, l) = risk_sum / n_days;
      loc_max(m, l) = risk_max;
    }
    for (int d = 0; d < n_days; ++d) {
      prop(m, d) /= n_locations;
      cw_mean(m, d) /= n_locations;
    }
  }
  rep.p_exceed /= static_cast<double>(n_draws);

  auto summarize = [&](const std::function<double(int)>& value, double& mean, double& lo,
                       double& hi) {
    std::vector<double> v(n_draws);
    double s = 0.0;
    for (int m = 0; m < n_draws; ++m) {
      v[m] = value(m);
      s += v[m];
    }
    mean = s / n_draws;
    lo = empirical_quantile(v, 0.025);
    hi = empirical_quantile(std::move(v), 0.975);
  };

  rep.risk_mean.resize(n_locations, n_days);
  rep.risk_lo.resize(n_locations, n_days);
  rep.risk_hi.resize(n_locations, n_days);
  for (int l = 0; l < n_locations; ++l)
    for (int d = 0; d < n_days; ++d)
      summarize(
          [&](int m) {
            return risk[(static_cast<std::size_t>(m) * n_locations + l) * n_days + d];
          },
          rep.risk_mean(l, d), rep.risk_lo(l, d), rep.risk_hi(l, d));

  auto summarize_vec = [&](const Eigen::MatrixXd& store, Eigen::VectorXd& mean,
                           Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
    const int cols = static_cast<int>(store.cols());
    mean.resize(cols);
    lo.resize(cols);
    hi.resize(cols);
    for (int c = 0; c < cols; ++c)
      summarize([&](int m) { return store(m, c); }, mean[c], lo[c], hi[c]);
  };
  summarize_vec(prop, rep.prop_mean, rep.prop_lo, rep.prop_hi);
  summarize_vec(cw_mean, rep.mean_risk_mean, rep.mean_risk_lo, rep.mean_risk_hi);
  summarize_vec(cw_max, rep.max_risk_mean, rep.max_risk_lo, rep.max_risk_hi);
  summarize_vec(loc_mean, rep.loc_mean_risk_mean, rep.loc_mean_risk_lo, rep.loc_mean_risk_hi);
  summarize_vec(loc_max, rep.loc_max_risk_mean, rep.loc_max_risk_lo, rep.loc_max_risk_hi);

  rep.hours_exceed_frac.resize(n_locations);
  for (int l = 0; l < n_locations; ++l) rep.hours_exceed_frac[l] = loc_frac.col(l).mean();
  return rep;
}

}  // namespace qpgp
