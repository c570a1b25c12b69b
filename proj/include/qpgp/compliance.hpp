#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qpgp {

/// National ambient ozone limits, ppb.
struct RegulatoryLimits {
  double hourly_ppb = 95.0;
  double eight_hour_ppb = 70.0;

  void validate() const;
  static RegulatoryLimits from_json(const nlohmann::json& j);
};

/// Daily respiratory relative-risk model: r = scale * exp(coef_hd * H * D +
/// coef_on * O_n) with H hours above the threshold, D the max excess over it
/// and O_n the average nighttime level over the previous lag_days nights
/// (21:00 through 08:00). The scale calibrates annual average risk to one.
struct RiskParams {
  double threshold_ppb = 60.0;
  double coef_hd = 5.020e-4;  // per ppb-hour
  double coef_on = 5.714e-3;  // per ppb
  double scale = 0.864;
  int night_start_hour = 21;  // clock hour, inclusive
  int night_end_hour = 8;     // clock hour, inclusive, next morning
  int lag_days = 3;

  void validate() const;
  static RiskParams from_json(const nlohmann::json& j);
};

/// Strict comparison of each hourly value against the limit.
std::vector<bool> hourly_exceed(std::span<const double> series, double limit);

/// Trailing eight-hour moving average (hours t-7..t, full windows only)
/// strictly above the limit; the flag sits on the window's final hour.
std::vector<bool> eight_hour_exceed(std::span<const double> series, double limit);

struct DailyRisk {
  double r = 0.0;
  bool no_nights = false;  // O_n fell back to 0 because no prior night was available
};

/// Risk for one day from its 24 hourly values and up to lag_days complete
/// prior-night series (each night_start..night_end, oldest first or any
/// order). Empty day -> error; zero nights -> O_n = 0 with a warning flag.
DailyRisk daily_risk(std::span<const double> day_series,
                     const std::vector<std::vector<double>>& prior_nights,
                     const RiskParams& params);

/// Recalibrates the leading scale so that the average daily risk over the
/// supplied reference series (one hourly series per station, whole days,
/// typically a full year) equals one. Returns the new scale; the other
/// parameters are taken from `params`.
double calibrate_risk_scale(const std::vector<std::vector<double>>& station_series,
                            const RiskParams& params);

/// Posterior summaries of exceedance and risk over a location x hour grid.
/// draws is M x (L*H) with hour fastest (column l*H + h); the grid must
/// start at clock hour 0 and cover whole days.
struct ComplianceReport {
  int n_locations = 0;
  int n_days = 0;
  // location x day
  Eigen::MatrixXd p_exceed;   // posterior probability of >= 1 exceedance that day
  Eigen::MatrixXd risk_mean, risk_lo, risk_hi;
  // citywide, per day
  Eigen::VectorXd prop_mean, prop_lo, prop_hi;                  // exceeding fraction of cells
  Eigen::VectorXd mean_risk_mean, mean_risk_lo, mean_risk_hi;   // spatial mean risk
  Eigen::VectorXd max_risk_mean, max_risk_lo, max_risk_hi;      // spatial max risk
  // per location, aggregated over the record
  Eigen::VectorXd hours_exceed_frac;  // posterior mean fraction of hours exceeding
  Eigen::VectorXd loc_mean_risk_mean, loc_mean_risk_lo, loc_mean_risk_hi;
  Eigen::VectorXd loc_max_risk_mean, loc_max_risk_lo, loc_max_risk_hi;
};

ComplianceReport posterior_compliance(const Eigen::MatrixXd& draws, int n_locations, int n_hours,
                                      const RegulatoryLimits& limits, const RiskParams& params);

}  // namespace qpgp
