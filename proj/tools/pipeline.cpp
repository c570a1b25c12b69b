#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "qpgp/scoring.hpp"
#include "qpgp/util.hpp"

namespace qpgp::cli {

FitInputs build_fit_inputs(const Dataset& data, const std::optional<nlohmann::json>& holdout) {
  FitInputs out;
  std::set<long> held_hours;
  if (holdout) {
    const double fraction = holdout->value("fraction", 0.2);
    const std::uint64_t seed = holdout->value("seed", std::uint64_t{1});
    const auto hours = data.distinct_hours();
    out.holdout_hour_idx = holdout_hours(static_cast<int>(hours.size()), fraction, seed);
    for (int idx : out.holdout_hour_idx)
      held_hours.insert(std::llround(hours[idx] * 60.0));
  }

  std::vector<SpaceTimePoint> pts;
  std::vector<int> kept;
  for (int r = 0; r < data.n_records(); ++r) {
    if (held_hours.count(std::llround(data.records[r].t * 60.0))) {
      out.holdout_records.push_back(r);
      continue;
    }
    kept.push_back(r);
    pts.push_back(data.point(r));
  }
  if (pts.empty()) throw std::invalid_argument("fit: no training records after holdout");

  out.ref = build_reference(pts);
  const int n = out.ref.size();
  out.data.X.resize(n, 3);
  out.data.y.resize(n);
  out.data.x_names = {"intercept", "RH", "TMP"};
  out.train_records.resize(n);
  for (int i = 0; i < n; ++i) {
    const int r = kept[out.ref.to_input[i]];
    out.train_records[i] = r;
    out.data.X.row(i) = data.design_row(r).transpose();
    out.data.y[i] = data.sqrt_ozone(r);
  }
  return out;
}

TargetSet resolve_targets(const Dataset& data, const std::vector<SpaceTimePoint>& points) {
  // index simultaneous station records by minute-rounded hour
  std::map<long, std::vector<int>> by_hour;
  for (int r = 0; r < data.n_records(); ++r)
    by_hour[std::llround(data.records[r].t * 60.0)].push_back(r);

  const StationLocation center = projection_center(data.stations);
  TargetSet out;
  out.points = points;
  out.x.resize(points.size(), 3);
  for (std::size_t t = 0; t < points.size(); ++t) {
    const auto it = by_hour.find(std::llround(points[t].t * 60.0));
    if (it == by_hour.end())
      throw std::invalid_argument("targets: no simultaneous station records at t = " +
                                  std::to_string(points[t].t) + " h");
    std::vector<PlanarCoord> coords;
    Eigen::MatrixXd covs(it->second.size(), 2);
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      const auto& rec = data.records[it->second[k]];
      coords.push_back(data.station_coords[rec.station]);
      covs(k, 0) = rec.rh;
      covs(k, 1) = rec.tmp;
    }
    const Eigen::VectorXd v = interpolate_covariates(points[t].coord, coords, covs);
    out.x(t, 0) = 1.0;
    out.x(t, 1) = v[0];
    out.x(t, 2) = v[1];
    out.lonlat.push_back(unproject(points[t].coord, center));
    out.abs_hours.push_back(data.epoch_hours + points[t].t);
  }
  return out;
}

std::vector<SpaceTimePoint> targets_from_csv(const Dataset& data, const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_lon = t.column("lon");
  const int c_lat = t.column("lat");
  const int c_ts = t.column("timestamp");
  const StationLocation center = projection_center(data.stations);
  constexpr double deg = std::numbers::pi / 180.0;
  const double kx = kEarthRadiusKm * std::cos(center.lat * deg) * deg;
  const double ky = kEarthRadiusKm * deg;

  std::vector<SpaceTimePoint> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double lon = std::stod(t.rows[r].at(c_lon));
    const double lat = std::stod(t.rows[r].at(c_lat));
    SpaceTimePoint p;
    p.coord = {kx * (lon - center.lon), ky * (lat - center.lat)};
    p.t = parse_timestamp_hours(t.rows[r].at(c_ts)) - data.epoch_hours;
    out.push_back(p);
  }
  if (out.empty()) throw std::invalid_argument("targets csv '" + path + "' has no rows");
  return out;
}

std::vector<SpaceTimePoint> targets_from_grid(const Dataset& data, double resolution_km,
                                              const std::string& start_ts, int hours,
                                              std::vector<PlanarCoord> polygon) {
  if (!(resolution_km > 0.0)) throw std::invalid_argument("grid: resolution_km must be positive");
  if (hours < 1) throw std::invalid_argument("grid: hours must be >= 1");
  const auto hull =
      convex_hull(polygon.empty() ? data.station_coords : std::move(polygon));
  double xmin = hull[0].x, xmax = hull[0].x, ymin = hull[0].y, ymax = hull[0].y;
  PlanarCoord centroid{0.0, 0.0};
  for (const auto& p : hull) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
    centroid.x += p.x;
    centroid.y += p.y;
  }
  centroid.x /= static_cast<double>(hull.size());
  centroid.y /= static_cast<double>(hull.size());
  // lattice anchored at the vertex centroid, which a convex hull contains
  std::vector<PlanarCoord> cells;
  const long iy_min = static_cast<long>(std::ceil((ymin - centroid.y) / resolution_km));
  const long iy_max = static_cast<long>(std::floor((ymax - centroid.y) / resolution_km));
  const long ix_min = static_cast<long>(std::ceil((xmin - centroid.x) / resolution_km));
  const long ix_max = static_cast<long>(std::floor((xmax - centroid.x) / resolution_km));
  for (long iy = iy_min; iy <= iy_max; ++iy)
    for (long ix = ix_min; ix <= ix_max; ++ix) {
      const PlanarCoord p{centroid.x + ix * resolution_km, centroid.y + iy * resolution_km};
      if (in_hull(p, hull)) cells.push_back(p);
    }
  if (cells.empty())
    throw std::invalid_argument("grid: no cells inside the station hull at this resolution");

  const double t0 = parse_timestamp_hours(start_ts) - data.epoch_hours;
  std::vector<SpaceTimePoint> out;
  out.reserve(cells.size() * hours);
  for (const auto& c : cells)
    for (int h = 0; h < hours; ++h) out.push_back({c, t0 + h});
  return out;
}

PredictionSummary summarize_predictions(const Eigen::MatrixXd& ppb, double alpha) {
  const int m = static_cast<int>(ppb.rows());
  const int n = static_cast<int>(ppb.cols());
  PredictionSummary s;
  s.mean.resize(n);
  s.sd.resize(n);
  s.lo.resize(n);
  s.hi.resize(n);
  for (int t = 0; t < n; ++t) {
    std::vector<double> col(ppb.col(t).data(), ppb.col(t).data() + m);
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= m;
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    s.mean[t] = mean;
    s.sd[t] = m > 1 ? std::sqrt(var / (m - 1)) : 0.0;
    s.lo[t] = empirical_quantile(col, 0.5 * alpha);
    s.hi[t] = empirical_quantile(std::move(col), 1.0 - 0.5 * alpha);
  }
  return s;
}

void write_draws_csv(const std::string& path, const PosteriorDraws& draws) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(draws.draw_count());
  for (int r = 0; r < draws.draw_count(); ++r) {
    std::vector<std::string> row;
    row.reserve(draws.params.cols());
    for (int c = 0; c < draws.params.cols(); ++c) row.push_back(fmt_num(draws.params(r, c)));
    rows.push_back(std::move(row));
  }
  write_csv(path, draws.names, rows);
}

void write_latent_csv(const std::string& path, const PosteriorDraws& draws) {
  std::vector<std::string> header(draws.w.cols());
  for (int c = 0; c < draws.w.cols(); ++c) header[c] = "w" + std::to_string(c);
  std::vector<std::vector<std::string>> rows;
  rows.reserve(draws.w.rows());
  for (int r = 0; r < draws.w.rows(); ++r) {
    std::vector<std::string> row(draws.w.cols());
    for (int c = 0; c < draws.w.cols(); ++c) row[c] = fmt_num(draws.w(r, c));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

PosteriorDraws read_draws(const std::string& draws_csv, const std::string& latent_csv) {
  PosteriorDraws draws;
  const CsvTable t = read_csv(draws_csv);
  draws.names = t.header;
  draws.params.resize(t.rows.size(), t.header.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.header.size(); ++c)
      draws.params(r, c) = std::stod(t.rows[r].at(c));

  const CsvTable w = read_csv(latent_csv);
  if (w.rows.size() != t.rows.size())
    throw std::invalid_argument("draws and latent files disagree on the number of draws");
  draws.w.resize(w.rows.size(), w.header.size());
  for (std::size_t r = 0; r < w.rows.size(); ++r)
    for (std::size_t c = 0; c < w.header.size(); ++c) draws.w(r, c) = std::stod(w.rows[r].at(c));
  return draws;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

std::uint64_t config_hash(const nlohmann::json& config) { return fnv1a(config.dump()); }

void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const nlohmann::json& config, std::uint64_t seed, double wall_seconds,
                    const std::vector<std::string>& outputs, const nlohmann::json& extra) {
  nlohmann::json m;
  m["command"] = command;
  m["version"] = "0.1.0";
  m["seed"] = seed;
  m["config"] = config;
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  m["config_hash"] = hex;
  m["wall_time_s"] = wall_seconds;
  m["outputs"] = outputs;
  for (const auto& item : extra.items()) m[item.key()] = item.value();
  write_json_file((out_dir / "manifest.json").string(), m);
}

}  // namespace qpgp::cli
