#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "qpgp/types.hpp"

namespace qpgp {

/// Minimal CSV table: comma separation, first row is the header, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // throws naming the column
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Hours since the civil epoch 1970-01-01T00:00. Accepts
/// "YYYY-MM-DD HH:MM[:SS]" and the ISO 'T' variant.
double parse_timestamp_hours(const std::string& ts);
std::string format_timestamp(double hours_since_epoch);

struct StationRecord {
  int station = 0;  // index into stations
  double t = 0.0;   // hours since the dataset epoch
  double ozone = 0.0;
  double rh = 0.0;
  double tmp = 0.0;
};

/// Validated hourly ozone dataset with covariates, the local projection, and
/// the sqrt-scale response derived at ingest.
struct Dataset {
  std::vector<StationLocation> stations;
  std::vector<PlanarCoord> station_coords;
  double epoch_hours = 0.0;  // absolute hours of t = 0
  std::vector<StationRecord> records;

  int n_stations() const { return static_cast<int>(stations.size()); }
  int n_records() const { return static_cast<int>(records.size()); }

  SpaceTimePoint point(int r) const { return {station_coords[records[r].station], records[r].t}; }
  double sqrt_ozone(int r) const;
  /// Design row (intercept, RH, TMP).
  Eigen::Vector3d design_row(int r) const;
  /// Distinct observation hours, ascending.
  std::vector<double> distinct_hours() const;
};

/// Reads and validates the station and record tables. Timestamps must be
/// hourly aligned; ozone must be nonnegative; (station, timestamp) pairs
/// must be unique. Errors carry row-level diagnostics.
Dataset ingest(const std::string& stations_csv, const std::string& records_csv);

void write_stations_csv(const std::string& path, const std::vector<StationLocation>& stations);
void write_records_csv(const std::string& path, const Dataset& data);

}  // namespace qpgp
