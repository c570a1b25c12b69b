#include "qpgp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qpgp/geometry.hpp"
#include "qpgp/util.hpp"

namespace qpgp {

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("csv: missing required column '" + name + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& what, long row) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("csv row " + std::to_string(row) + ": cannot parse " + what +
                                " from '" + s + "'");
  }
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (t.header.empty())
      t.header = std::move(fields);
    else
      t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw std::invalid_argument("csv '" + path + "' is empty");
  return t;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

namespace {

// days since 1970-01-01 for a civil date (proleptic Gregorian)
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

}  // namespace

double parse_timestamp_hours(const std::string& ts) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  const int got_t = std::sscanf(ts.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
  const int got_sp = std::sscanf(ts.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &s);
  if (std::max(got_t, got_sp) < 5)
    throw std::invalid_argument("cannot parse timestamp '" + ts + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 ||
      s > 60)
    throw std::invalid_argument("timestamp out of range: '" + ts + "'");
  return days_from_civil(y, mo, d) * 24.0 + h + mi / 60.0 + s / 3600.0;
}

std::string format_timestamp(double hours_since_epoch) {
  const double total_sec = std::round(hours_since_epoch * 3600.0);
  long days = static_cast<long>(std::floor(total_sec / 86400.0));
  long rem = static_cast<long>(total_sec) - days * 86400;
  int y;
  unsigned mo, d;
  civil_from_days(days, y, mo, d);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", y, mo, d,
                static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                static_cast<int>(rem % 60));
  return buf;
}

double Dataset::sqrt_ozone(int r) const { return std::sqrt(records[r].ozone); }

Eigen::Vector3d Dataset::design_row(int r) const {
  return {1.0, records[r].rh, records[r].tmp};
}

std::vector<double> Dataset::distinct_hours() const {
  std::set<double> hours;
  for (const auto& r : records) hours.insert(r.t);
  return {hours.begin(), hours.end()};
}

Dataset ingest(const std::string& stations_csv, const std::string& records_csv) {
  Dataset data;
  {
    const CsvTable t = read_csv(stations_csv);
    const int c_id = t.column("id");
    const int c_lat = t.column("lat");
    const int c_lon = t.column("lon");
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      StationLocation s;
      s.id = row.at(c_id);
      s.lat = parse_double(row.at(c_lat), "lat", static_cast<long>(r + 2));
      s.lon = parse_double(row.at(c_lon), "lon", static_cast<long>(r + 2));
      if (!seen.insert(s.id).second)
        throw std::invalid_argument("stations: duplicate id '" + s.id + "'");
      data.stations.push_back(std::move(s));
    }
  }
  if (data.stations.empty()) throw std::invalid_argument("stations: table is empty");
  data.station_coords = project(data.stations);

  const CsvTable t = read_csv(records_csv);
  const int c_st = t.column("station_id");
  const int c_ts = t.column("timestamp");
  const int c_oz = t.column("ozone");
  const int c_rh = t.column("rh");
  const int c_tmp = t.column("tmp");

  std::vector<double> abs_hours(t.rows.size());
  double epoch = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    abs_hours[r] = parse_timestamp_hours(t.rows[r].at(c_ts));
    epoch = r == 0 ? abs_hours[r] : std::min(epoch, abs_hours[r]);
  }
  data.epoch_hours = epoch;

  std::set<std::pair<int, long>> seen_keys;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const long csv_row = static_cast<long>(r + 2);
    StationRecord rec;
    const std::string& sid = row.at(c_st);
    rec.station = -1;
    for (std::size_t s = 0; s < data.stations.size(); ++s)
      if (data.stations[s].id == sid) rec.station = static_cast<int>(s);
    if (rec.station < 0)
      throw std::invalid_argument("records row " + std::to_string(csv_row) +
                                  ": unknown station '" + sid + "'");
    rec.t = abs_hours[r] - epoch;
    const double frac = abs_hours[r] - std::round(abs_hours[r]);
    if (std::abs(frac) > 1.0 / 60.0)
      throw std::invalid_argument("records row " + std::to_string(csv_row) +
                                  ": timestamp is not hourly aligned");
    rec.ozone = parse_double(row.at(c_oz), "ozone", csv_row);
    if (rec.ozone < 0.0)
      throw std::invalid_argument("records row " + std::to_string(csv_row) +
                                  ": negative ozone value");
    rec.rh = parse_double(row.at(c_rh), "rh", csv_row);
    rec.tmp = parse_double(row.at(c_tmp), "tmp", csv_row);
    const long key_hour = static_cast<long>(std::llround(rec.t * 60.0));
    if (!seen_keys.insert({rec.station, key_hour}).second)
      throw std::invalid_argument("records row " + std::to_string(csv_row) +
                                  ": duplicate (station, timestamp) pair");
    data.records.push_back(rec);
  }
  if (data.records.empty()) throw std::invalid_argument("records: table is empty");
  return data;
}

void write_stations_csv(const std::string& path, const std::vector<StationLocation>& stations) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : stations) rows.push_back({s.id, fmt_num(s.lat), fmt_num(s.lon)});
  write_csv(path, {"id", "lat", "lon"}, rows);
}

void write_records_csv(const std::string& path, const Dataset& data) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : data.records)
    rows.push_back({data.stations[r.station].id, format_timestamp(data.epoch_hours + r.t),
                    fmt_num(r.ozone), fmt_num(r.rh), fmt_num(r.tmp)});
  write_csv(path, {"station_id", "timestamp", "ozone", "rh", "tmp"}, rows);
}

}  // namespace qpgp
