#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "qpgp/dataset.hpp"

using namespace qpgp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream(p) << content;
    return p.string();
  }
};

const char* kStations = "id,lat,lon\nA,19.40,-99.10\nB,19.50,-99.20\n";

}  // namespace

TEST_CASE("timestamps parse and format round-trip") {
  const double h = parse_timestamp_hours("2017-04-01 13:00");
  CHECK(format_timestamp(h) == "2017-04-01T13:00:00");
  CHECK(parse_timestamp_hours("2017-04-01T13:00:00") == h);
  CHECK(parse_timestamp_hours("2017-04-01 14:00") == h + 1.0);
  CHECK(parse_timestamp_hours("2017-04-02 13:00") == h + 24.0);
  CHECK_THROWS_AS(parse_timestamp_hours("not a time"), std::invalid_argument);
  CHECK_THROWS_AS(parse_timestamp_hours("2017-13-01 00:00"), std::invalid_argument);
}

TEST_CASE("ingest builds a validated dataset") {
  TempDir dir("qpgp_ingest_ok");
  const auto st = dir.file("stations.csv", kStations);
  const auto rec = dir.file("records.csv",
                            "station_id,timestamp,ozone,rh,tmp\n"
                            "A,2017-04-01 00:00,25.0,60,15\n"
                            "B,2017-04-01 00:00,36.0,55,16\n"
                            "A,2017-04-01 01:00,16.0,58,14\n");
  const Dataset d = ingest(st, rec);
  CHECK(d.n_stations() == 2);
  CHECK(d.n_records() == 3);
  CHECK(d.records[0].t == 0.0);
  CHECK(d.records[2].t == 1.0);
  CHECK(d.sqrt_ozone(0) == doctest::Approx(5.0));
  CHECK(d.design_row(1)[0] == 1.0);
  CHECK(d.design_row(1)[1] == 55.0);
  CHECK(d.distinct_hours() == std::vector<double>{0.0, 1.0});
  // projection got applied
  CHECK(d.station_coords[0].x != d.station_coords[1].x);
}

TEST_CASE("ingest rejects malformed inputs with row diagnostics") {
  TempDir dir("qpgp_ingest_bad");
  const auto st = dir.file("stations.csv", kStations);
  SUBCASE("missing column") {
    const auto rec = dir.file("r.csv", "station_id,timestamp,ozone,tmp\nA,2017-04-01 00:00,1,2\n");
    CHECK_THROWS_WITH_AS(ingest(st, rec), doctest::Contains("rh"), std::invalid_argument);
  }
  SUBCASE("negative ozone names the row") {
    const auto rec = dir.file("r.csv",
                              "station_id,timestamp,ozone,rh,tmp\n"
                              "A,2017-04-01 00:00,-1.0,60,15\n");
    CHECK_THROWS_WITH_AS(ingest(st, rec), doctest::Contains("row 2"), std::invalid_argument);
  }
  SUBCASE("duplicate station-timestamp pair") {
    const auto rec = dir.file("r.csv",
                              "station_id,timestamp,ozone,rh,tmp\n"
                              "A,2017-04-01 00:00,1.0,60,15\n"
                              "A,2017-04-01 00:00,2.0,61,16\n");
    CHECK_THROWS_WITH_AS(ingest(st, rec), doctest::Contains("duplicate"), std::invalid_argument);
  }
  SUBCASE("unknown station") {
    const auto rec = dir.file("r.csv", "station_id,timestamp,ozone,rh,tmp\nZ,2017-04-01 00:00,1,2,3\n");
    CHECK_THROWS_WITH_AS(ingest(st, rec), doctest::Contains("Z"), std::invalid_argument);
  }
  SUBCASE("off-hour timestamp") {
    const auto rec = dir.file("r.csv", "station_id,timestamp,ozone,rh,tmp\nA,2017-04-01 00:17,1,2,3\n");
    CHECK_THROWS_WITH_AS(ingest(st, rec), doctest::Contains("hourly"), std::invalid_argument);
  }
  SUBCASE("duplicate station id") {
    const auto st2 = dir.file("s2.csv", "id,lat,lon\nA,19.4,-99.1\nA,19.5,-99.2\n");
    const auto rec = dir.file("r.csv", "station_id,timestamp,ozone,rh,tmp\nA,2017-04-01 00:00,1,2,3\n");
    CHECK_THROWS_WITH_AS(ingest(st2, rec), doctest::Contains("duplicate"), std::invalid_argument);
  }
}

TEST_CASE("dataset csv writers round-trip through ingest") {
  TempDir dir("qpgp_roundtrip");
  const auto st = dir.file("stations.csv", kStations);
  const auto rec = dir.file("records.csv",
                            "station_id,timestamp,ozone,rh,tmp\n"
                            "A,2017-04-01 05:00,25.0,60.5,15.25\n"
                            "B,2017-04-01 06:00,36.0,55,16\n");
  const Dataset d = ingest(st, rec);
  write_stations_csv((dir.path / "s2.csv").string(), d.stations);
  write_records_csv((dir.path / "r2.csv").string(), d);
  const Dataset d2 = ingest((dir.path / "s2.csv").string(), (dir.path / "r2.csv").string());
  CHECK(d2.n_records() == d.n_records());
  CHECK(d2.records[1].ozone == d.records[1].ozone);
  CHECK(d2.records[0].rh == d.records[0].rh);
  CHECK(d2.epoch_hours == d.epoch_hours);
}
