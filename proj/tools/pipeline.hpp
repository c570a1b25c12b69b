#pragma once

// Shared plumbing between the CLI subcommands: dataset <-> module glue,
// holdout filtering, prediction target resolution, and manifests.

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpgp/dataset.hpp"
#include "qpgp/inference.hpp"
#include "qpgp/nngp.hpp"
#include "qpgp/predict.hpp"

namespace qpgp::cli {

/// Training inputs in reference order, optionally after removing all
/// observations at held-out hours.
struct FitInputs {
  ReferenceSet ref;
  FitData data;
  std::vector<int> holdout_hour_idx;   // indices into distinct_hours()
  std::vector<int> holdout_records;    // record indices left out of training
  std::vector<int> train_records;      // record index per reference row (input order)
};

FitInputs build_fit_inputs(const Dataset& data, const std::optional<nlohmann::json>& holdout);

/// Targets plus their interpolated covariates.
struct TargetSet {
  std::vector<SpaceTimePoint> points;
  Eigen::MatrixXd x;                   // intercept, RH, TMP per target
  std::vector<StationLocation> lonlat; // for reporting
  std::vector<double> abs_hours;       // hours since the civil epoch
};

/// Covariates at arbitrary locations by inverse-squared-distance weighting of
/// the stations observed at that hour; exact station matches pass through.
TargetSet resolve_targets(const Dataset& data, const std::vector<SpaceTimePoint>& points);

/// Targets from a (lon, lat, timestamp) CSV.
std::vector<SpaceTimePoint> targets_from_csv(const Dataset& data, const std::string& path);

/// Regular km grid over a bounding polygon (its convex hull; defaults to the
/// station hull) crossed with an hourly range.
std::vector<SpaceTimePoint> targets_from_grid(const Dataset& data, double resolution_km,
                                              const std::string& start_ts, int hours,
                                              std::vector<PlanarCoord> polygon = {});

struct PredictionSummary {
  Eigen::VectorXd mean, sd, lo, hi;
};

PredictionSummary summarize_predictions(const Eigen::MatrixXd& ppb, double alpha);

/// Flat-file round trip for posterior draws.
void write_draws_csv(const std::string& path, const PosteriorDraws& draws);
void write_latent_csv(const std::string& path, const PosteriorDraws& draws);
PosteriorDraws read_draws(const std::string& draws_csv, const std::string& latent_csv);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

/// Manifest written next to every command's outputs. `extra` is merged in.
void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const nlohmann::json& config, std::uint64_t seed, double wall_seconds,
                    const std::vector<std::string>& outputs,
                    const nlohmann::json& extra = nlohmann::json::object());

std::uint64_t config_hash(const nlohmann::json& config);

}  // namespace qpgp::cli
