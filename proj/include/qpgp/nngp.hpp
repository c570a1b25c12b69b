#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qpgp/geometry.hpp"
#include "qpgp/kernels.hpp"
#include "qpgp/types.hpp"

namespace qpgp {

/// Reference set in evaluation order: time ascending, ties south to north
/// (y ascending, then x, then input index to make the order total).
struct ReferenceSet {
  std::vector<SpaceTimePoint> points;  // reference order
  std::vector<int> to_input;           // reference index -> input index

  int size() const { return static_cast<int>(points.size()); }
};

/// Throws on exact duplicate (coord, time) pairs, naming the offenders.
ReferenceSet build_reference(const std::vector<SpaceTimePoint>& input);

/// Conditioning-set recipe: spatially nearest stations at a fixed menu of
/// past lags, plus simultaneous stations, capped at max_neighbors.
struct NeighborSpec {
  int n_spatial = 5;  // per matched lag, nearest by distance (own station counts)
  std::vector<double> lags_back = {1.0, 2.0, 23.0, 24.0, 25.0, 168.0};
  bool include_simultaneous = true;  // same-time nodes, self excluded
  int max_neighbors = 34;
  double lag_tolerance = 0.5;  // hours; admits off-grid timestamps

  void validate() const;
  static NeighborSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// The Vecchia DAG: per node, ascending indices into the reference set,
/// all strictly smaller than the node's own index.
struct NeighborGraph {
  std::vector<std::vector<int>> sets;

  int size() const { return static_cast<int>(sets.size()); }
};

NeighborGraph build_neighbors(const ReferenceSet& ref, const NeighborSpec& spec);

/// Per-node regression coefficients B_i on the neighbor block and
/// conditional variances F_i. Row i of B lives in coeffs[offsets[i] ..
/// offsets[i+1]).
struct SparseFactors {
  std::vector<int> offsets;
  std::vector<double> coeffs;
  Eigen::VectorXd f;

  int size() const { return static_cast<int>(f.size()); }
  std::span<const double> row(int i) const {
    return {coeffs.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
};

/// Lag triples and child lists cached off a fixed (reference, graph) pair so
/// factor recomputation under new kernel parameters touches no geometry.
class FactorWorkspace {
 public:
  FactorWorkspace(const ReferenceSet& ref, const NeighborGraph& graph,
                  double period = kDefaultPeriodHours);
  // the graph must outlive the workspace
  FactorWorkspace(const ReferenceSet&, NeighborGraph&&, double = kDefaultPeriodHours) = delete;

  /// B_i solves the jittered neighbor-block system via LLT; F_i is the
  /// conditional variance. Throws std::runtime_error naming the first node
  /// whose block is not positive definite after jitter.
  void compute(const KernelSpec& spec, SparseFactors& out) const;

  const NeighborGraph& graph() const { return *graph_; }
  int size() const { return n_; }
  /// Nodes j (with the position of i inside N(j)) that condition on i.
  const std::vector<std::pair<int, int>>& children(int i) const { return children_[i]; }

 private:
  const NeighborGraph* graph_;
  int n_ = 0;
  std::vector<int> offsets_;            // into cross_lags_, per node
  std::vector<LagTriple> cross_lags_;   // node vs each neighbor
  std::vector<int> pair_offsets_;       // into pair_lags_, per node
  std::vector<LagTriple> pair_lags_;    // strict upper triangle of each block
  std::vector<std::vector<std::pair<int, int>>> children_;
};

/// One-shot convenience wrapper over FactorWorkspace::compute.
SparseFactors factors(const NeighborGraph& graph, const ReferenceSet& ref, const KernelSpec& spec,
                      double period = kDefaultPeriodHours);

/// Sparse Gaussian log-density sum_i log N(w_i | B_i w_{N(i)}, F_i).
double log_density(const Eigen::VectorXd& w, const NeighborGraph& graph,
                   const SparseFactors& factors);

/// Relative jitter added to neighbor-block diagonals before factorization.
inline constexpr double kFactorJitterRel = 1e-10;

}  // namespace qpgp
