#include "qpgp/nngp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "qpgp/util.hpp"

namespace qpgp {

ReferenceSet build_reference(const std::vector<SpaceTimePoint>& input) {
  const int n = static_cast<int>(input.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto key_less = [&](int a, int b) {
    const auto& pa = input[a];
    const auto& pb = input[b];
    if (pa.t != pb.t) return pa.t < pb.t;
    if (pa.coord.y != pb.coord.y) return pa.coord.y < pb.coord.y;
    if (pa.coord.x != pb.coord.x) return pa.coord.x < pb.coord.x;
    return a < b;
  };
  std::stable_sort(order.begin(), order.end(), key_less);

  std::string dups;
  for (int k = 0; k + 1 < n; ++k) {
    const auto& a = input[order[k]];
    const auto& b = input[order[k + 1]];
    if (a.t == b.t && a.coord.x == b.coord.x && a.coord.y == b.coord.y) {
      if (!dups.empty()) dups += ", ";
      dups += "(" + std::to_string(order[k]) + "," + std::to_string(order[k + 1]) + ")";
    }
  }
  if (!dups.empty())
    throw std::invalid_argument("build_reference: duplicate space-time pairs at input indices " +
                                dups);

  ReferenceSet ref;
  ref.points.reserve(n);
  ref.to_input = order;
  for (int idx : order) ref.points.push_back(input[idx]);
  return ref;
}

void NeighborSpec::validate() const {
  if (n_spatial < 1) throw std::invalid_argument("neighbors: n_spatial must be >= 1");
  if (max_neighbors < 1) throw std::invalid_argument("neighbors: max_neighbors must be >= 1");
  if (!(lag_tolerance >= 0.0)) throw std::invalid_argument("neighbors: lag_tolerance must be >= 0");
  for (double lag : lags_back)
    if (!(lag > 0.0)) throw std::invalid_argument("neighbors: lags must be positive");
}

NeighborSpec NeighborSpec::from_json(const nlohmann::json& j) {
  NeighborSpec spec;
  spec.n_spatial = j.value("n_spatial", spec.n_spatial);
  if (j.contains("lags_back")) spec.lags_back = j.at("lags_back").get<std::vector<double>>();
  spec.include_simultaneous = j.value("include_simultaneous", spec.include_simultaneous);
  spec.max_neighbors = j.value("max_neighbors", spec.max_neighbors);
  spec.lag_tolerance = j.value("lag_tolerance", spec.lag_tolerance);
  spec.validate();
  return spec;
}

nlohmann::json NeighborSpec::to_json() const {
  nlohmann::json j;
  j["n_spatial"] = n_spatial;
  j["lags_back"] = lags_back;
  j["include_simultaneous"] = include_simultaneous;
  j["max_neighbors"] = max_neighbors;
  j["lag_tolerance"] = lag_tolerance;
  return j;
}

namespace {

// prior-ordered nodes whose time falls inside [lo, hi]; times are ascending
std::pair<int, int> time_window(const std::vector<double>& times, int upto, double lo, double hi) {
  const auto begin = times.begin();
  const auto end = times.begin() + upto;
  const int a = static_cast<int>(std::lower_bound(begin, end, lo) - begin);
  const int b = static_cast<int>(std::upper_bound(begin, end, hi) - begin);
  return {a, b};
}

void nearest_by_distance(const ReferenceSet& ref, int i, int from, int to, int keep,
                         std::vector<int>* out) {
  std::vector<std::pair<double, int>> cand;
  cand.reserve(to - from);
  for (int j = from; j < to; ++j)
    cand.emplace_back(spatial_distance(ref.points[i].coord, ref.points[j].coord), j);
  const int k = std::min<int>(keep, static_cast<int>(cand.size()));
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
  for (int q = 0; q < k; ++q) out->push_back(cand[q].second);
}

}  // namespace

NeighborGraph build_neighbors(const ReferenceSet& ref, const NeighborSpec& spec) {
  spec.validate();
  const int n = ref.size();
  std::vector<double> times(n);
  for (int i = 0; i < n; ++i) times[i] = ref.points[i].t;

  NeighborGraph graph;
  graph.sets.resize(n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> picked;
    for (double lag : spec.lags_back) {
      const auto [a, b] =
          time_window(times, i, times[i] - lag - spec.lag_tolerance, times[i] - lag + spec.lag_tolerance);
      nearest_by_distance(ref, i, a, b, spec.n_spatial, &picked);
    }
    if (spec.include_simultaneous) {
      const auto [a, b] =
          time_window(times, i, times[i] - spec.lag_tolerance, times[i] + spec.lag_tolerance);
      // the node itself is not prior-ordered, so its slot drops out
      nearest_by_distance(ref, i, a, b, spec.n_spatial - 1, &picked);
    }
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());

    if (i <= spec.max_neighbors && static_cast<int>(picked.size()) < i) {
      // early nodes condition on everything prior
      picked.resize(i);
      std::iota(picked.begin(), picked.end(), 0);
    } else if (static_cast<int>(picked.size()) > spec.max_neighbors) {
      // closest in time first, then in space
      std::vector<std::tuple<double, double, int>> ranked;
      ranked.reserve(picked.size());
      for (int j : picked)
        ranked.emplace_back(std::abs(times[i] - times[j]),
                            spatial_distance(ref.points[i].coord, ref.points[j].coord), j);
      std::partial_sort(ranked.begin(), ranked.begin() + spec.max_neighbors, ranked.end());
      picked.clear();
      for (int q = 0; q < spec.max_neighbors; ++q) picked.push_back(std::get<2>(ranked[q]));
      std::sort(picked.begin(), picked.end());
    }
    graph.sets[i] = std::move(picked);
  }
  return graph;
}

FactorWorkspace::FactorWorkspace(const ReferenceSet& ref, const NeighborGraph& graph,
                                 double period)
    : graph_(&graph), n_(graph.size()) {
  if (ref.size() != n_) throw std::invalid_argument("FactorWorkspace: reference/graph size mismatch");
  offsets_.assign(n_ + 1, 0);
  pair_offsets_.assign(n_ + 1, 0);
  for (int i = 0; i < n_; ++i) {
    const int m = static_cast<int>(graph.sets[i].size());
    offsets_[i + 1] = offsets_[i] + m;
    pair_offsets_[i + 1] = pair_offsets_[i] + m * (m - 1) / 2;
  }
  cross_lags_.resize(offsets_[n_]);
  pair_lags_.resize(pair_offsets_[n_]);
  children_.resize(n_);
  for (int i = 0; i < n_; ++i) {
    const auto& set = graph.sets[i];
    const int m = static_cast<int>(set.size());
    for (int a = 0; a < m; ++a) {
      cross_lags_[offsets_[i] + a] = lag_triple(ref.points[i], ref.points[set[a]], period);
      children_[set[a]].emplace_back(i, a);
    }
    int q = pair_offsets_[i];
    for (int a = 0; a < m; ++a)
      for (int b = a + 1; b < m; ++b)
        pair_lags_[q++] = lag_triple(ref.points[set[a]], ref.points[set[b]], period);
  }
}

void FactorWorkspace::compute(const KernelSpec& spec, SparseFactors& out) const {
  const double sigma2 = spec.sigma2;
  const double jitter = kFactorJitterRel * sigma2;
  out.offsets = offsets_;
  out.coeffs.assign(offsets_[n_], 0.0);
  out.f.resize(n_);

  std::atomic<int> bad_node{-1};
  parallel_for(static_cast<std::size_t>(n_), [&](std::size_t ui) {
    const int i = static_cast<int>(ui);
    if (bad_node.load(std::memory_order_relaxed) >= 0) return;
    const int m = offsets_[i + 1] - offsets_[i];
    if (m == 0) {
      out.f[i] = eval(spec, LagTriple{});
      return;
    }
    Eigen::MatrixXd block(m, m);
    Eigen::VectorXd cross(m);
    int q = pair_offsets_[i];
    for (int a = 0; a < m; ++a) {
      block(a, a) = sigma2 + jitter;
      for (int b = a + 1; b < m; ++b, ++q) {
        const double v = eval(spec, pair_lags_[q]);
        block(a, b) = v;
        block(b, a) = v;
      }
      cross(a) = eval(spec, cross_lags_[offsets_[i] + a]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success) {
      bad_node.store(i, std::memory_order_relaxed);
      return;
    }
    const Eigen::VectorXd b = llt.solve(cross);
    const double f = sigma2 - b.dot(cross);
    if (!(f > 0.0)) {
      bad_node.store(i, std::memory_order_relaxed);
      return;
    }
    out.f[i] = f;
    std::copy(b.data(), b.data() + m, out.coeffs.begin() + offsets_[i]);
  });
  const int bad = bad_node.load();
  if (bad >= 0)
    throw std::runtime_error("factors: neighbor block not positive definite after jitter at node " +
                             std::to_string(bad));
}

SparseFactors factors(const NeighborGraph& graph, const ReferenceSet& ref, const KernelSpec& spec,
                      double period) {
  FactorWorkspace ws(ref, graph, period);
  SparseFactors out;
  ws.compute(spec, out);
  return out;
}

double log_density(const Eigen::VectorXd& w, const NeighborGraph& graph,
                   const SparseFactors& factors) {
  const int n = factors.size();
  if (w.size() != n) throw std::invalid_argument("log_density: w length mismatch");
  constexpr double log2pi = 1.8378770664093454836;
  double lp = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& set = graph.sets[i];
    const auto row = factors.row(i);
    double mean = 0.0;
    for (std::size_t a = 0; a < row.size(); ++a) mean += row[a] * w[set[a]];
    const double r = w[i] - mean;
    lp -= 0.5 * (log2pi + std::log(factors.f[i]) + r * r / factors.f[i]);
  }
  return lp;
}

}  // namespace qpgp
