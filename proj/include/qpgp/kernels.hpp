#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qpgp/geometry.hpp"
#include "qpgp/rng.hpp"
#include "qpgp/types.hpp"

namespace qpgp {

/// Covariance catalog. Families over (h, theta, u) = (km, clock angle,
/// hours); each is a correlation function scaled by sigma2.
enum class KernelFamily {
  matern_time,
  matern_circle,
  matern_space,
  circ_pow_exp,
  circ_cauchy,
  inv_gneiting_exp,
  inv_gneiting_cauchy,
  white_exp,
  white_cauchy,
  sinh_series,
  cos_exp_cauchy,
  cos_exp_powexp,
  gneiting_space_time_cauchy,
  shirota_space_circle,
  model1_separable,
  model7_final,
  product,
};

const char* family_name(KernelFamily family);
KernelFamily family_from_name(std::string_view name);

/// Which lag slots a family reads. Product members must be disjoint.
enum LagMask : unsigned { kUsesH = 1u, kUsesTheta = 2u, kUsesU = 4u };
unsigned family_lag_mask(KernelFamily family);

/// Declared parameter of a family. `upper` is +inf for purely positive
/// parameters; finite upper bounds mean the half-open interval (0, upper].
struct ParamInfo {
  const char* name;
  double upper;
};

std::span<const ParamInfo> family_params(KernelFamily family);

struct KernelSpec {
  KernelFamily family = KernelFamily::model7_final;
  std::vector<double> params;        // ordered per family_params(family)
  double sigma2 = 1.0;
  std::vector<KernelSpec> components;  // product only

  double param(std::string_view name) const;

  /// Enforces per-family bounds; throws std::invalid_argument.
  void validate() const;

  /// True iff every parameter (recursively) lies inside its bounds and
  /// sigma2 > 0; never throws. Used to reject MCMC proposals.
  bool in_support() const;

  static KernelSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Flattened view of all sampleable kernel parameters (recurses into
/// product components; excludes sigma2). Names of nested parameters are
/// prefixed "k<i>.".
std::vector<std::string> free_param_names(const KernelSpec& spec);
std::vector<ParamInfo> free_param_infos(const KernelSpec& spec);
std::vector<double> free_params(const KernelSpec& spec);
void set_free_params(KernelSpec& spec, std::span<const double> values);

/// Matern correlation 2^{1-nu}/Gamma(nu) (t/alpha)^nu K_nu(t/alpha) with the
/// limit value 1 at t = 0.
double matern(double t, double alpha, double nu);

/// Closed form of the circle-cross-time class built from the expansion
/// sum_k rho^k cos(k theta)/k!: exp(rho cos theta - 1) cos(rho sin theta).
/// Requires |rho| <= 1.
double circle_profile_exp(double theta, double rho);

/// Closed form of the series sum_{k>=0} cos(k theta)/(k^2 + gamma):
/// 1/(2 gamma) + pi/(2 sqrt(gamma)) cosh(sqrt(gamma)(pi - theta))/
/// sinh(sqrt(gamma) pi), evaluated in the log domain once the hyperbolic
/// arguments get large.
double circle_profile_series(double theta, double gamma);

/// sigma2 * family correlation at the given lag. Lags must satisfy
/// h >= 0, theta in [0, pi], u >= 0.
double eval(const KernelSpec& spec, const LagTriple& lag);

/// Truncated expansion e^{-1} sum_{k=0}^{terms} rho^k cos(k theta)/k!.
/// Defines the class circle_profile_exp implements; |rho| <= 1.
double series_oracle_II(double theta, double rho, int terms);

/// Truncated expansion sum_{k=0}^{terms} cos(k theta)/(k^2 + gamma).
/// Defines the class circle_profile_series implements; tail decays like
/// 1/terms near theta = 0.
double series_oracle_I(double theta, double gamma, long terms);

struct GramMatrix {
  Eigen::MatrixXd values;
};

/// Pairwise covariances with nugget tau2 added to the diagonal.
GramMatrix gram(const KernelSpec& spec, std::span<const SpaceTimePoint> points, double nugget,
                double period = kDefaultPeriodHours);

struct PsdReport {
  std::string label;
  int n_designs = 0;
  int n_failures = 0;              // designs with rel. min eigenvalue < -1e-8
  double worst_rel_min_eig = 0.0;  // most negative min/max eigenvalue ratio
  bool passed() const { return n_failures == 0; }
};

inline constexpr double kPsdRelTol = -1e-8;

/// Draws a spec of the same shape with fresh valid parameters; scales are
/// drawn log-uniform over ranges matched to the 60 km x 61 day design box.
KernelSpec randomize_params(const KernelSpec& spec, Rng& rng);

/// Eigenvalue sweep: random designs in a 60 km x 61 day box, random valid
/// parameters per design, worst relative min eigenvalue recorded. Failures
/// are report entries, not errors.
PsdReport validate_psd(const KernelSpec& spec, int n_designs, int n_points, std::uint64_t seed);

/// Same sweep for an arbitrary covariance callable (fixed function, no
/// parameter redraws); lets tests run deliberately broken kernels.
template <class Fn>
PsdReport validate_psd_fn(Fn&& k, const std::string& label, int n_designs, int n_points,
                          std::uint64_t seed);

namespace detail {
std::vector<SpaceTimePoint> random_design(int n_points, Rng& rng);
double rel_min_eig(const Eigen::MatrixXd& m);
}  // namespace detail

template <class Fn>
PsdReport validate_psd_fn(Fn&& k, const std::string& label, int n_designs, int n_points,
                          std::uint64_t seed) {
  if (n_designs < 1 || n_points < 1)
    throw std::invalid_argument("validate_psd: counts must be >= 1");
  Rng root(seed);
  PsdReport report;
  report.label = label;
  report.n_designs = n_designs;
  for (int d = 0; d < n_designs; ++d) {
    Rng rng = root.substream(static_cast<std::uint64_t>(d));
    const auto pts = detail::random_design(n_points, rng);
    Eigen::MatrixXd m(n_points, n_points);
    for (int i = 0; i < n_points; ++i)
      for (int j = 0; j <= i; ++j) {
        const double v = k(lag_triple(pts[i], pts[j]));
        m(i, j) = v;
        m(j, i) = v;
      }
    const double rel = detail::rel_min_eig(m);
    report.worst_rel_min_eig = std::min(report.worst_rel_min_eig, rel);
    if (rel < kPsdRelTol) ++report.n_failures;
  }
  return report;
}

}  // namespace qpgp
