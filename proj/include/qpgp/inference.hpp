#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qpgp/kernels.hpp"
#include "qpgp/nngp.hpp"
#include "qpgp/rng.hpp"

namespace qpgp {

/// Prior catalog: inverse-gamma on the variances, diffuse gamma on positive
/// covariance parameters, uniform on bounded ones, N(0, beta_variance) on
/// regression coefficients.
struct Priors {
  double tau2_shape = 2.1;
  double tau2_rate = 10.0;
  double sigma2_shape = 2.1;
  double sigma2_rate = 10.0;
  double positive_shape = 0.01;
  double positive_rate = 0.01;
  double beta_variance = 1e3;

  void validate() const;
  static Priors from_json(const nlohmann::json& j);
};

/// Rows follow the reference ordering.
struct FitData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> x_names;
};

struct ChainState {
  Eigen::VectorXd beta;
  Eigen::VectorXd w;
  double tau2 = 1.0;
  double sigma2 = 1.0;
  std::vector<double> kernel_params;  // aligned with free_param_names(spec)
};

/// Template spec with the state's sigma2 and kernel parameters written in.
KernelSpec spec_with_state(const KernelSpec& spec_template, const ChainState& state);

struct McmcConfig {
  long iterations = 30000;
  long burn_in = 5000;
  int thin = 1;
  std::uint64_t seed = 1;
  bool save_w = true;
  int adapt_interval = 50;
  double target_accept = 0.23;
  double initial_step = 0.15;
  std::optional<double> init_tau2;
  std::optional<double> init_sigma2;
  std::map<std::string, double> init_kernel_params;  // keyed by free-param name

  void validate() const;
  static McmcConfig from_json(const nlohmann::json& j);
};

struct PosteriorDraws {
  std::vector<std::string> names;  // parameter column names
  Eigen::MatrixXd params;          // retained draws x names
  Eigen::MatrixXd w;               // retained draws x n, 0x0 unless saved
  long iterations = 0;
  long burn_in = 0;
  int thin = 1;
  std::uint64_t seed = 0;
  double mh_acceptance = 0.0;

  int draw_count() const { return static_cast<int>(params.rows()); }
  int column(const std::string& name) const;  // throws on unknown name
};

/// Log prior density of everything but w (which belongs to the process term).
double log_prior(const ChainState& state, const KernelSpec& spec_template, const Priors& priors);

/// Gaussian likelihood + sparse process density + priors. Returns -inf
/// outside the prior support instead of throwing.
double log_posterior(const ChainState& state, const FitData& data, const FactorWorkspace& ws,
                     const KernelSpec& spec_template, const Priors& priors);

/// Conjugate draw of beta given w and tau2 (normal prior, normal likelihood).
void gibbs_beta(ChainState& state, const FitData& data, const Priors& priors, Rng& rng);

/// Conjugate inverse-gamma draw of tau2 given beta and w.
void gibbs_tau2(ChainState& state, const FitData& data, const Priors& priors, Rng& rng);

/// Sequential draw of each w_i from its Gaussian full conditional (parents,
/// children, and the observation at i).
void update_w(ChainState& state, const FitData& data, const FactorWorkspace& ws,
              const SparseFactors& factors, Rng& rng);

struct MhTuning {
  double step = 0.15;
  int adapt_interval = 50;
  double target_accept = 0.23;
  bool adapting = true;
  long proposals = 0;
  long accepts = 0;
  int batch_n = 0;
  int batch_accepts = 0;
  int batches = 0;
};

/// Joint random-walk Metropolis step on (log sigma2, transformed kernel
/// parameters). `factors_cur` must match the incoming state and is replaced
/// on acceptance. Returns whether the proposal was accepted.
bool mh_covparams(ChainState& state, const FitData& data, const FactorWorkspace& ws,
                  const KernelSpec& spec_template, const Priors& priors, MhTuning& tuning,
                  Rng& rng, SparseFactors& factors_cur);

/// Metropolis-within-Gibbs cycle: beta, w, tau2, then covariance parameters
/// (sigma2 rides in the MH block). Reproducible given the seed.
PosteriorDraws run_mcmc(const FitData& data, const ReferenceSet& ref, const NeighborGraph& graph,
                        const KernelSpec& spec_template, const Priors& priors,
                        const McmcConfig& config, double period = kDefaultPeriodHours);

}  // namespace qpgp
