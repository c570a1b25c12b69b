#include "qpgp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qpgp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

double log_inv_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

double log_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace

void Priors::validate() const {
  for (double v : {tau2_shape, tau2_rate, sigma2_shape, sigma2_rate, positive_shape, positive_rate,
                   beta_variance})
    if (!(v > 0.0)) throw std::invalid_argument("priors: hyperparameters must be positive");
}

Priors Priors::from_json(const nlohmann::json& j) {
  Priors p;
  p.tau2_shape = j.value("tau2_shape", p.tau2_shape);
  p.tau2_rate = j.value("tau2_rate", p.tau2_rate);
  p.sigma2_shape = j.value("sigma2_shape", p.sigma2_shape);
  p.sigma2_rate = j.value("sigma2_rate", p.sigma2_rate);
  p.positive_shape = j.value("positive_shape", p.positive_shape);
  p.positive_rate = j.value("positive_rate", p.positive_rate);
  p.beta_variance = j.value("beta_variance", p.beta_variance);
  p.validate();
  return p;
}

void McmcConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("mcmc: iterations must be >= 1");
  if (burn_in < 0 || burn_in > iterations)
    throw std::invalid_argument("mcmc: burn_in must be in [0, iterations]");
  if (thin < 1) throw std::invalid_argument("mcmc: thin must be >= 1");
  if (adapt_interval < 1) throw std::invalid_argument("mcmc: adapt_interval must be >= 1");
  if (!(initial_step > 0.0)) throw std::invalid_argument("mcmc: initial_step must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("mcmc: target_accept must be in (0,1)");
}

McmcConfig McmcConfig::from_json(const nlohmann::json& j) {
  McmcConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.thin = j.value("thin", c.thin);
  c.seed = j.value("seed", c.seed);
  c.save_w = j.value("save_w", c.save_w);
  c.adapt_interval = j.value("adapt_interval", c.adapt_interval);
  c.target_accept = j.value("target_accept", c.target_accept);
  c.initial_step = j.value("initial_step", c.initial_step);
  if (j.contains("init")) {
    const auto& init = j.at("init");
    if (init.contains("tau2")) c.init_tau2 = init.at("tau2").get<double>();
    if (init.contains("sigma2")) c.init_sigma2 = init.at("sigma2").get<double>();
    if (init.contains("kernel_params"))
      for (const auto& item : init.at("kernel_params").items())
        c.init_kernel_params[item.key()] = item.value().get<double>();
  }
  c.validate();
  return c;
}

int PosteriorDraws::column(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("draws: no column named '" + name + "'");
}

KernelSpec spec_with_state(const KernelSpec& spec_template, const ChainState& state) {
  KernelSpec spec = spec_template;
  spec.sigma2 = state.sigma2;
  set_free_params(spec, state.kernel_params);
  return spec;
}

double log_prior(const ChainState& state, const KernelSpec& spec_template, const Priors& priors) {
  double lp = log_inv_gamma_pdf(state.tau2, priors.tau2_shape, priors.tau2_rate) +
              log_inv_gamma_pdf(state.sigma2, priors.sigma2_shape, priors.sigma2_rate);
  const auto infos = free_param_infos(spec_template);
  if (state.kernel_params.size() != infos.size())
    throw std::invalid_argument("log_prior: kernel parameter count mismatch");
  for (std::size_t k = 0; k < infos.size(); ++k) {
    const double v = state.kernel_params[k];
    if (std::isfinite(infos[k].upper)) {
      if (!(v > 0.0 && v <= infos[k].upper)) return kNegInf;
      lp -= std::log(infos[k].upper);
    } else {
      lp += log_gamma_pdf(v, priors.positive_shape, priors.positive_rate);
    }
  }
  for (int k = 0; k < state.beta.size(); ++k)
    lp += log_normal_pdf(state.beta[k], 0.0, priors.beta_variance);
  return lp;
}

double log_posterior(const ChainState& state, const FitData& data, const FactorWorkspace& ws,
                     const KernelSpec& spec_template, const Priors& priors) {
  if (!(state.tau2 > 0.0) || !(state.sigma2 > 0.0)) return kNegInf;
  KernelSpec spec = spec_with_state(spec_template, state);
  if (!spec.in_support()) return kNegInf;
  const double lp = log_prior(state, spec_template, priors);
  if (lp == kNegInf) return kNegInf;

  SparseFactors factors;
  try {
    ws.compute(spec, factors);
  } catch (const std::runtime_error&) {
    return kNegInf;  // numerically non-PD block: outside the usable support
  }
  double lik = 0.0;
  for (int i = 0; i < data.y.size(); ++i)
    lik += log_normal_pdf(data.y[i], data.X.row(i).dot(state.beta) + state.w[i], state.tau2);
  return lik + log_density(state.w, ws.graph(), factors) + lp;
}

void gibbs_beta(ChainState& state, const FitData& data, const Priors& priors, Rng& rng) {
  if (!(state.tau2 > 0.0)) throw std::invalid_argument("gibbs_beta: tau2 must be positive");
  const int p = static_cast<int>(data.X.cols());
  const Eigen::VectorXd resid = data.y - state.w;
  Eigen::MatrixXd prec = data.X.transpose() * data.X / state.tau2;
  prec.diagonal().array() += 1.0 / priors.beta_variance;
  const Eigen::LLT<Eigen::MatrixXd> llt(prec);
  const Eigen::VectorXd mean = llt.solve(data.X.transpose() * resid / state.tau2);
  Eigen::VectorXd z(p);
  for (int k = 0; k < p; ++k) z[k] = rng.normal();
  // beta = mean + L^{-T} z gives covariance prec^{-1}
  state.beta = mean + llt.matrixU().solve(z);
}

void gibbs_tau2(ChainState& state, const FitData& data, const Priors& priors, Rng& rng) {
  const int n = static_cast<int>(data.y.size());
  const double ss = (data.y - data.X * state.beta - state.w).squaredNorm();
  state.tau2 = rng.inv_gamma(priors.tau2_shape + 0.5 * n, priors.tau2_rate + 0.5 * ss);
}

void update_w(ChainState& state, const FitData& data, const FactorWorkspace& ws,
              const SparseFactors& factors, Rng& rng) {
  const int n = ws.size();
  if (state.w.size() != n) throw std::invalid_argument("update_w: w length mismatch");
  const auto& graph = ws.graph();

  // running parent means r_j = B_j w_{N(j)}, updated as w changes
  Eigen::VectorXd r(n);
  for (int j = 0; j < n; ++j) {
    const auto row = factors.row(j);
    const auto& set = graph.sets[j];
    double m = 0.0;
    for (std::size_t a = 0; a < row.size(); ++a) m += row[a] * state.w[set[a]];
    r[j] = m;
  }

  for (int i = 0; i < n; ++i) {
    double prec = 1.0 / state.tau2 + 1.0 / factors.f[i];
    double num = (data.y[i] - data.X.row(i).dot(state.beta)) / state.tau2 + r[i] / factors.f[i];
    for (const auto& [j, pos] : ws.children(i)) {
      const double b = factors.row(j)[pos];
      const double e = state.w[j] - (r[j] - b * state.w[i]);  // child residual less i's term
      prec += b * b / factors.f[j];
      num += b * e / factors.f[j];
    }
    const double new_w = num / prec + rng.normal() / std::sqrt(prec);
    const double delta = new_w - state.w[i];
    if (delta != 0.0)
      for (const auto& [j, pos] : ws.children(i)) r[j] += factors.row(j)[pos] * delta;
    state.w[i] = new_w;
  }
}

namespace {

// unconstrained coordinates: log for positive parameters, scaled logit for
// bounded ones; index 0 is sigma2
struct Transform {
  std::vector<double> upper;  // +inf -> log transform

  std::vector<double> to_z(const ChainState& s) const {
    std::vector<double> z(upper.size());
    z[0] = std::log(s.sigma2);
    for (std::size_t k = 1; k < upper.size(); ++k) {
      double v = s.kernel_params[k - 1];
      if (std::isfinite(upper[k])) {
        // keep the logit finite when a value sits on its bound
        v = std::clamp(v, upper[k] * 1e-12, upper[k] * (1.0 - 1e-12));
        z[k] = std::log(v / (upper[k] - v));
      } else {
        z[k] = std::log(v);
      }
    }
    return z;
  }

  void from_z(const std::vector<double>& z, ChainState& s) const {
    s.sigma2 = std::exp(z[0]);
    for (std::size_t k = 1; k < upper.size(); ++k) {
      if (std::isfinite(upper[k])) {
        const double sig = 1.0 / (1.0 + std::exp(-z[k]));
        s.kernel_params[k - 1] = upper[k] * sig;
      } else {
        s.kernel_params[k - 1] = std::exp(z[k]);
      }
    }
  }

  // log |d param / d z|, summed
  double log_jacobian(const ChainState& s) const {
    double lj = std::log(s.sigma2);
    for (std::size_t k = 1; k < upper.size(); ++k) {
      const double v = s.kernel_params[k - 1];
      lj += std::isfinite(upper[k]) ? std::log(v * (upper[k] - v) / upper[k]) : std::log(v);
    }
    return lj;
  }
};

Transform make_transform(const KernelSpec& spec_template) {
  Transform t;
  const auto infos = free_param_infos(spec_template);
  t.upper.resize(infos.size() + 1);
  t.upper[0] = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < infos.size(); ++k) t.upper[k + 1] = infos[k].upper;
  return t;
}

// the pieces of the posterior that move with (sigma2, kernel params)
double cov_target(const ChainState& state, const FactorWorkspace& ws,
                  const KernelSpec& spec_template, const Priors& priors,
                  const SparseFactors& factors) {
  double lp = log_inv_gamma_pdf(state.sigma2, priors.sigma2_shape, priors.sigma2_rate);
  const auto infos = free_param_infos(spec_template);
  for (std::size_t k = 0; k < infos.size(); ++k) {
    const double v = state.kernel_params[k];
    lp += std::isfinite(infos[k].upper) ? -std::log(infos[k].upper)
                                        : log_gamma_pdf(v, priors.positive_shape,
                                                        priors.positive_rate);
  }
  return log_density(state.w, ws.graph(), factors) + lp;
}

void adapt(MhTuning& tuning, bool accepted) {
  ++tuning.proposals;
  if (accepted) ++tuning.accepts;
  if (!tuning.adapting) return;
  ++tuning.batch_n;
  if (accepted) ++tuning.batch_accepts;
  if (tuning.batch_n >= tuning.adapt_interval) {
    const double rate = static_cast<double>(tuning.batch_accepts) / tuning.batch_n;
    const double delta = std::min(0.05, 1.0 / std::sqrt(static_cast<double>(++tuning.batches)));
    tuning.step *= std::exp(rate > tuning.target_accept ? delta : -delta);
    tuning.batch_n = 0;
    tuning.batch_accepts = 0;
  }
}

}  // namespace

bool mh_covparams(ChainState& state, const FitData& data, const FactorWorkspace& ws,
                  const KernelSpec& spec_template, const Priors& priors, MhTuning& tuning,
                  Rng& rng, SparseFactors& factors_cur) {
  (void)data;  // the Gaussian likelihood of y does not involve these blocks
  const Transform tr = make_transform(spec_template);
  const double cur_target = cov_target(state, ws, spec_template, priors, factors_cur);
  const double cur_lj = tr.log_jacobian(state);

  std::vector<double> z = tr.to_z(state);
  for (auto& zk : z) zk += tuning.step * rng.normal();
  ChainState prop = state;
  tr.from_z(z, prop);
  const double log_u = std::log(1.0 - rng.uniform());

  KernelSpec prop_spec = spec_template;
  prop_spec.sigma2 = prop.sigma2;
  set_free_params(prop_spec, prop.kernel_params);
  if (!prop_spec.in_support()) {
    adapt(tuning, false);
    return false;
  }
  SparseFactors prop_factors;
  try {
    ws.compute(prop_spec, prop_factors);
  } catch (const std::runtime_error&) {
    adapt(tuning, false);  // numerically non-PD proposal
    return false;
  }
  const double prop_target = cov_target(prop, ws, spec_template, priors, prop_factors);
  const double log_ratio = (prop_target + tr.log_jacobian(prop)) - (cur_target + cur_lj);
  const bool accepted = log_u < log_ratio;
  if (accepted) {
    state.sigma2 = prop.sigma2;
    state.kernel_params = prop.kernel_params;
    factors_cur = std::move(prop_factors);
  }
  adapt(tuning, accepted);
  return accepted;
}

namespace {

double spatial_scale_hint(const ReferenceSet& ref) {
  const int n = std::min(ref.size(), 150);
  std::vector<double> d;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) {
      const double v = spatial_distance(ref.points[i].coord, ref.points[j].coord);
      if (v > 0.0) d.push_back(v);
    }
  if (d.empty()) return 10.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

ChainState initial_state(const FitData& data, const ReferenceSet& ref,
                         const KernelSpec& spec_template, const McmcConfig& config,
                         double period) {
  ChainState state;
  const int n = static_cast<int>(data.y.size());
  Eigen::MatrixXd xtx = data.X.transpose() * data.X;
  xtx.diagonal().array() += 1e-8;
  state.beta = xtx.llt().solve(data.X.transpose() * data.y);
  const Eigen::VectorXd resid = data.y - data.X * state.beta;
  const double v = resid.squaredNorm() / std::max(n, 1);
  state.tau2 = config.init_tau2.value_or(std::max(0.1 * v, 1e-6));
  state.sigma2 = config.init_sigma2.value_or(std::max(0.9 * v, 1e-6));
  state.w = resid;

  const auto infos = free_param_infos(spec_template);
  const auto names = free_param_names(spec_template);
  state.kernel_params.resize(infos.size());
  const double spatial_hint = spatial_scale_hint(ref);
  for (std::size_t k = 0; k < infos.size(); ++k) {
    double v0;
    if (std::isfinite(infos[k].upper)) {
      v0 = 0.5 * infos[k].upper;
    } else if (names[k].ends_with("c_s")) {
      v0 = spatial_hint;
    } else if (names[k].ends_with("c_t")) {
      v0 = period;
    } else {
      v0 = 1.0;
    }
    if (auto it = config.init_kernel_params.find(names[k]); it != config.init_kernel_params.end())
      v0 = it->second;
    state.kernel_params[k] = v0;
  }
  for (const auto& [name, value] : config.init_kernel_params) {
    (void)value;
    if (std::find(names.begin(), names.end(), name) == names.end())
      throw std::invalid_argument("mcmc init: unknown kernel parameter '" + name + "'");
  }
  return state;
}

std::string state_dump(const ChainState& state, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "tau2=" << state.tau2 << " sigma2=" << state.sigma2;
  for (std::size_t k = 0; k < names.size(); ++k)
    os << " " << names[k] << "=" << state.kernel_params[k];
  return os.str();
}

}  // namespace

PosteriorDraws run_mcmc(const FitData& data, const ReferenceSet& ref, const NeighborGraph& graph,
                        const KernelSpec& spec_template, const Priors& priors,
                        const McmcConfig& config, double period) {
  config.validate();
  priors.validate();
  spec_template.validate();
  const int n = ref.size();
  if (data.y.size() != n || data.X.rows() != n)
    throw std::invalid_argument("run_mcmc: data rows must match the reference set");

  const FactorWorkspace ws(ref, graph, period);
  ChainState state = initial_state(data, ref, spec_template, config, period);
  const auto param_names = free_param_names(spec_template);

  SparseFactors factors_cur;
  try {
    ws.compute(spec_with_state(spec_template, state), factors_cur);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string("run_mcmc: initial factors failed: ") + e.what() +
                             " [state " + state_dump(state, param_names) + "]");
  }

  MhTuning tuning;
  tuning.step = config.initial_step;
  tuning.adapt_interval = config.adapt_interval;
  tuning.target_accept = config.target_accept;

  Rng rng(config.seed);
  const long retained = (config.iterations - config.burn_in) / config.thin;
  const int p = static_cast<int>(data.X.cols());
  const int ncol = p + 2 + static_cast<int>(param_names.size());

  PosteriorDraws draws;
  draws.iterations = config.iterations;
  draws.burn_in = config.burn_in;
  draws.thin = config.thin;
  draws.seed = config.seed;
  for (int k = 0; k < p; ++k)
    draws.names.push_back(data.x_names.empty() ? "beta" + std::to_string(k)
                                               : "beta_" + data.x_names[k]);
  draws.names.push_back("tau2");
  draws.names.push_back("sigma2");
  for (const auto& name : param_names) draws.names.push_back(name);
  draws.params.resize(retained, ncol);
  if (config.save_w) draws.w.resize(retained, n);

  long row = 0;
  for (long it = 1; it <= config.iterations; ++it) {
    gibbs_beta(state, data, priors, rng);
    update_w(state, data, ws, factors_cur, rng);
    gibbs_tau2(state, data, priors, rng);
    mh_covparams(state, data, ws, spec_template, priors, tuning, rng, factors_cur);
    if (it == config.burn_in) tuning.adapting = false;  // freeze adaptation
    if (it > config.burn_in && (it - config.burn_in) % config.thin == 0 && row < retained) {
      int c = 0;
      for (int k = 0; k < p; ++k) draws.params(row, c++) = state.beta[k];
      draws.params(row, c++) = state.tau2;
      draws.params(row, c++) = state.sigma2;
      for (double v : state.kernel_params) draws.params(row, c++) = v;
      if (config.save_w) draws.w.row(row) = state.w.transpose();
      ++row;
    }
  }
  draws.mh_acceptance =
      tuning.proposals > 0 ? static_cast<double>(tuning.accepts) / tuning.proposals : 0.0;
  return draws;
}

}  // namespace qpgp
