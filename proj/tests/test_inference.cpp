#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "oracles.hpp"
#include "qpgp/inference.hpp"

using namespace qpgp;

namespace {

KernelSpec model7(double sigma2 = 1.0) {
  KernelSpec s;
  s.family = KernelFamily::model7_final;
  s.params = {22.32, 86.90, 0.674};
  s.sigma2 = sigma2;
  return s;
}

NeighborGraph full_conditioning(int n) {
  NeighborGraph g;
  g.sets.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) g.sets[i].push_back(j);
  return g;
}

ReferenceSet random_reference(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SpaceTimePoint> pts(n);
  for (auto& p : pts) {
    p.coord.x = rng.uniform(0.0, 40.0);
    p.coord.y = rng.uniform(0.0, 40.0);
    p.t = rng.uniform(0.0, 300.0);
  }
  return build_reference(pts);
}

FitData synthetic_data(const ReferenceSet& ref, std::uint64_t seed) {
  Rng rng(seed);
  const int n = ref.size();
  FitData data;
  data.X.resize(n, 2);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = 1.0;
    data.X(i, 1) = rng.normal();
    data.y[i] = 2.0 + 0.5 * data.X(i, 1) + 0.3 * rng.normal();
  }
  data.x_names = {"intercept", "x1"};
  return data;
}

ChainState basic_state(const FitData& data, const KernelSpec& spec) {
  ChainState s;
  s.beta = Eigen::VectorXd::Zero(data.X.cols());
  s.w = Eigen::VectorXd::Zero(data.y.size());
  s.tau2 = 0.5;
  s.sigma2 = spec.sigma2;
  s.kernel_params = free_params(spec);
  return s;
}

}  // namespace

TEST_CASE("log posterior is minus infinity outside the support") {
  const auto ref = random_reference(10, 1);
  const auto data = synthetic_data(ref, 2);
  const auto graph = full_conditioning(10);
  const FactorWorkspace ws(ref, graph);
  const auto spec = model7();
  const Priors priors;

  auto state = basic_state(data, spec);
  CHECK(std::isfinite(log_posterior(state, data, ws, spec, priors)));
  state.tau2 = 0.0;
  CHECK(log_posterior(state, data, ws, spec, priors) ==
        -std::numeric_limits<double>::infinity());
  state.tau2 = 0.5;
  state.kernel_params[2] = 2.5;  // alpha beyond (0, 2]
  CHECK(log_posterior(state, data, ws, spec, priors) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("log posterior equals the direct summation oracle at a zero fixture") {
  // two points, zero data, zero w
  std::vector<SpaceTimePoint> pts{{{0, 0}, 0.0}, {{5, 0}, 1.0}};
  const auto ref = build_reference(pts);
  FitData data;
  data.X = Eigen::MatrixXd::Ones(2, 1);
  data.y = Eigen::VectorXd::Zero(2);
  const auto graph = full_conditioning(2);
  const FactorWorkspace ws(ref, graph);
  const auto spec = model7();
  const Priors priors;
  auto state = basic_state(data, spec);

  const double got = log_posterior(state, data, ws, spec, priors);
  // likelihood at zero + process density at zero + full prior mass
  const double lik = 2.0 * (-0.5 * std::log(2.0 * std::numbers::pi * state.tau2));
  SparseFactors f;
  ws.compute(spec, f);
  const double proc = log_density(state.w, ws.graph(), f);
  const double prior = log_prior(state, spec, priors);
  CHECK(got == doctest::Approx(lik + proc + prior).epsilon(1e-12));
  CHECK(std::isfinite(got));
}

TEST_CASE("log posterior under full conditioning matches a dense oracle") {
  const int n = 100;
  const auto ref = random_reference(n, 3);
  const auto data = synthetic_data(ref, 4);
  const auto graph = full_conditioning(n);
  const FactorWorkspace ws(ref, graph);
  const auto spec = model7(1.4);
  const Priors priors;
  auto state = basic_state(data, spec);
  Rng rng(5);
  for (int i = 0; i < n; ++i) state.w[i] = 0.8 * rng.normal();
  state.beta << 1.0, 0.2;

  const double got = log_posterior(state, data, ws, spec, priors);
  double dense = log_prior(state, spec, priors);
  dense += oracles::dense_gaussian_logpdf(state.w, gram(spec, ref.points, 0.0).values);
  const Eigen::VectorXd mean = data.X * state.beta + state.w;
  for (int i = 0; i < n; ++i) {
    const double r = data.y[i] - mean[i];
    dense += -0.5 * (std::log(2.0 * std::numbers::pi * state.tau2) + r * r / state.tau2);
  }
  CHECK(std::abs(got - dense) / std::abs(dense) < 1e-6);
}

TEST_CASE("beta gibbs: zero residuals give a posterior centered at zero") {
  const auto ref = random_reference(40, 6);
  auto data = synthetic_data(ref, 7);
  data.X = Eigen::MatrixXd::Ones(40, 1);
  const Priors priors;
  ChainState state;
  state.beta = Eigen::VectorXd::Zero(1);
  state.w = data.y;  // w soaks up everything
  state.tau2 = 0.25;
  Rng rng(8);
  double mean = 0.0;
  const int m = 20000;
  for (int k = 0; k < m; ++k) {
    gibbs_beta(state, data, priors, rng);
    mean += state.beta[0];
  }
  mean /= m;
  const double sd = std::sqrt(1.0 / (40.0 / 0.25 + 1e-3));
  CHECK(std::abs(mean) < 4.0 * sd / std::sqrt(static_cast<double>(m)));
}

TEST_CASE("beta gibbs matches the conjugate closed form") {
  const auto ref = random_reference(60, 9);
  const auto data = synthetic_data(ref, 10);
  const Priors priors;
  ChainState state;
  state.beta = Eigen::VectorXd::Zero(2);
  state.w = Eigen::VectorXd::Constant(60, 0.3);
  state.tau2 = 0.7;

  Eigen::MatrixXd prec = data.X.transpose() * data.X / state.tau2;
  prec.diagonal().array() += 1.0 / priors.beta_variance;
  const Eigen::MatrixXd cov = prec.inverse();
  const Eigen::VectorXd mean = cov * (data.X.transpose() * (data.y - state.w) / state.tau2);

  Rng rng(11);
  const int m = 10000;
  Eigen::VectorXd emp = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(2, 2);
  for (int k = 0; k < m; ++k) {
    gibbs_beta(state, data, priors, rng);
    emp += state.beta;
    sq += state.beta * state.beta.transpose();
  }
  emp /= m;
  for (int j = 0; j < 2; ++j) {
    const double se = std::sqrt(cov(j, j) / m);
    CHECK(std::abs(emp[j] - mean[j]) < 3.0 * se);
  }
  const Eigen::MatrixXd emp_cov = sq / m - emp * emp.transpose();
  CHECK(emp_cov(0, 0) == doctest::Approx(cov(0, 0)).epsilon(0.1));
  CHECK(emp_cov(1, 1) == doctest::Approx(cov(1, 1)).epsilon(0.1));
}

TEST_CASE("tau2 gibbs matches the closed-form inverse gamma") {
  const Priors priors;
  SUBCASE("perfect fit keeps the prior rate") {
    const auto ref = random_reference(30, 12);
    auto data = synthetic_data(ref, 13);
    ChainState state;
    state.beta = Eigen::VectorXd::Zero(2);
    state.w = data.y;  // residuals are exactly zero
    const double a = priors.tau2_shape + 15.0, b = priors.tau2_rate;
    Rng rng(14);
    const int m = 10000;
    double mean = 0.0, mean2 = 0.0;
    for (int k = 0; k < m; ++k) {
      gibbs_tau2(state, data, priors, rng);
      mean += state.tau2;
      mean2 += state.tau2 * state.tau2;
    }
    mean /= m;
    const double closed_mean = b / (a - 1.0);
    const double closed_var = b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0));
    CHECK(std::abs(mean - closed_mean) < 3.0 * std::sqrt(closed_var / m));
    CHECK(mean2 / m - mean * mean == doctest::Approx(closed_var).epsilon(0.2));
  }
  SUBCASE("no data returns the prior") {
    FitData data;
    data.X.resize(0, 1);
    data.y.resize(0);
    ChainState state;
    state.beta = Eigen::VectorXd::Zero(1);
    state.w.resize(0);
    Rng rng(15);
    const int m = 20000;
    double mean = 0.0;
    for (int k = 0; k < m; ++k) {
      gibbs_tau2(state, data, priors, rng);
      mean += state.tau2;
    }
    mean /= m;
    // IG(2.1, 10) has mean 10/1.1; heavy tails, generous band
    CHECK(mean == doctest::Approx(10.0 / 1.1).epsilon(0.25));
  }
}

TEST_CASE("w update: scalar case matches the conjugate precision") {
  std::vector<SpaceTimePoint> pts{{{0, 0}, 0.0}};
  const auto ref = build_reference(pts);
  const auto graph = full_conditioning(1);
  const FactorWorkspace ws(ref, graph);
  const auto spec = model7(2.0);
  SparseFactors f;
  ws.compute(spec, f);

  FitData data;
  data.X = Eigen::MatrixXd::Ones(1, 1);
  data.y = Eigen::VectorXd::Constant(1, 3.0);
  ChainState state;
  state.beta = Eigen::VectorXd::Constant(1, 1.0);
  state.w = Eigen::VectorXd::Zero(1);
  state.tau2 = 0.5;

  const double prec = 1.0 / 0.5 + 1.0 / 2.0;
  const double mean = ((3.0 - 1.0) / 0.5) / prec;
  Rng rng(16);
  const int m = 40000;
  double emp = 0.0, emp2 = 0.0;
  for (int k = 0; k < m; ++k) {
    update_w(state, data, ws, f, rng);
    emp += state.w[0];
    emp2 += state.w[0] * state.w[0];
  }
  emp /= m;
  CHECK(std::abs(emp - mean) < 3.0 * std::sqrt(1.0 / prec / m));
  CHECK(emp2 / m - emp * emp == doctest::Approx(1.0 / prec).epsilon(0.05));
}

TEST_CASE("w update: tiny nugget pins w to the residuals") {
  const auto ref = random_reference(25, 17);
  const auto data = synthetic_data(ref, 18);
  const auto graph = build_neighbors(ref, NeighborSpec{});
  const FactorWorkspace ws(ref, graph);
  const auto spec = model7(1.0);
  SparseFactors f;
  ws.compute(spec, f);
  ChainState state;
  state.beta = Eigen::VectorXd::Zero(2);
  state.beta << 2.0, 0.5;
  state.w = Eigen::VectorXd::Zero(25);
  state.tau2 = 1e-12;
  Rng rng(19);
  update_w(state, data, ws, f, rng);
  const Eigen::VectorXd resid = data.y - data.X * state.beta;
  for (int i = 0; i < 25; ++i) CHECK(state.w[i] == doctest::Approx(resid[i]).epsilon(1e-4));
}

namespace {

// dense conjugate posterior of w given everything else
struct DensePosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

DensePosterior dense_w_posterior(const KernelSpec& spec, const ReferenceSet& ref,
                                 const FitData& data, const ChainState& state) {
  const Eigen::MatrixXd c = gram(spec, ref.points, 0.0).values;
  Eigen::MatrixXd post_prec = c.inverse();
  post_prec.diagonal().array() += 1.0 / state.tau2;
  DensePosterior out;
  out.cov = post_prec.inverse();
  out.mean = out.cov * (data.y - data.X * state.beta) / state.tau2;
  return out;
}

}  // namespace

TEST_CASE("w update targets the dense conjugate posterior: two-point exact check") {
  // two points, one a child of the other, so the child bookkeeping is live
  std::vector<SpaceTimePoint> pts{{{0, 0}, 0.0}, {{6.0, 0}, 1.0}};
  const auto ref = build_reference(pts);
  const auto graph = full_conditioning(2);
  const FactorWorkspace ws(ref, graph);
  const auto spec = model7(1.3);
  SparseFactors f;
  ws.compute(spec, f);

  FitData data;
  data.X = Eigen::MatrixXd::Ones(2, 1);
  data.y.resize(2);
  data.y << 2.4, -0.8;
  ChainState state;
  state.beta = Eigen::VectorXd::Constant(1, 0.3);
  state.w = Eigen::VectorXd::Zero(2);
  state.tau2 = 0.5;
  const auto dense = dense_w_posterior(spec, ref, data, state);

  Rng rng(22);
  const int sweeps = 200000;
  Eigen::VectorXd emp = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(2, 2);
  for (int k = 0; k < sweeps; ++k) {
    update_w(state, data, ws, f, rng);
    emp += state.w;
    sq += state.w * state.w.transpose();
  }
  emp /= sweeps;
  const Eigen::MatrixXd emp_cov = sq / sweeps - emp * emp.transpose();
  for (int i = 0; i < 2; ++i) {
    // serial correlation of the scan inflates naive MC error ~3x; stay generous
    CHECK(std::abs(emp[i] - dense.mean[i]) < 10.0 * std::sqrt(dense.cov(i, i) / sweeps));
    CHECK(emp_cov(i, i) == doctest::Approx(dense.cov(i, i)).epsilon(0.05));
  }
  CHECK(emp_cov(0, 1) == doctest::Approx(dense.cov(0, 1)).epsilon(0.10));
}

TEST_CASE("w update matches the dense conjugate posterior on a small instance") {
  const int n = 30;
  const auto ref = random_reference(n, 20);
  const auto data = synthetic_data(ref, 21);
  const auto graph = full_conditioning(n);
  const FactorWorkspace ws(ref, graph);
  // short ranges keep the scan well mixed so batch-means errors are honest
  KernelSpec spec = model7(1.3);
  spec.params = {6.0, 20.0, 0.674};
  SparseFactors f;
  ws.compute(spec, f);
  ChainState state;
  state.beta = Eigen::VectorXd::Zero(2);
  state.beta << 1.5, 0.4;
  state.w = Eigen::VectorXd::Zero(n);
  state.tau2 = 0.4;
  const auto dense = dense_w_posterior(spec, ref, data, state);

  Rng rng(22);
  const int sweeps = 10000, batch = 250;
  Eigen::VectorXd emp = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::VectorXd> batch_means;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  for (int k = 1; k <= sweeps; ++k) {
    update_w(state, data, ws, f, rng);
    emp += state.w;
    acc += state.w;
    if (k % batch == 0) {
      batch_means.push_back(acc / batch);
      acc.setZero();
    }
  }
  emp /= sweeps;
  for (int i = 0; i < n; i += 5) {
    double bm = 0.0, bv = 0.0;
    for (const auto& b : batch_means) bm += b[i];
    bm /= static_cast<double>(batch_means.size());
    for (const auto& b : batch_means) bv += (b[i] - bm) * (b[i] - bm);
    bv /= static_cast<double>(batch_means.size() - 1);
    const double mcse = std::sqrt(bv / static_cast<double>(batch_means.size()));
    CHECK(std::abs(emp[i] - dense.mean[i]) < 3.0 * std::max(mcse, 1e-3));
  }
}

TEST_CASE("metropolis step accepts identical proposals and adapts inside burn-in") {
  const auto ref = random_reference(20, 23);
  const auto data = synthetic_data(ref, 24);
  const auto graph = build_neighbors(ref, NeighborSpec{});
  const FactorWorkspace ws(ref, graph);
  const auto spec = model7(1.0);
  const Priors priors;
  auto state = basic_state(data, spec);
  SparseFactors f;
  ws.compute(spec_with_state(spec, state), f);

  MhTuning tuning;
  tuning.step = 0.0;  // proposal == current, ratio is one
  Rng rng(25);
  for (int k = 0; k < 20; ++k) CHECK(mh_covparams(state, data, ws, spec, priors, tuning, rng, f));

  MhTuning adapt_tuning;
  adapt_tuning.step = 0.4;
  adapt_tuning.adapt_interval = 10;
  const double step0 = adapt_tuning.step;
  for (int k = 0; k < 200; ++k)
    mh_covparams(state, data, ws, spec, priors, adapt_tuning, rng, f);
  CHECK(adapt_tuning.step != step0);
  CHECK(adapt_tuning.proposals == 200);
}

TEST_CASE("run_mcmc bookkeeping and determinism") {
  const auto ref = random_reference(30, 26);
  const auto data = synthetic_data(ref, 27);
  const auto graph = build_neighbors(ref, NeighborSpec{});
  const auto spec = model7(1.0);
  const Priors priors;
  McmcConfig config;
  config.iterations = 150;
  config.burn_in = 50;
  config.thin = 2;
  config.seed = 404;

  SUBCASE("zero retained draws when burn-in swallows everything") {
    McmcConfig all_burn = config;
    all_burn.iterations = all_burn.burn_in = 60;
    const auto draws = run_mcmc(data, ref, graph, spec, priors, all_burn);
    CHECK(draws.draw_count() == 0);
  }
  SUBCASE("retained count and reproducibility") {
    const auto d1 = run_mcmc(data, ref, graph, spec, priors, config);
    const auto d2 = run_mcmc(data, ref, graph, spec, priors, config);
    CHECK(d1.draw_count() == 50);
    CHECK(d1.params == d2.params);
    CHECK(d1.w == d2.w);
    CHECK(d1.names.size() == static_cast<std::size_t>(d1.params.cols()));
    CHECK(d1.column("tau2") == 2);
    CHECK(d1.column("sigma2") == 3);
    CHECK(d1.column("c_s") == 4);
    CHECK_THROWS_AS(d1.column("nope"), std::invalid_argument);
    CHECK(d1.mh_acceptance >= 0.0);
    CHECK(d1.mh_acceptance <= 1.0);
  }
  SUBCASE("a different seed moves the chain") {
    const auto d1 = run_mcmc(data, ref, graph, spec, priors, config);
    McmcConfig other = config;
    other.seed = 405;
    const auto d3 = run_mcmc(data, ref, graph, spec, priors, other);
    CHECK(d1.params != d3.params);
  }
  SUBCASE("initializing a bounded parameter on its bound stays finite") {
    McmcConfig pinned = config;
    pinned.init_kernel_params["alpha"] = 2.0;
    const auto d = run_mcmc(data, ref, graph, spec, priors, pinned);
    CHECK(d.params.allFinite());
  }
  SUBCASE("unknown init names are rejected") {
    McmcConfig bad = config;
    bad.init_kernel_params["zz"] = 1.0;
    CHECK_THROWS_AS(run_mcmc(data, ref, graph, spec, priors, bad), std::invalid_argument);
  }
}

TEST_CASE("mcmc config and priors parse from json") {
  const auto cfg = McmcConfig::from_json(nlohmann::json::parse(
      R"({"iterations": 200, "burn_in": 100, "thin": 2, "seed": 7,
          "init": {"sigma2": 1.5, "kernel_params": {"c_t": 40.0}}})"));
  CHECK(cfg.iterations == 200);
  CHECK(cfg.init_sigma2 == 1.5);
  CHECK(cfg.init_kernel_params.at("c_t") == 40.0);
  CHECK_THROWS_AS(McmcConfig::from_json(nlohmann::json::parse(R"({"iterations": 0})")),
                  std::invalid_argument);
  const auto p = Priors::from_json(nlohmann::json::parse(R"({"tau2_rate": 5.0})"));
  CHECK(p.tau2_rate == 5.0);
  CHECK(p.tau2_shape == 2.1);
  CHECK_THROWS_AS(Priors::from_json(nlohmann::json::parse(R"({"tau2_rate": -1})")),
                  std::invalid_argument);
}
