#include "qpgp/kernels.hpp"

#include <array>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "qpgp/rng.hpp"

namespace qpgp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

struct FamilyInfo {
  KernelFamily family;
  const char* name;
  unsigned mask;
  std::span<const ParamInfo> params;
};

// Parameter tables. Scales/ranges (c_s km, c_t hours, c_p radians) and the
// exponents delta, lambda, nu are positive; smoothness exponents carry the
// bound their class requires: alpha in (0,2] on the linear-time slot, and
// (0,1] wherever the slot lives on the circle. nu on the circle is capped
// at 1/2.
constexpr std::array<ParamInfo, 2> kMaternTime{{{"c_t", kInf}, {"nu", kInf}}};
constexpr std::array<ParamInfo, 2> kMaternCircle{{{"c_p", kInf}, {"nu", 0.5}}};
constexpr std::array<ParamInfo, 2> kMaternSpace{{{"c_s", kInf}, {"nu", kInf}}};
constexpr std::array<ParamInfo, 2> kCircPowExp{{{"c_p", kInf}, {"alpha", 1.0}}};
constexpr std::array<ParamInfo, 3> kCircCauchy{{{"c_p", kInf}, {"alpha", 1.0}, {"lambda", kInf}}};
constexpr std::array<ParamInfo, 6> kInvGneitingExp{
    {{"c_p", kInf}, {"c_t", kInf}, {"alpha", 1.0}, {"beta", 1.0}, {"gamma", 1.0}, {"delta", kInf}}};
constexpr std::array<ParamInfo, 7> kInvGneitingCauchy{{{"c_p", kInf},
                                                       {"c_t", kInf},
                                                       {"alpha", 1.0},
                                                       {"beta", 1.0},
                                                       {"gamma", 1.0},
                                                       {"delta", kInf},
                                                       {"lambda", kInf}}};
constexpr std::array<ParamInfo, 6> kWhiteExp{
    {{"c_p", kInf}, {"c_t", kInf}, {"alpha", 2.0}, {"beta", 1.0}, {"gamma", 1.0}, {"delta", kInf}}};
constexpr std::array<ParamInfo, 7> kWhiteCauchy{{{"c_p", kInf},
                                                 {"c_t", kInf},
                                                 {"alpha", 2.0},
                                                 {"beta", 1.0},
                                                 {"gamma", 1.0},
                                                 {"delta", kInf},
                                                 {"lambda", kInf}}};
constexpr std::array<ParamInfo, 3> kSinhSeries{{{"c_t", kInf}, {"alpha", 2.0}, {"beta", 1.0}}};
constexpr std::array<ParamInfo, 3> kCosExpCauchy{{{"c_t", kInf}, {"alpha", 2.0}, {"lambda", kInf}}};
constexpr std::array<ParamInfo, 2> kCosExpPowExp{{{"c_t", kInf}, {"alpha", 2.0}}};
constexpr std::array<ParamInfo, 7> kGneitingSpaceTime{{{"c_s", kInf},
                                                       {"c_t", kInf},
                                                       {"alpha", 2.0},
                                                       {"beta", 1.0},
                                                       {"gamma", 1.0},
                                                       {"delta", kInf},
                                                       {"lambda", kInf}}};
constexpr std::array<ParamInfo, 7> kShirota{{{"c_s", kInf},
                                             {"c_p", kInf},
                                             {"alpha", 1.0},
                                             {"beta", 1.0},
                                             {"gamma", 1.0},
                                             {"delta", kInf},
                                             {"lambda", kInf}}};
constexpr std::array<ParamInfo, 3> kModel1{{{"c_s", kInf}, {"c_p", kInf}, {"c_t", kInf}}};
constexpr std::array<ParamInfo, 3> kModel7{{{"c_s", kInf}, {"c_t", kInf}, {"alpha", 2.0}}};

const std::array<FamilyInfo, 17>& families() {
  static const std::array<FamilyInfo, 17> table{{
      {KernelFamily::matern_time, "matern_time", kUsesU, kMaternTime},
      {KernelFamily::matern_circle, "matern_circle", kUsesTheta, kMaternCircle},
      {KernelFamily::matern_space, "matern_space", kUsesH, kMaternSpace},
      {KernelFamily::circ_pow_exp, "circ_pow_exp", kUsesTheta, kCircPowExp},
      {KernelFamily::circ_cauchy, "circ_cauchy", kUsesTheta, kCircCauchy},
      {KernelFamily::inv_gneiting_exp, "inv_gneiting_exp", kUsesTheta | kUsesU, kInvGneitingExp},
      {KernelFamily::inv_gneiting_cauchy, "inv_gneiting_cauchy", kUsesTheta | kUsesU,
       kInvGneitingCauchy},
      {KernelFamily::white_exp, "white_exp", kUsesTheta | kUsesU, kWhiteExp},
      {KernelFamily::white_cauchy, "white_cauchy", kUsesTheta | kUsesU, kWhiteCauchy},
      {KernelFamily::sinh_series, "sinh_series", kUsesTheta | kUsesU, kSinhSeries},
      {KernelFamily::cos_exp_cauchy, "cos_exp_cauchy", kUsesTheta | kUsesU, kCosExpCauchy},
      {KernelFamily::cos_exp_powexp, "cos_exp_powexp", kUsesTheta | kUsesU, kCosExpPowExp},
      {KernelFamily::gneiting_space_time_cauchy, "gneiting_space_time_cauchy", kUsesH | kUsesU,
       kGneitingSpaceTime},
      {KernelFamily::shirota_space_circle, "shirota_space_circle", kUsesH | kUsesTheta, kShirota},
      {KernelFamily::model1_separable, "model1_separable", kUsesH | kUsesTheta | kUsesU, kModel1},
      {KernelFamily::model7_final, "model7_final", kUsesH | kUsesTheta | kUsesU, kModel7},
      {KernelFamily::product, "product", 0u, {}},
  }};
  return table;
}

const FamilyInfo& info(KernelFamily family) {
  for (const auto& f : families())
    if (f.family == family) return f;
  throw std::logic_error("unknown kernel family");
}

}  // namespace

const char* family_name(KernelFamily family) { return info(family).name; }

KernelFamily family_from_name(std::string_view name) {
  for (const auto& f : families())
    if (name == f.name) return f.family;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

unsigned family_lag_mask(KernelFamily family) {
  if (family != KernelFamily::product) return info(family).mask;
  return 0u;
}

std::span<const ParamInfo> family_params(KernelFamily family) { return info(family).params; }

double KernelSpec::param(std::string_view name) const {
  const auto table = family_params(family);
  for (std::size_t i = 0; i < table.size(); ++i)
    if (name == table[i].name) return params.at(i);
  throw std::invalid_argument(std::string("kernel '") + family_name(family) +
                              "' has no parameter '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2))
    throw std::invalid_argument("kernel: sigma2 must be finite and >= 0");
  if (family == KernelFamily::product) {
    if (components.size() < 2)
      throw std::invalid_argument("product kernel needs at least two components");
    unsigned seen = 0;
    for (const auto& c : components) {
      c.validate();
      if (c.family == KernelFamily::product)
        throw std::invalid_argument("product kernels do not nest");
      if (c.sigma2 != 1.0)
        throw std::invalid_argument("product components must have sigma2 = 1");
      const unsigned mask = family_lag_mask(c.family);
      if (seen & mask)
        throw std::invalid_argument("product components must use disjoint lag arguments");
      seen |= mask;
    }
    if (!params.empty()) throw std::invalid_argument("product kernel takes no direct parameters");
    return;
  }
  const auto table = family_params(family);
  if (params.size() != table.size())
    throw std::invalid_argument(std::string("kernel '") + family_name(family) + "' expects " +
                                std::to_string(table.size()) + " parameters, got " +
                                std::to_string(params.size()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double v = params[i];
    if (!std::isfinite(v) || !(v > 0.0) || v > table[i].upper)
      throw std::invalid_argument(std::string("kernel '") + family_name(family) + "': parameter " +
                                  table[i].name + " out of bounds");
  }
}

bool KernelSpec::in_support() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) return false;
  if (family == KernelFamily::product) {
    for (const auto& c : components)
      if (!c.in_support()) return false;
    return true;
  }
  const auto table = family_params(family);
  if (params.size() != table.size()) return false;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double v = params[i];
    if (!std::isfinite(v) || !(v > 0.0) || v > table[i].upper) return false;
  }
  return true;
}

namespace {

void collect_free(const KernelSpec& spec, const std::string& prefix,
                  std::vector<std::string>* names, std::vector<ParamInfo>* infos,
                  std::vector<double>* values) {
  if (spec.family == KernelFamily::product) {
    for (std::size_t i = 0; i < spec.components.size(); ++i)
      collect_free(spec.components[i], prefix + "k" + std::to_string(i) + ".", names, infos,
                   values);
    return;
  }
  const auto table = family_params(spec.family);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (names) names->push_back(prefix + table[i].name);
    if (infos) infos->push_back(table[i]);
    if (values) values->push_back(spec.params[i]);
  }
}

std::size_t assign_free(KernelSpec& spec, std::span<const double> values, std::size_t at) {
  if (spec.family == KernelFamily::product) {
    for (auto& c : spec.components) at = assign_free(c, values, at);
    return at;
  }
  for (auto& p : spec.params) {
    if (at >= values.size()) throw std::invalid_argument("set_free_params: too few values");
    p = values[at++];
  }
  return at;
}

}  // namespace

std::vector<std::string> free_param_names(const KernelSpec& spec) {
  std::vector<std::string> names;
  collect_free(spec, "", &names, nullptr, nullptr);
  return names;
}

std::vector<ParamInfo> free_param_infos(const KernelSpec& spec) {
  std::vector<ParamInfo> infos;
  collect_free(spec, "", nullptr, &infos, nullptr);
  return infos;
}

std::vector<double> free_params(const KernelSpec& spec) {
  std::vector<double> values;
  collect_free(spec, "", nullptr, nullptr, &values);
  return values;
}

void set_free_params(KernelSpec& spec, std::span<const double> values) {
  const std::size_t used = assign_free(spec, values, 0);
  if (used != values.size()) throw std::invalid_argument("set_free_params: too many values");
}

double matern(double t, double alpha, double nu) {
  if (!(alpha > 0.0) || !(nu > 0.0))
    throw std::invalid_argument("matern: alpha and nu must be positive");
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("matern: lag must be >= 0");
  const double x = t / alpha;
  if (x < 1e-10) return 1.0;  // Bessel form is 0/0 at the origin
  if (nu == 0.5) return std::exp(-x);
  if (nu == 1.5) return (1.0 + x) * std::exp(-x);
  if (nu == 2.5) return (1.0 + x + x * x / 3.0) * std::exp(-x);
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
}

double circle_profile_exp(double theta, double rho) {
  if (!(std::abs(rho) <= 1.0))
    throw std::invalid_argument("circle_profile_exp: requires |rho| <= 1");
  return std::exp(rho * std::cos(theta) - 1.0) * std::cos(rho * std::sin(theta));
}

double circle_profile_series(double theta, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("circle_profile_series: gamma must be positive");
  const double a = std::sqrt(gamma);
  const double x = a * (kPi - theta);
  const double y = a * kPi;
  double ratio;
  if (y > 30.0) {
    // cosh(x)/sinh(y) = e^{x-y} (1 + e^{-2x}) / (1 - e^{-2y}); overflow-free
    ratio = std::exp(x - y) * (1.0 + std::exp(-2.0 * x)) / (1.0 - std::exp(-2.0 * y));
  } else {
    ratio = std::cosh(x) / std::sinh(y);
  }
  return 0.5 / gamma + 0.5 * kPi / a * ratio;
}

namespace {

double family_corr(const KernelSpec& s, const LagTriple& lag) {
  const double h = lag.h;
  const double th = lag.theta;
  const double u = lag.u;
  switch (s.family) {
    case KernelFamily::matern_time:
      return matern(u, s.params[0], s.params[1]);
    case KernelFamily::matern_circle:
      return matern(th, s.params[0], s.params[1]);
    case KernelFamily::matern_space:
      return matern(h, s.params[0], s.params[1]);
    case KernelFamily::circ_pow_exp:
      return std::exp(-std::pow(th / s.params[0], s.params[1]));
    case KernelFamily::circ_cauchy:
      return std::pow(1.0 + std::pow(th / s.params[0], s.params[1]), -s.params[2]);
    case KernelFamily::inv_gneiting_exp: {
      const double c_p = s.params[0], c_t = s.params[1], alpha = s.params[2], beta = s.params[3],
                   gam = s.params[4], delta = s.params[5];
      const double psi = 1.0 + std::pow(th / c_p, alpha);
      return std::pow(psi, -(delta + 0.5 * beta)) *
             std::exp(-std::pow(u / c_t, 2.0 * gam) / std::pow(psi, beta * gam));
    }
    case KernelFamily::inv_gneiting_cauchy: {
      const double c_p = s.params[0], c_t = s.params[1], alpha = s.params[2], beta = s.params[3],
                   gam = s.params[4], delta = s.params[5], lambda = s.params[6];
      const double psi = 1.0 + std::pow(th / c_p, alpha);
      return std::pow(psi, -(delta + 0.5 * beta)) *
             std::pow(1.0 + std::pow(u / c_t, 2.0 * gam) / std::pow(psi, beta * gam), -lambda);
    }
    case KernelFamily::white_exp: {
      const double c_p = s.params[0], c_t = s.params[1], alpha = s.params[2], beta = s.params[3],
                   gam = s.params[4], delta = s.params[5];
      const double psi = 1.0 + std::pow(u / c_t, alpha);
      return std::pow(psi, -(delta + 0.5 * beta)) *
             std::exp(-std::pow(th / c_p, gam) / std::pow(psi, beta * gam));
    }
    case KernelFamily::white_cauchy: {
      const double c_p = s.params[0], c_t = s.params[1], alpha = s.params[2], beta = s.params[3],
                   gam = s.params[4], delta = s.params[5], lambda = s.params[6];
      const double psi = 1.0 + std::pow(u / c_t, alpha);
      return std::pow(psi, -(delta + 0.5 * beta)) *
             std::pow(1.0 + std::pow(th / c_p, gam) / std::pow(psi, beta * gam), -lambda);
    }
    case KernelFamily::sinh_series: {
      const double c_t = s.params[0], alpha = s.params[1], beta = s.params[2];
      const double g = std::pow(1.0 + std::pow(u / c_t, alpha), beta);
      // g(0) = 1; dividing by the zero-lag value makes this a correlation
      return circle_profile_series(th, g) / circle_profile_series(0.0, 1.0);
    }
    case KernelFamily::cos_exp_cauchy: {
      const double c_t = s.params[0], alpha = s.params[1], lambda = s.params[2];
      const double rho = std::pow(1.0 + std::pow(u / c_t, alpha), -lambda);
      return circle_profile_exp(th, rho);
    }
    case KernelFamily::cos_exp_powexp: {
      const double c_t = s.params[0], alpha = s.params[1];
      const double rho = std::exp(-std::pow(u / c_t, alpha));
      return circle_profile_exp(th, rho);
    }
    case KernelFamily::gneiting_space_time_cauchy: {
      const double c_s = s.params[0], c_t = s.params[1], alpha = s.params[2], beta = s.params[3],
                   gam = s.params[4], delta = s.params[5], lambda = s.params[6];
      const double psi = 1.0 + std::pow(u / c_t, alpha);
      // planar margin, d = 2: exponent delta + beta
      return std::pow(psi, -(delta + beta)) *
             std::pow(1.0 + std::pow(h / c_s, 2.0 * gam) / std::pow(psi, beta * gam), -lambda);
    }
    case KernelFamily::shirota_space_circle: {
      const double c_s = s.params[0], c_p = s.params[1], alpha = s.params[2], beta = s.params[3],
                   gam = s.params[4], delta = s.params[5], lambda = s.params[6];
      const double psi = 1.0 + std::pow(th / c_p, alpha);
      return std::pow(psi, -(delta + beta)) *
             std::pow(1.0 + std::pow(h / c_s, 2.0 * gam) / std::pow(psi, beta * gam), -lambda);
    }
    case KernelFamily::model1_separable:
      return std::exp(-h / s.params[0] - th / s.params[1] - u / s.params[2]);
    case KernelFamily::model7_final: {
      const double c_s = s.params[0], c_t = s.params[1], alpha = s.params[2];
      const double rho = std::exp(-std::pow(u / c_t, alpha));
      return std::exp(rho * std::cos(th) - h / c_s - 1.0) * std::cos(rho * std::sin(th));
    }
    case KernelFamily::product: {
      double v = 1.0;
      for (const auto& c : s.components) v *= family_corr(c, lag);
      return v;
    }
  }
  throw std::logic_error("unknown kernel family");
}

}  // namespace

double eval(const KernelSpec& spec, const LagTriple& lag) {
  if (!(lag.h >= 0.0) || !(lag.u >= 0.0) || !(lag.theta >= 0.0) || !(lag.theta <= kPi + 1e-12) ||
      !std::isfinite(lag.h) || !std::isfinite(lag.theta) || !std::isfinite(lag.u))
    throw std::invalid_argument("eval: lag outside [0,inf) x [0,pi] x [0,inf)");
  LagTriple clamped = lag;
  clamped.theta = std::min(lag.theta, kPi);
  return spec.sigma2 * family_corr(spec, clamped);
}

double series_oracle_II(double theta, double rho, int terms) {
  if (!(std::abs(rho) <= 1.0)) throw std::invalid_argument("series_oracle_II: requires |rho| <= 1");
  if (terms < 1) throw std::invalid_argument("series_oracle_II: terms must be >= 1");
  double sum = 0.0;
  double coeff = 1.0;  // rho^k / k!
  for (int k = 0; k <= terms; ++k) {
    sum += coeff * std::cos(k * theta);
    coeff *= rho / (k + 1);
  }
  return std::exp(-1.0) * sum;
}

double series_oracle_I(double theta, double gamma, long terms) {
  if (!(gamma > 0.0)) throw std::invalid_argument("series_oracle_I: gamma must be positive");
  if (terms < 0) throw std::invalid_argument("series_oracle_I: terms must be >= 0");
  double sum = 0.0;
  for (long k = terms; k >= 0; --k)  // ascending magnitude, better summation
    sum += std::cos(k * theta) / (static_cast<double>(k) * k + gamma);
  return sum;
}

GramMatrix gram(const KernelSpec& spec, std::span<const SpaceTimePoint> points, double nugget,
                double period) {
  if (points.empty()) throw std::invalid_argument("gram: need at least one point");
  if (!(nugget >= 0.0)) throw std::invalid_argument("gram: nugget must be >= 0");
  const int n = static_cast<int>(points.size());
  GramMatrix g;
  g.values.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      const double v = eval(spec, lag_triple(points[i], points[j], period));
      g.values(i, j) = v;
      g.values(j, i) = v;
    }
    g.values(i, i) = eval(spec, LagTriple{}) + nugget;
  }
  return g;
}

namespace detail {

std::vector<SpaceTimePoint> random_design(int n_points, Rng& rng) {
  std::vector<SpaceTimePoint> pts(n_points);
  for (auto& p : pts) {
    p.coord.x = rng.uniform(0.0, 60.0);
    p.coord.y = rng.uniform(0.0, 60.0);
    p.t = rng.uniform(0.0, 61.0 * 24.0);
  }
  return pts;
}

double rel_min_eig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo / std::max(hi, std::numeric_limits<double>::min());
}

}  // namespace detail

namespace {

double random_scale(std::string_view name, Rng& rng) {
  auto log_uniform = [&](double lo, double hi) {
    return lo * std::exp(rng.uniform() * std::log(hi / lo));
  };
  if (name == "c_s") return log_uniform(2.0, 120.0);
  if (name == "c_t") return log_uniform(2.0, 600.0);
  if (name == "c_p") return log_uniform(0.2, 2.0 * kPi);
  if (name == "nu") return log_uniform(0.2, 2.5);
  return log_uniform(0.1, 4.0);  // delta, lambda
}

}  // namespace

KernelSpec randomize_params(const KernelSpec& spec, Rng& rng) {
  KernelSpec out = spec;
  if (spec.family == KernelFamily::product) {
    for (auto& c : out.components) c = randomize_params(c, rng);
    return out;
  }
  const auto table = family_params(spec.family);
  out.params.resize(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (std::isfinite(table[i].upper))
      out.params[i] = rng.uniform(0.02, table[i].upper);
    else
      out.params[i] = random_scale(table[i].name, rng);
  }
  return out;
}

PsdReport validate_psd(const KernelSpec& spec, int n_designs, int n_points, std::uint64_t seed) {
  if (n_designs < 1 || n_points < 1)
    throw std::invalid_argument("validate_psd: counts must be >= 1");
  spec.validate();
  Rng root(seed);
  PsdReport report;
  report.label = family_name(spec.family);
  report.n_designs = n_designs;
  for (int d = 0; d < n_designs; ++d) {
    Rng rng = root.substream(static_cast<std::uint64_t>(d));
    const KernelSpec draw = randomize_params(spec, rng);
    const auto pts = detail::random_design(n_points, rng);
    const double rel = detail::rel_min_eig(gram(draw, pts, 0.0).values);
    report.worst_rel_min_eig = std::min(report.worst_rel_min_eig, rel);
    if (rel < kPsdRelTol) ++report.n_failures;
  }
  return report;
}

nlohmann::json KernelSpec::to_json() const {
  nlohmann::json j;
  j["family"] = family_name(family);
  j["sigma2"] = sigma2;
  if (family == KernelFamily::product) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : components) comps.push_back(c.to_json());
    j["components"] = comps;
  } else {
    nlohmann::json p = nlohmann::json::object();
    const auto table = family_params(family);
    for (std::size_t i = 0; i < table.size(); ++i) p[table[i].name] = params[i];
    j["params"] = p;
  }
  return j;
}

KernelSpec KernelSpec::from_json(const nlohmann::json& j) {
  KernelSpec spec;
  if (!j.contains("family")) throw std::invalid_argument("kernel config: missing 'family'");
  spec.family = family_from_name(j.at("family").get<std::string>());
  spec.sigma2 = j.value("sigma2", 1.0);
  if (spec.family == KernelFamily::product) {
    if (!j.contains("components"))
      throw std::invalid_argument("product kernel config: missing 'components'");
    for (const auto& c : j.at("components")) spec.components.push_back(KernelSpec::from_json(c));
  } else {
    const auto table = family_params(spec.family);
    const auto p = j.value("params", nlohmann::json::object());
    for (const auto& item : p.items()) {
      bool known = false;
      for (const auto& t : table) known = known || item.key() == t.name;
      if (!known)
        throw std::invalid_argument(std::string("kernel '") + family_name(spec.family) +
                                    "': unknown parameter '" + item.key() + "'");
    }
    spec.params.resize(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (!p.contains(table[i].name))
        throw std::invalid_argument(std::string("kernel '") + family_name(spec.family) +
                                    "': missing parameter '" + table[i].name + "'");
      spec.params[i] = p.at(table[i].name).get<double>();
    }
  }
  spec.validate();
  return spec;
}

}  // namespace qpgp
