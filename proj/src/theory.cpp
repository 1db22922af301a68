#include "fcm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <random>

namespace fcm {

void FiniteJointDistribution::validate() const {
  if (support.empty()) throw ValidationError("empty distribution support");
  const auto d = support.front().x.size();
  double total = 0;
  for (const auto& a : support) {
    if (a.x.size() != d) throw ShapeError("inconsistent support dimension");
    if (a.p < 0) throw ValidationError("negative probability");
    total += a.p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw ValidationError("probabilities must sum to 1");
}

double bayes_risk(const FiniteJointDistribution& dist, Representation rep) {
  dist.validate();
  auto key = [rep](const FiniteJointDistribution::Atom& a) -> std::pair<int, int> {
    switch (rep) {
      case Representation::kS1: return {a.s1, 0};
      case Representation::kS2: return {a.s2, 0};
      default: return {a.s1, a.s2};
    }
  };
  struct Group {
    double p = 0;
    Eigen::VectorXd sum_x;
    double sum_sq = 0;
  };
  std::map<std::pair<int, int>, Group> groups;
  const auto d = dist.support.front().x.size();
  for (const auto& a : dist.support) {
    auto& g = groups[key(a)];
    if (g.sum_x.size() == 0) g.sum_x = Eigen::VectorXd::Zero(d);
    g.p += a.p;
    g.sum_x += a.p * a.x;
    g.sum_sq += a.p * a.x.squaredNorm();
  }
  double risk = 0;
  for (const auto& [k, g] : groups) {
    if (g.p <= 0) continue;
    // p * (E[|x|^2 | s] - |E[x|s]|^2) = conditional variance trace, weighted.
    risk += g.sum_sq - g.sum_x.squaredNorm() / g.p;
  }
  return std::max(0.0, risk);
}

MonotonicityReport check_monotonicity(const FiniteJointDistribution& dist) {
  MonotonicityReport r;
  r.risk_s1 = bayes_risk(dist, Representation::kS1);
  r.risk_s2 = bayes_risk(dist, Representation::kS2);
  r.risk_joint = bayes_risk(dist, Representation::kJoint);
  const double lo = std::min(r.risk_s1, r.risk_s2);
  r.holds = r.risk_joint <= lo + 1e-12;
  r.strict = r.risk_joint < lo - 1e-12;
  return r;
}

FiniteJointDistribution random_finite_distribution(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_atoms(4, 12), dim(1, 3), lab1(0, 2), lab2(0, 3);
  std::uniform_real_distribution<double> val(-2.0, 2.0), mass(0.05, 1.0);
  FiniteJointDistribution dist;
  const int d = dim(rng);
  const int n = n_atoms(rng);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    FiniteJointDistribution::Atom a;
    a.x = Eigen::VectorXd::NullaryExpr(d, [&](auto) { return val(rng); });
    a.s1 = lab1(rng);
    a.s2 = lab2(rng);
    a.p = mass(rng);
    total += a.p;
    dist.support.push_back(std::move(a));
  }
  for (auto& a : dist.support) a.p /= total;
  // Remove normalization round-off so validate()'s 1e-12 budget holds.
  double s = 0;
  for (const auto& a : dist.support) s += a.p;
  dist.support.back().p += 1.0 - s;
  return dist;
}

VarianceBound gaussian_irreducible_variance(double sigma1, double t) {
  if (t <= 0.0 || t > 0.99)
    throw ValidationError("t must lie in (0, 0.99] for the variance bound");
  const double s2 = sigma1 * sigma1;
  const double var_u = 1.0 + s2;
  const double var_zt = (1.0 - t) * (1.0 - t) + t * t * s2;
  const double cov = t * s2 - (1.0 - t);
  VarianceBound out;
  out.exact = var_u - cov * cov / var_zt;
  out.bound = s2 / ((1.0 - t) * (1.0 - t));
  return out;
}

double EndpointModel::endpoint_variance() const {
  if (component_means.empty()) throw ConfigError("endpoint model needs components");
  double m = 0, m2 = 0;
  for (double mu : component_means) {
    m += mu;
    m2 += mu * mu;
  }
  m /= static_cast<double>(component_means.size());
  m2 /= static_cast<double>(component_means.size());
  return sigma * sigma + std::max(0.0, m2 - m * m);
}

std::vector<MonteCarloCheck> monte_carlo_bound_check(const EndpointModel& model,
                                                     const std::vector<double>& t_grid,
                                                     std::int64_t n_samples,
                                                     std::uint64_t seed) {
  if (n_samples < 1000) throw ConfigError("need at least 1000 samples");
  const double var_z1 = model.endpoint_variance();
  std::vector<MonteCarloCheck> out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<size_t> comp(0, model.component_means.size() - 1);

  for (double t : t_grid) {
    if (t <= 0.0 || t >= 1.0) throw ValidationError("t grid must lie in (0,1)");
    std::vector<std::pair<double, double>> zs(n_samples);  // (z_t, u)
    for (auto& [zt, u] : zs) {
      const double z0 = normal(rng);
      const double z1 = model.component_means[comp(rng)] + model.sigma * normal(rng);
      zt = t * z1 + (1.0 - t) * z0;
      u = z1 - z0;
    }
    std::sort(zs.begin(), zs.end());

    // Equal-count bins as a nearest-neighbor conditional-variance estimator.
    int64_t n_bins = 64;
    while (n_bins > 1 && n_samples / n_bins < 100) {
      n_bins /= 2;
      std::cerr << "[theory] widening bins to " << n_bins << " per t\n";
    }
    double est = 0, var_of_est = 0;
    for (int64_t b = 0; b < n_bins; ++b) {
      const int64_t lo = b * n_samples / n_bins;
      const int64_t hi = (b + 1) * n_samples / n_bins;
      const auto nb = static_cast<double>(hi - lo);
      double m1 = 0, m2 = 0;
      for (int64_t i = lo; i < hi; ++i) {
        m1 += zs[i].second;
        m2 += zs[i].second * zs[i].second;
      }
      m1 /= nb;
      m2 /= nb;
      const double v = std::max(0.0, m2 - m1 * m1);
      double m4 = 0;
      for (int64_t i = lo; i < hi; ++i) {
        const double c = zs[i].second - m1;
        m4 += c * c * c * c;
      }
      m4 /= nb;
      const double w = nb / static_cast<double>(n_samples);
      est += w * v;
      // Variance of the sample variance: (m4 - v^2) / n_b, first order.
      var_of_est += w * w * std::max(0.0, m4 - v * v) / nb;
    }

    MonteCarloCheck c;
    c.t = t;
    c.estimate = est;
    c.std_error = std::sqrt(var_of_est);
    c.bound = var_z1 / ((1.0 - t) * (1.0 - t));
    c.passed = c.estimate <= c.bound + 3.0 * c.std_error;
    out.push_back(c);
  }
  return out;
}

double bound_loglog_slope(const EndpointModel& model, const std::vector<double>& t_grid) {
  if (t_grid.size() < 2) throw ConfigError("slope fit needs at least 2 grid points");
  const double var_z1 = model.endpoint_variance();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(t_grid.size());
  for (double t : t_grid) {
    const double x = std::log(1.0 - t);
    const double y = std::log(var_z1 / ((1.0 - t) * (1.0 - t)));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace fcm
