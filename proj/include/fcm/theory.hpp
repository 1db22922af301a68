#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fcm/common.hpp"

namespace fcm {

// Finite joint distribution over (x, s1, s2) for exact Bayes-risk
// computations. Probabilities must sum to 1.
struct FiniteJointDistribution {
  struct Atom {
    Eigen::VectorXd x;
    int s1 = 0;
    int s2 = 0;
    double p = 0.0;
  };
  std::vector<Atom> support;

  void validate() const;
};

enum class Representation { kS1, kS2, kJoint };

// R*(S) = E[Var(X|S)] (trace of the conditional covariance), by exact
// enumeration over label values.
double bayes_risk(const FiniteJointDistribution& dist, Representation rep);

struct MonotonicityReport {
  double risk_s1 = 0.0;
  double risk_s2 = 0.0;
  double risk_joint = 0.0;
  bool holds = false;   // risk_joint <= min(risk_s1, risk_s2) + 1e-12
  bool strict = false;  // strictly below the min
};

MonotonicityReport check_monotonicity(const FiniteJointDistribution& dist);

// Random finite distribution for property sweeps.
FiniteJointDistribution random_finite_distribution(std::uint64_t seed);

struct VarianceBound {
  double exact = 0.0;  // E[Var(u | z_t)] for the scalar Gaussian model
  double bound = 0.0;  // sigma1^2 / (1-t)^2
};

// Scalar rectified-flow model with z0 ~ N(0,1), z1 ~ N(0, sigma1^2)
// independent; closed-form conditional variance of u = z1 - z0 given
// z_t = t z1 + (1-t) z0, against the endpoint-concentration bound.
VarianceBound gaussian_irreducible_variance(double sigma1, double t);

// Conditional endpoint model for the Monte Carlo check: given a caption,
// z1 ~ mixture over component means with per-component std sigma.
struct EndpointModel {
  std::vector<double> component_means;
  double sigma = 0.1;

  double endpoint_variance() const;  // Var(z1 | C), total dispersion
};

struct MonteCarloCheck {
  double t = 0.0;
  double estimate = 0.0;  // binned estimate of E[Var(u | z_t)]
  double std_error = 0.0;
  double bound = 0.0;     // Var(z1|C) / (1-t)^2
  bool passed = false;    // estimate <= bound + 3 * std_error
};

std::vector<MonteCarloCheck> monte_carlo_bound_check(const EndpointModel& model,
                                                     const std::vector<double>& t_grid,
                                                     std::int64_t n_samples,
                                                     std::uint64_t seed);

// Log-log slope of bound(t) against (1-t); the theorem predicts -2.
double bound_loglog_slope(const EndpointModel& model, const std::vector<double>& t_grid);

}  // namespace fcm
