#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "fcm/common.hpp"
#include "fcm/motion_data.hpp"

namespace fcm {

// Fixed-length kinematic descriptor of a motion: per-joint speed statistics
// and range of motion, root-trajectory shape statistics, and relative
// end-effector heights. Deterministic; stands in for a learned feature space.
struct KinematicFeature {
  static constexpr int64_t kJoints = 12;
  Eigen::VectorXd values;

  static int64_t dim();
  static KinematicFeature compute(const MotionSequence& motion);
};

// Mean Euclidean joint position error over valid frames.
double joint_position_error(const torch::Tensor& pred, const torch::Tensor& target,
                            const torch::Tensor& valid_mask);

// Frechet distance between Gaussian fits of two feature sets. Near-singular
// covariances are regularized with 1e-6*I (logged to stderr).
double frechet_distance(const std::vector<KinematicFeature>& a,
                        const std::vector<KinematicFeature>& b);

// Symmetric PSD square root via eigendecomposition, negative eigenvalues
// clipped to zero. Exposed for oracle testing.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

struct LabeledFeature {
  KinematicFeature feature;
  std::string family;
};

struct RetrievalReport {
  double r_at_1 = 0.0;
  double r_at_2 = 0.0;
  double r_at_3 = 0.0;
  double r_at(int k) const;
};

// Ranks family prototypes (gallery means, z-scored by gallery statistics) by
// distance to each query feature; R@k is the fraction of queries whose true
// family ranks within the top k. Ties are broken by a seeded shuffle.
RetrievalReport retrieval_precision(const std::vector<LabeledFeature>& queries,
                                    const std::vector<LabeledFeature>& gallery,
                                    uint64_t seed);

// Mean pairwise feature distance over n_pairs seeded random (i != j) pairs.
double diversity(const std::vector<KinematicFeature>& features, int64_t n_pairs,
                 uint64_t seed);

}  // namespace fcm
