#include "fcm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <random>

namespace fcm {

namespace {

constexpr int64_t J = KinematicFeature::kJoints;

// Layout: per-joint mean speed (J), per-joint speed std (J), per-joint range
// of motion (J), root statistics (9), end-effector heights (8).
constexpr int64_t kRootStats = 9;
constexpr int64_t kEffectorStats = 8;

Eigen::Vector3d joint_at(const torch::Tensor& frames, int64_t t, int64_t j) {
  auto a = frames.accessor<float, 3>();
  return {a[t][j][0], a[t][j][1], a[t][j][2]};
}

}  // namespace

int64_t KinematicFeature::dim() { return 3 * J + kRootStats + kEffectorStats; }

KinematicFeature KinematicFeature::compute(const MotionSequence& motion) {
  motion.validate();
  if (motion.joints() != J) throw ShapeError("feature extractor expects 12 joints");
  const auto frames = motion.frames.to(torch::kFloat32).contiguous();
  std::vector<int64_t> valid;
  auto mask = motion.valid_mask.accessor<bool, 1>();
  for (int64_t t = 0; t < motion.length(); ++t)
    if (mask[t]) valid.push_back(t);
  if (valid.size() < 3) throw ValidationError("motion too short for features");

  KinematicFeature out;
  out.values = Eigen::VectorXd::Zero(dim());
  const double dt = 1.0 / motion.fps;
  const auto n = static_cast<int64_t>(valid.size());

  // Centered moving average (width 3) over the valid frames. Generated motion
  // carries frame-rate noise that would otherwise dominate every velocity
  // statistic; the filter is applied identically to real and generated input.
  std::vector<Eigen::Vector3d> smooth(static_cast<size_t>(n) * J);
  auto at = [&](int64_t i, int64_t j) -> Eigen::Vector3d& {
    return smooth[static_cast<size_t>(i) * J + j];
  };
  for (int64_t j = 0; j < J; ++j)
    for (int64_t i = 0; i < n; ++i) {
      Eigen::Vector3d acc = joint_at(frames, valid[i], j);
      double w = 1;
      if (i > 0) { acc += joint_at(frames, valid[i - 1], j); w += 1; }
      if (i + 1 < n) { acc += joint_at(frames, valid[i + 1], j); w += 1; }
      at(i, j) = acc / w;
    }

  for (int64_t j = 0; j < J; ++j) {
    double sum = 0, sum_sq = 0;
    Eigen::Vector3d lo = at(0, j), hi = lo;
    for (int64_t i = 0; i < n; ++i) {
      auto p = at(i, j);
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      if (i > 0) {
        double speed = (p - at(i - 1, j)).norm() / dt;
        sum += speed;
        sum_sq += speed * speed;
      }
    }
    double mean = sum / (n - 1);
    out.values[j] = mean;
    out.values[J + j] = std::sqrt(std::max(0.0, sum_sq / (n - 1) - mean * mean));
    out.values[2 * J + j] = (hi - lo).norm();
  }

  // Root-trajectory shape in the ground plane plus height statistics. Heading
  // and curvature come from a decimated trajectory: per-frame segments are too
  // short for a stable direction estimate on anything but noise-free input.
  double path_len = 0, heading_total = 0, heading_abs = 0;
  double y_sum = 0, y_sq = 0, y_max = -1e30, y_min = 1e30;
  double turn_len = 0;
  int64_t curv_n = 0;
  for (int64_t i = 0; i < n; ++i) {
    auto p = at(i, 0);
    y_sum += p.y();
    y_sq += p.y() * p.y();
    y_max = std::max(y_max, p.y());
    y_min = std::min(y_min, p.y());
    if (i > 0) path_len += (Eigen::Vector2d(p.x(), p.z()) -
                            Eigen::Vector2d(at(i - 1, 0).x(), at(i - 1, 0).z()))
                               .norm();
  }
  constexpr int64_t kHeadingStride = 5;
  constexpr double kMinSegment = 0.1;
  Eigen::Vector2d prev_dir(0, 0);
  bool have_dir = false;
  Eigen::Vector2d anchor(at(0, 0).x(), at(0, 0).z());
  for (int64_t i = kHeadingStride; i < n; i += kHeadingStride) {
    Eigen::Vector2d p(at(i, 0).x(), at(i, 0).z());
    Eigen::Vector2d seg = p - anchor;
    double len = seg.norm();
    if (len < kMinSegment) continue;  // stationary: keep the anchor
    Eigen::Vector2d dir = seg / len;
    if (have_dir) {
      double ang = std::atan2(prev_dir.x() * dir.y() - prev_dir.y() * dir.x(),
                              prev_dir.dot(dir));
      heading_total += ang;
      heading_abs += std::abs(ang);
      turn_len += len;
      ++curv_n;
    }
    prev_dir = dir;
    have_dir = true;
    anchor = p;
  }
  auto start = at(0, 0);
  auto end = at(n - 1, 0);
  double y_mean = y_sum / n;
  int64_t base = 3 * J;
  out.values[base + 0] = path_len;
  out.values[base + 1] = Eigen::Vector2d(end.x() - start.x(), end.z() - start.z()).norm();
  // Mean curvature as total turning over the turning path length; per-segment
  // ratios blow up for near-stationary motion.
  out.values[base + 2] = curv_n > 0 ? heading_abs / std::max(turn_len, kMinSegment) : 0.0;
  out.values[base + 3] = heading_total;
  out.values[base + 4] = heading_abs;
  out.values[base + 5] = y_mean;
  out.values[base + 6] = std::sqrt(std::max(0.0, y_sq / n - y_mean * y_mean));
  out.values[base + 7] = y_max;
  out.values[base + 8] = y_min;

  // Hand and foot heights relative to the root (mean and max each side).
  base += kRootStats;
  const int64_t effectors[4] = {5, 7, 9, 11};  // lhand, rhand, lfoot, rfoot
  for (int e = 0; e < 4; ++e) {
    double rel_sum = 0, rel_max = -1e30;
    for (int64_t i = 0; i < n; ++i) {
      double rel = at(i, effectors[e]).y() - at(i, 0).y();
      rel_sum += rel;
      rel_max = std::max(rel_max, rel);
    }
    out.values[base + 2 * e] = rel_sum / n;
    out.values[base + 2 * e + 1] = rel_max;
  }

  if (!out.values.allFinite()) throw ValidationError("non-finite kinematic feature");
  return out;
}

double joint_position_error(const torch::Tensor& pred, const torch::Tensor& target,
                            const torch::Tensor& valid_mask) {
  if (pred.sizes() != target.sizes()) throw ShapeError("MPJPE shape mismatch");
  auto dist = (pred.to(torch::kFloat64) - target.to(torch::kFloat64)).norm(2, -1);  // T x J
  auto m = valid_mask.to(torch::kFloat64).unsqueeze(-1);
  auto denom = (m.sum() * pred.size(1)).clamp_min(1.0);
  return (dist * m).sum().item<double>() / denom.item<double>();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

namespace {

void gaussian_fit(const std::vector<KinematicFeature>& set, Eigen::VectorXd& mu,
                  Eigen::MatrixXd& sigma) {
  if (set.size() < 2) throw ValidationError("need at least 2 samples per feature set");
  const auto n = static_cast<int64_t>(set.size());
  const auto d = set[0].values.size();
  mu = Eigen::VectorXd::Zero(d);
  for (const auto& f : set) mu += f.values;
  mu /= static_cast<double>(n);
  sigma = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : set) {
    Eigen::VectorXd c = f.values - mu;
    sigma += c * c.transpose();
  }
  sigma /= static_cast<double>(n - 1);
}

}  // namespace

double frechet_distance(const std::vector<KinematicFeature>& a,
                        const std::vector<KinematicFeature>& b) {
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd sig_a, sig_b;
  gaussian_fit(a, mu_a, sig_a);
  gaussian_fit(b, mu_b, sig_b);
  if (mu_a.size() != mu_b.size()) throw ShapeError("feature dimension mismatch");

  auto regularize = [](Eigen::MatrixXd& s, const char* name) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.eigenvalues().minCoeff() < 1e-10) {
      std::cerr << "[metrics] regularizing near-singular covariance (" << name << ")\n";
      s += 1e-6 * Eigen::MatrixXd::Identity(s.rows(), s.cols());
    }
  };
  regularize(sig_a, "A");
  regularize(sig_b, "B");

  // tr((Sa Sb)^{1/2}) via the symmetric form sqrt(Sa)^T Sb sqrt(Sa).
  Eigen::MatrixXd root_a = psd_sqrt(sig_a);
  Eigen::MatrixXd inner = root_a * sig_b * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner);
  double tr_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double d2 = (mu_a - mu_b).squaredNorm() + sig_a.trace() + sig_b.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d2);
}

double RetrievalReport::r_at(int k) const {
  switch (k) {
    case 1: return r_at_1;
    case 2: return r_at_2;
    case 3: return r_at_3;
    default: throw UsageError("retrieval report covers k in {1,2,3}");
  }
}

RetrievalReport retrieval_precision(const std::vector<LabeledFeature>& queries,
                                    const std::vector<LabeledFeature>& gallery,
                                    uint64_t seed) {
  if (queries.empty() || gallery.empty())
    throw ValidationError("empty retrieval input");
  const auto d = gallery[0].feature.values.size();

  // Family prototypes and per-dimension z-scoring statistics from the gallery.
  std::map<std::string, std::pair<Eigen::VectorXd, int64_t>> sums;
  Eigen::VectorXd dim_sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd dim_sq = Eigen::VectorXd::Zero(d);
  for (const auto& g : gallery) {
    auto& slot = sums.try_emplace(g.family, Eigen::VectorXd::Zero(d), 0).first->second;
    slot.first += g.feature.values;
    slot.second += 1;
    dim_sum += g.feature.values;
    dim_sq += g.feature.values.cwiseProduct(g.feature.values);
  }
  const double n_g = static_cast<double>(gallery.size());
  Eigen::VectorXd mean = dim_sum / n_g;
  Eigen::VectorXd std_dev =
      (dim_sq / n_g - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-8);

  std::vector<std::string> families;
  std::vector<Eigen::VectorXd> prototypes;
  for (const auto& [fam, slot] : sums) {
    families.push_back(fam);
    prototypes.push_back(
        ((slot.first / static_cast<double>(slot.second)) - mean).cwiseQuotient(std_dev));
  }

  std::mt19937_64 rng(seed);
  int64_t hit1 = 0, hit2 = 0, hit3 = 0;
  for (const auto& q : queries) {
    auto true_it = std::find(families.begin(), families.end(), q.family);
    if (true_it == families.end())
      throw ConfigError("gallery missing family: " + q.family);
    const auto true_idx = static_cast<size_t>(true_it - families.begin());
    // Clamp the z-scored query so a single corrupted dimension cannot
    // dominate the distance to every prototype.
    Eigen::VectorXd z = (q.feature.values - mean)
                            .cwiseQuotient(std_dev)
                            .cwiseMax(-4.0)
                            .cwiseMin(4.0);

    std::vector<size_t> order(families.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);  // tie-break shuffle
    std::vector<double> dist(families.size());
    for (size_t i = 0; i < families.size(); ++i)
      dist[i] = (z - prototypes[i]).norm();
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return dist[a] < dist[b]; });
    auto rank = static_cast<int64_t>(
        std::find(order.begin(), order.end(), true_idx) - order.begin());
    if (rank < 1) ++hit1;
    if (rank < 2) ++hit2;
    if (rank < 3) ++hit3;
  }
  const double n_q = static_cast<double>(queries.size());
  return {hit1 / n_q, hit2 / n_q, hit3 / n_q};
}

double diversity(const std::vector<KinematicFeature>& features, int64_t n_pairs,
                 uint64_t seed) {
  if (features.size() < 2) throw ValidationError("diversity needs at least 2 features");
  if (n_pairs < 1) throw ConfigError("n_pairs must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, features.size() - 1);
  double sum = 0;
  for (int64_t p = 0; p < n_pairs; ++p) {
    size_t i = pick(rng), j = pick(rng);
    while (j == i) j = pick(rng);
    sum += (features[i].values - features[j].values).norm();
  }
  return sum / static_cast<double>(n_pairs);
}

}  // namespace fcm
