#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fcm/common.hpp"

namespace fcm {

// Unit quaternion, w >= 0 canonicalized.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  static Quat identity() { return {}; }
  static Quat from_axis_angle(double ax, double ay, double az, double angle);
  Quat operator*(const Quat& o) const;
  std::array<double, 3> rotate(const std::array<double, 3>& v) const;
  double norm() const;
  Quat canonical() const;  // flips sign so w >= 0
};

struct Skeleton {
  std::vector<int> parent_index;                  // -1 for root (joint 0)
  std::vector<std::array<double, 3>> bone_offset; // rest-pose offsets, meters

  int joints() const { return static_cast<int>(parent_index.size()); }
  void validate() const;

  // The 12-joint desk skeleton: root, chest, neck, head, shoulders, hands,
  // hips, feet.
  static Skeleton desk();
};

struct MotionSequence {
  torch::Tensor frames;     // T x J x 3, float32, meters
  double fps = 20.0;
  std::string caption;
  torch::Tensor valid_mask; // T, bool

  int64_t length() const { return frames.size(0); }
  int64_t joints() const { return frames.size(1); }
  void validate() const;
};

// positions[t][j] = positions[t][parent] + global_rot[parent] * offset[j],
// with the root placed at root_position[t] under joint_rotations[t][0].
// root_position: T x 3 (double), joint_rotations: T x J quaternions.
torch::Tensor forward_kinematics(const Skeleton& skeleton,
                                 const std::vector<std::array<double, 3>>& root_position,
                                 const std::vector<std::vector<Quat>>& joint_rotations);

struct Normalization {
  torch::Tensor mean;  // C = J*3, float32
  torch::Tensor std;   // C, float32, floored at kStdFloor

  static constexpr double kStdFloor = 1e-4;
};

// Per-channel statistics over flattened T x C frames of the given sequences.
Normalization compute_normalization(const std::vector<MotionSequence>& train);

torch::Tensor normalize_frames(const torch::Tensor& frames, const Normalization& norm);
torch::Tensor denormalize_frames(const torch::Tensor& normalized, const Normalization& norm);

struct ManifestEntry {
  std::string path;
  std::string caption;
  int64_t length = 0;
  std::string family;
  std::string split;  // "train" | "test"
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  Normalization normalization;
  std::uint64_t seed = 0;
  double fps = 20.0;
  int joints = 12;

  std::vector<const ManifestEntry*> split(const std::string& which) const;
  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

struct GenerationSpec {
  int train_per_family = 63;
  int test_per_family = 7;
  int min_length = 40;
  int max_length = 120;
  double fps = 20.0;

  void validate() const;
};

// The 32 synthetic caption classes (walk-straight, walk-circle-cw, ...,
// turn-N-degrees, kick-k-times, ...). Each family maps to one caption stem.
const std::vector<std::string>& motion_families();

// Caption template grammar: every generated caption parses back to its family.
std::string caption_for_family(const std::string& family, std::mt19937_64& rng);
std::optional<std::string> parse_caption(const std::string& caption);

// Deterministic parametric trajectory + seeded jitter for one sequence.
MotionSequence generate_motion(const std::string& family, int length, double fps,
                               std::uint64_t seq_seed);

// Generates all sequences, writes motion binaries under out_dir, computes the
// train-split normalization and writes <out_dir>/manifest.json.
DatasetManifest generate_dataset(const GenerationSpec& spec, std::uint64_t rng_seed,
                                 const std::string& out_dir);

// Motion binary: magic "FCM1", version u32, T u32, J u32, then T*J*3 float32 LE.
void save_motion(const std::string& path, const MotionSequence& motion);
MotionSequence load_motion(const std::string& path);

// Loads a manifest entry and attaches its caption.
MotionSequence load_entry(const DatasetManifest& manifest, const ManifestEntry& entry,
                          const std::string& root_dir);

}  // namespace fcm
