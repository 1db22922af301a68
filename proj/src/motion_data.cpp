#include "fcm/motion_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace fcm {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;
}  // namespace

// ---------------------------------------------------------------------------
// Quaternions

Quat Quat::from_axis_angle(double ax, double ay, double az, double angle) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  if (n < 1e-12) return identity();
  const double s = std::sin(angle / 2.0) / n;
  Quat q{std::cos(angle / 2.0), ax * s, ay * s, az * s};
  return q.canonical();
}

Quat Quat::operator*(const Quat& o) const {
  return Quat{w * o.w - x * o.x - y * o.y - z * o.z,
              w * o.x + x * o.w + y * o.z - z * o.y,
              w * o.y - x * o.z + y * o.w + z * o.x,
              w * o.z + x * o.y - y * o.x + z * o.w};
}

std::array<double, 3> Quat::rotate(const std::array<double, 3>& v) const {
  // q v q^-1 expanded via the cross product form.
  const double tx = 2.0 * (y * v[2] - z * v[1]);
  const double ty = 2.0 * (z * v[0] - x * v[2]);
  const double tz = 2.0 * (x * v[1] - y * v[0]);
  return {v[0] + w * tx + (y * tz - z * ty),
          v[1] + w * ty + (z * tx - x * tz),
          v[2] + w * tz + (x * ty - y * tx)};
}

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat Quat::canonical() const {
  if (w < 0.0) return Quat{-w, -x, -y, -z};
  return *this;
}

// ---------------------------------------------------------------------------
// Skeleton

void Skeleton::validate() const {
  const int j = joints();
  if (j < 2) throw ValidationError("skeleton needs at least 2 joints");
  if (static_cast<int>(bone_offset.size()) != j)
    throw ValidationError("skeleton parent/offset size mismatch");
  if (parent_index[0] != -1) throw ValidationError("joint 0 must be the root");
  const auto& r = bone_offset[0];
  if (r[0] != 0.0 || r[1] != 0.0 || r[2] != 0.0)
    throw ValidationError("root bone_offset must be zero");
  for (int i = 1; i < j; ++i) {
    if (parent_index[i] < 0 || parent_index[i] >= i)
      throw ValidationError("parent_index must form a tree in topological order");
  }
}

Skeleton Skeleton::desk() {
  // y is up, heading rotates about y, forward at zero heading is +z.
  Skeleton s;
  s.parent_index = {-1, 0, 1, 2, 1, 4, 1, 6, 0, 8, 0, 10};
  s.bone_offset = {
      {0.0, 0.0, 0.0},      // 0 root
      {0.0, 0.25, 0.0},     // 1 chest
      {0.0, 0.25, 0.0},     // 2 neck
      {0.0, 0.15, 0.0},     // 3 head
      {-0.22, 0.20, 0.0},   // 4 left shoulder
      {0.0, -0.55, 0.0},    // 5 left hand (hangs down)
      {0.22, 0.20, 0.0},    // 6 right shoulder
      {0.0, -0.55, 0.0},    // 7 right hand
      {-0.12, -0.05, 0.0},  // 8 left hip
      {0.0, -0.85, 0.0},    // 9 left foot
      {0.12, -0.05, 0.0},   // 10 right hip
      {0.0, -0.85, 0.0},    // 11 right foot
  };
  return s;
}

void MotionSequence::validate() const {
  if (frames.dim() != 3 || frames.size(2) != 3)
    throw ValidationError("frames must be T x J x 3");
  if (frames.size(0) < 2) throw ValidationError("motion needs at least 2 frames");
  if (!torch::isfinite(frames).all().item<bool>())
    throw ValidationError("frames contain non-finite values");
  if (valid_mask.size(0) != frames.size(0))
    throw ValidationError("valid_mask length mismatch");
  if (!valid_mask.any().item<bool>())
    throw ValidationError("valid_mask must have at least one true entry");
  if (caption.empty()) throw ValidationError("caption must be non-empty");
}

// ---------------------------------------------------------------------------
// Forward kinematics

torch::Tensor forward_kinematics(const Skeleton& skeleton,
                                 const std::vector<std::array<double, 3>>& root_position,
                                 const std::vector<std::vector<Quat>>& joint_rotations) {
  skeleton.validate();
  const int J = skeleton.joints();
  const auto T = static_cast<int64_t>(root_position.size());
  if (static_cast<int64_t>(joint_rotations.size()) != T)
    throw ShapeError("rotations/positions frame count mismatch");

  auto out = torch::empty({T, J, 3}, torch::kFloat64);
  auto acc = out.accessor<double, 3>();
  std::vector<Quat> global(J);
  std::vector<std::array<double, 3>> pos(J);
  for (int64_t t = 0; t < T; ++t) {
    const auto& rot = joint_rotations[t];
    if (static_cast<int>(rot.size()) != J)
      throw ShapeError("rotation joint count mismatch");
    for (int j = 0; j < J; ++j) {
      if (std::abs(rot[j].norm() - 1.0) > 1e-6)
        throw ValidationError("non-unit quaternion at joint " + std::to_string(j));
      const int p = skeleton.parent_index[j];
      if (p < 0) {
        global[j] = rot[j];
        pos[j] = root_position[t];
      } else {
        const auto off = global[p].rotate(skeleton.bone_offset[j]);
        pos[j] = {pos[p][0] + off[0], pos[p][1] + off[1], pos[p][2] + off[2]};
        global[j] = (global[p] * rot[j]).canonical();
      }
      acc[t][j][0] = pos[j][0];
      acc[t][j][1] = pos[j][1];
      acc[t][j][2] = pos[j][2];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

Normalization compute_normalization(const std::vector<MotionSequence>& train) {
  if (train.empty()) throw ConfigError("normalization needs a non-empty split");
  const int64_t C = train[0].joints() * 3;
  auto sum = torch::zeros({C}, torch::kFloat64);
  auto sq = torch::zeros({C}, torch::kFloat64);
  int64_t count = 0;
  for (const auto& m : train) {
    auto flat = m.frames.reshape({m.length(), C}).to(torch::kFloat64);
    sum += flat.sum(0);
    sq += (flat * flat).sum(0);
    count += m.length();
  }
  auto mean = sum / static_cast<double>(count);
  auto var = sq / static_cast<double>(count) - mean * mean;
  auto std = torch::sqrt(torch::clamp(var, 0.0));
  std = torch::clamp(std, Normalization::kStdFloor);
  return Normalization{mean.to(torch::kFloat32), std.to(torch::kFloat32)};
}

torch::Tensor normalize_frames(const torch::Tensor& frames, const Normalization& norm) {
  const int64_t C = norm.mean.size(0);
  if (frames.size(-1) != C) throw ShapeError("channel count does not match normalization");
  return (frames - norm.mean) / norm.std;
}

torch::Tensor denormalize_frames(const torch::Tensor& normalized, const Normalization& norm) {
  const int64_t C = norm.mean.size(0);
  if (normalized.size(-1) != C)
    throw ShapeError("channel count does not match normalization");
  return normalized * norm.std + norm.mean;
}

// ---------------------------------------------------------------------------
// Families and captions

namespace {

struct FamilyDef {
  const char* tag;
  const char* stem;
};

// Caption stems; the full caption is "<prefix> <stem>".
const std::vector<FamilyDef>& family_defs() {
  static const std::vector<FamilyDef> defs = {
      {"walk-straight", "walks forward in a straight line"},
      {"run-straight", "runs forward in a straight line"},
      {"walk-backward", "walks backward in a straight line"},
      {"sidestep-left", "steps sideways to the left"},
      {"sidestep-right", "steps sideways to the right"},
      {"walk-circle-cw", "walks in a clockwise circle"},
      {"walk-circle-ccw", "walks in a counterclockwise circle"},
      {"figure-8", "walks in a figure 8 pattern"},
      {"turn-90-left", "walks forward then turns 90 degrees to the left"},
      {"turn-90-right", "walks forward then turns 90 degrees to the right"},
      {"turn-180-left", "walks forward then turns 180 degrees to the left"},
      {"turn-180-right", "walks forward then turns 180 degrees to the right"},
      {"turn-270-left", "walks forward then turns 270 degrees to the left"},
      {"turn-270-right", "walks forward then turns 270 degrees to the right"},
      {"arm-raise-left", "raises the left arm"},
      {"arm-raise-right", "raises the right arm"},
      {"arm-raise-both", "raises both arms"},
      {"kick-1-left", "kicks once with the left leg"},
      {"kick-2-left", "kicks twice with the left leg"},
      {"kick-3-left", "kicks three times with the left leg"},
      {"kick-1-right", "kicks once with the right leg"},
      {"kick-2-right", "kicks twice with the right leg"},
      {"kick-3-right", "kicks three times with the right leg"},
      {"jump-1", "jumps once in place"},
      {"jump-2", "jumps twice in place"},
      {"jump-3", "jumps three times in place"},
      {"wave-left", "waves with the left hand"},
      {"wave-right", "waves with the right hand"},
      {"crouch", "crouches down and stands up"},
      {"spin-cw", "spins around clockwise in place"},
      {"spin-ccw", "spins around counterclockwise in place"},
      {"march", "marches in place"},
  };
  return defs;
}

const std::vector<std::string>& caption_prefixes() {
  static const std::vector<std::string> p = {"a person", "someone", "a man", "a woman"};
  return p;
}

const FamilyDef& find_family(const std::string& family) {
  for (const auto& d : family_defs())
    if (family == d.tag) return d;
  throw ConfigError("unknown motion family: " + family);
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

}  // namespace

const std::vector<std::string>& motion_families() {
  static const std::vector<std::string> tags = [] {
    std::vector<std::string> t;
    for (const auto& d : family_defs()) t.emplace_back(d.tag);
    return t;
  }();
  return tags;
}

std::string caption_for_family(const std::string& family, std::mt19937_64& rng) {
  const auto& prefixes = caption_prefixes();
  std::uniform_int_distribution<size_t> pick(0, prefixes.size() - 1);
  return prefixes[pick(rng)] + " " + find_family(family).stem;
}

std::optional<std::string> parse_caption(const std::string& caption) {
  for (const auto& prefix : caption_prefixes()) {
    if (caption.rfind(prefix + " ", 0) != 0) continue;
    const std::string stem = caption.substr(prefix.size() + 1);
    for (const auto& d : family_defs())
      if (stem == d.stem) return std::string(d.tag);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parametric motion generator

namespace {

struct GenParams {
  double speed = 1.2;       // m/s
  double step_freq = 1.8;   // Hz
  double swing = 0.5;       // leg swing amplitude, rad
  double phase = 0.0;
  double radius = 1.2;      // circle radius
  double bob = 0.02;        // vertical bob amplitude
};

struct FrameState {
  double heading = 0.0;           // rad, about y
  std::array<double, 3> root{0.0, 0.9, 0.0};
  double leg_l = 0.0, leg_r = 0.0;   // hip swing about x
  double arm_l = 0.0, arm_r = 0.0;   // shoulder rotation about z (raise)
};

// k half-sine pulses over u in [0.15, 0.85].
double pulse_train(double u, int k) {
  const double lo = 0.15, hi = 0.85;
  if (u < lo || u > hi) return 0.0;
  const double v = (u - lo) / (hi - lo) * k;
  return std::abs(std::sin(kPi * v));
}

}  // namespace

MotionSequence generate_motion(const std::string& family, int length, double fps,
                               std::uint64_t seq_seed) {
  if (length < 2) throw ConfigError("sequence length must be >= 2");
  const auto& def = find_family(family);
  std::mt19937_64 rng(seq_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  GenParams p;
  p.speed *= 0.9 + 0.2 * u01(rng);
  p.step_freq *= 0.9 + 0.2 * u01(rng);
  p.swing *= 0.85 + 0.3 * u01(rng);
  p.phase = 2.0 * kPi * u01(rng);
  p.radius = 0.8 + 0.8 * u01(rng);
  const std::string tag = def.tag;
  const double dur = length / fps;

  // Family parameters parsed off the tag.
  double turn_deg = 0.0;
  int pulses = 0;
  if (tag.rfind("turn-", 0) == 0) {
    turn_deg = std::stod(tag.substr(5));
    if (tag.find("right") != std::string::npos) turn_deg = -turn_deg;
  }
  if (tag.rfind("kick-", 0) == 0 || tag.rfind("jump-", 0) == 0)
    pulses = tag[5] - '0';

  std::vector<FrameState> states(length);
  for (int t = 0; t < length; ++t) {
    const double time = t / fps;
    const double u = length > 1 ? static_cast<double>(t) / (length - 1) : 0.0;
    FrameState s;
    const double gait = std::sin(2.0 * kPi * p.step_freq * time + p.phase);

    auto walk_legs = [&](double amp) {
      s.leg_l = amp * gait;
      s.leg_r = -amp * gait;
      s.root[1] += p.bob * std::cos(2.0 * (2.0 * kPi * p.step_freq * time + p.phase));
    };

    if (tag == "walk-straight" || tag == "run-straight") {
      const double v = tag == "run-straight" ? p.speed * 2.0 : p.speed;
      const double amp = tag == "run-straight" ? p.swing * 1.4 : p.swing;
      s.root[2] = v * time;
      walk_legs(amp);
    } else if (tag == "walk-backward") {
      s.root[2] = -0.8 * p.speed * time;
      walk_legs(p.swing * 0.8);
    } else if (tag == "sidestep-left" || tag == "sidestep-right") {
      const double dir = tag == "sidestep-left" ? -1.0 : 1.0;
      s.root[0] = dir * 0.5 * p.speed * time;
      walk_legs(p.swing * 0.5);
    } else if (tag == "walk-circle-cw" || tag == "walk-circle-ccw") {
      // ccw = heading increasing; cw = decreasing.
      const double sign = tag == "walk-circle-ccw" ? 1.0 : -1.0;
      const double omega = sign * p.speed / p.radius;
      const double ang = omega * time;
      // Start at the origin with tangent +z; the path is the integral of
      // speed * (sin psi, cos psi) with psi = omega * t.
      s.root[0] = sign * p.radius * (1.0 - std::cos(ang));
      s.root[2] = sign * p.radius * std::sin(ang);
      s.heading = ang;
      walk_legs(p.swing);
    } else if (tag == "figure-8") {
      const double w = 2.0 * kPi / dur;  // one full figure per sequence
      const double a = 0.8 * p.radius;
      s.root[0] = a * std::sin(2.0 * w * time) * 0.5;
      s.root[2] = 1.5 * a * std::sin(w * time);
      // Heading follows the velocity direction.
      const double vx = a * w * std::cos(2.0 * w * time);
      const double vz = 1.5 * a * w * std::cos(w * time);
      s.heading = std::atan2(vx, vz);
      walk_legs(p.swing * 0.8);
    } else if (tag.rfind("turn-", 0) == 0) {
      // Straight, then a smooth ramp to the target heading, then straight.
      const double ramp = smoothstep((u - 0.25) / 0.5);
      s.heading = turn_deg * kDeg * ramp;
      // Integrate position numerically below (marked by NaN here).
      s.root[0] = std::numeric_limits<double>::quiet_NaN();
      walk_legs(p.swing);
    } else if (tag.rfind("arm-raise", 0) == 0) {
      const double raise = 2.2 * smoothstep((u - 0.15) / 0.5);
      if (tag != "arm-raise-right") s.arm_l = -raise;
      if (tag != "arm-raise-left") s.arm_r = raise;
    } else if (tag.rfind("kick-", 0) == 0) {
      const double kick = -1.3 * pulse_train(u, pulses);
      if (tag.find("left") != std::string::npos)
        s.leg_l = kick;
      else
        s.leg_r = kick;
    } else if (tag.rfind("jump-", 0) == 0) {
      s.root[1] += 0.25 * pulse_train(u, pulses);
    } else if (tag == "wave-left" || tag == "wave-right") {
      const double raise = 2.4 * smoothstep(u / 0.25);
      const double osc = 0.25 * std::sin(2.0 * kPi * 1.5 * time + p.phase) *
                         smoothstep((u - 0.2) / 0.1);
      if (tag == "wave-left")
        s.arm_l = -(raise + osc);
      else
        s.arm_r = raise + osc;
    } else if (tag == "crouch") {
      s.root[1] -= 0.35 * pulse_train(u, 1);
    } else if (tag == "spin-cw" || tag == "spin-ccw") {
      const double sign = tag == "spin-ccw" ? 1.0 : -1.0;
      s.heading = sign * 2.0 * kPi * smoothstep(u);
      s.arm_l = -0.9;
      s.arm_r = 0.9;
    } else if (tag == "march") {
      walk_legs(p.swing * 0.9);
      s.root[2] = 0.0;
    }
    states[t] = s;
  }

  // turn-* integrates the root path from the heading profile.
  if (tag.rfind("turn-", 0) == 0) {
    double x = 0.0, z = 0.0;
    for (int t = 0; t < length; ++t) {
      states[t].root[0] = x;
      states[t].root[2] = z;
      x += p.speed / fps * std::sin(states[t].heading);
      z += p.speed / fps * std::cos(states[t].heading);
    }
  }

  const Skeleton skel = Skeleton::desk();
  const int J = skel.joints();
  std::vector<std::array<double, 3>> root(length);
  std::vector<std::vector<Quat>> rot(length, std::vector<Quat>(J, Quat::identity()));
  for (int t = 0; t < length; ++t) {
    const auto& s = states[t];
    root[t] = s.root;
    rot[t][0] = Quat::from_axis_angle(0, 1, 0, s.heading);
    rot[t][4] = Quat::from_axis_angle(0, 0, 1, s.arm_l);   // left shoulder
    rot[t][6] = Quat::from_axis_angle(0, 0, 1, s.arm_r);   // right shoulder
    rot[t][8] = Quat::from_axis_angle(1, 0, 0, s.leg_l);   // left hip
    rot[t][10] = Quat::from_axis_angle(1, 0, 0, s.leg_r);  // right hip
  }

  MotionSequence m;
  m.frames = forward_kinematics(skel, root, rot).to(torch::kFloat32);
  m.fps = fps;
  m.valid_mask = torch::ones({length}, torch::kBool);
  auto caption_rng = rng;  // continue the per-sequence stream
  m.caption = caption_for_family(family, caption_rng);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Binary motion format

void save_motion(const std::string& path, const MotionSequence& motion) {
  motion.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open for writing: " + path);
  const char magic[4] = {'F', 'C', 'M', '1'};
  const std::uint32_t version = 1;
  const auto T = static_cast<std::uint32_t>(motion.length());
  const auto J = static_cast<std::uint32_t>(motion.joints());
  f.write(magic, 4);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&T), 4);
  f.write(reinterpret_cast<const char*>(&J), 4);
  auto data = motion.frames.contiguous().to(torch::kFloat32);
  f.write(reinterpret_cast<const char*>(data.data_ptr<float>()),
          static_cast<std::streamsize>(sizeof(float) * T * J * 3));
  if (!f) throw FormatError("short write: " + path);
}

MotionSequence load_motion(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open: " + path);
  char magic[4];
  std::uint32_t version = 0, T = 0, J = 0;
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "FCM1", 4) != 0)
    throw FormatError("bad magic at offset 0: " + path);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&T), 4);
  f.read(reinterpret_cast<char*>(&J), 4);
  if (!f) throw FormatError("truncated header at offset 4: " + path);
  if (version != 1) throw FormatError("unsupported version at offset 4: " + path);
  if (T < 2) throw ValidationError("motion needs at least 2 frames: " + path);
  auto frames = torch::empty({static_cast<int64_t>(T), static_cast<int64_t>(J), 3},
                             torch::kFloat32);
  const auto bytes = static_cast<std::streamsize>(sizeof(float) * T * J * 3);
  f.read(reinterpret_cast<char*>(frames.data_ptr<float>()), bytes);
  if (f.gcount() != bytes)
    throw FormatError("truncated payload at offset " +
                      std::to_string(16 + f.gcount()) + ": " + path);
  MotionSequence m;
  m.frames = frames;
  m.valid_mask = torch::ones({static_cast<int64_t>(T)}, torch::kBool);
  m.caption = "(unlabeled)";
  return m;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<const ManifestEntry*> DatasetManifest::split(const std::string& which) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == which) out.push_back(&e);
  return out;
}

void DatasetManifest::save(const std::string& path) const {
  json j;
  j["seed"] = seed;
  j["fps"] = fps;
  j["joints"] = joints;
  j["split"] = {{"train", split("train").size()}, {"test", split("test").size()}};
  j["normalization"] = {
      {"mean", std::vector<float>(normalization.mean.data_ptr<float>(),
                                  normalization.mean.data_ptr<float>() +
                                      normalization.mean.numel())},
      {"std", std::vector<float>(normalization.std.data_ptr<float>(),
                                 normalization.std.data_ptr<float>() +
                                     normalization.std.numel())}};
  j["entries"] = json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"path", e.path},
                            {"caption", e.caption},
                            {"length", e.length},
                            {"family", e.family},
                            {"split", e.split}});
  }
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write manifest: " + path);
  f << j.dump(1) << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot read manifest: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError("manifest parse error: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.fps = j.at("fps").get<double>();
  m.joints = j.at("joints").get<int>();
  auto mean = j.at("normalization").at("mean").get<std::vector<float>>();
  auto stdv = j.at("normalization").at("std").get<std::vector<float>>();
  m.normalization.mean = torch::tensor(mean);
  m.normalization.std = torch::tensor(stdv);
  if ((m.normalization.std < Normalization::kStdFloor).any().item<bool>())
    throw ValidationError("manifest std below floor");
  for (const auto& e : j.at("entries")) {
    m.entries.push_back(ManifestEntry{e.at("path"), e.at("caption"), e.at("length"),
                                      e.at("family"), e.at("split")});
  }
  return m;
}

void GenerationSpec::validate() const {
  if (train_per_family <= 0 || test_per_family <= 0)
    throw ConfigError("per-family counts must be positive");
  if (min_length < 2 || max_length < min_length)
    throw ConfigError("length range invalid");
  if (fps <= 0.0) throw ConfigError("fps must be positive");
}

DatasetManifest generate_dataset(const GenerationSpec& spec, std::uint64_t rng_seed,
                                 const std::string& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);
  fs::create_directories(fs::path(out_dir) / "motions");

  DatasetManifest manifest;
  manifest.seed = rng_seed;
  manifest.fps = spec.fps;
  manifest.joints = Skeleton::desk().joints();

  std::vector<MotionSequence> train_seqs;
  for (const auto& family : motion_families()) {
    const int total = spec.train_per_family + spec.test_per_family;
    for (int i = 0; i < total; ++i) {
      const bool is_test = i >= spec.train_per_family;
      const std::uint64_t seq_seed =
          substream_seed(rng_seed, "data/" + family + "/" + std::to_string(i));
      std::mt19937_64 len_rng(seq_seed ^ 0x5bf03635ull);
      std::uniform_int_distribution<int> len_dist(spec.min_length, spec.max_length);
      const int T = len_dist(len_rng);
      auto motion = generate_motion(family, T, spec.fps, seq_seed);
      const std::string rel = "motions/" + family + "-" + std::to_string(i) + ".fcm";
      save_motion((fs::path(out_dir) / rel).string(), motion);
      manifest.entries.push_back(ManifestEntry{rel, motion.caption, motion.length(),
                                               family, is_test ? "test" : "train"});
      if (!is_test) train_seqs.push_back(std::move(motion));
    }
  }
  manifest.normalization = compute_normalization(train_seqs);
  manifest.save((fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

MotionSequence load_entry(const DatasetManifest& manifest, const ManifestEntry& entry,
                          const std::string& root_dir) {
  auto m = load_motion((fs::path(root_dir) / entry.path).string());
  m.caption = entry.caption;
  m.fps = manifest.fps;
  m.validate();
  return m;
}

}  // namespace fcm
