#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xing/tensor.hpp"

namespace xing::pose {

// OpenPose/COCO-18 joint order.
enum Joint : std::size_t {
  nose, neck,
  r_shoulder, r_elbow, r_wrist,
  l_shoulder, l_elbow, l_wrist,
  r_hip, r_knee, r_ankle,
  l_hip, l_knee, l_ankle,
  r_eye, l_eye, r_ear, l_ear,
};
constexpr std::size_t kJoints = 18;

const char* joint_name(std::size_t j);

struct Keypoint {
  double x = 0, y = 0;
  bool visible = false;
};

struct Skeleton {
  std::array<Keypoint, kJoints> joints{};

  bool in_bounds(std::size_t h, std::size_t w) const;
};

/// Parent-child joint pairs of the kinematic tree.
const std::vector<std::pair<std::size_t, std::size_t>>& bones();

using Color = std::array<double, 3>;

struct AppearanceSpec {
  Color head{}, torso{}, right_arm{}, left_arm{}, right_leg{}, left_leg{};
  Color background{};
  double limb_thickness = 3.0;
  double torso_thickness = 6.0;
  double head_radius = 3.0;

  void validate() const;
};

/// Per-identity body proportions (pixels). Shared by both poses of an
/// episode, so bone lengths are identical across them.
struct Body {
  double pelvis_x = 0, pelvis_y = 0;
  double torso = 0, neck_head = 0;
  double shoulder_half = 0, hip_half = 0;
  double upper_arm = 0, forearm = 0, thigh = 0, shin = 0;
  double eye_dx = 0, eye_dy = 0, ear_dx = 0, ear_dy = 0;
};

/// The ten articulation angles (radians). Limb angles are measured from
/// straight down, positive away from the body midline; bends are relative
/// to the parent segment.
struct Articulation {
  double lean = 0, head_tilt = 0;
  double r_upper_arm = 0, l_upper_arm = 0, r_forearm = 0, l_forearm = 0;
  double r_thigh = 0, l_thigh = 0, r_shin = 0, l_shin = 0;
};

struct AngleRange {
  double lo, hi;
};

// Sampler ranges.
constexpr AngleRange kLean{-0.15, 0.15};
constexpr AngleRange kHeadTilt{-0.3, 0.3};
constexpr AngleRange kUpperArm{0.05, 2.2};
constexpr AngleRange kForearm{-1.0, 1.2};
constexpr AngleRange kThigh{-0.1, 0.55};
constexpr AngleRange kShin{-0.7, 0.4};

Skeleton pose_skeleton(const Body& body, const Articulation& a);

/// Body template for an h x w frame with per-identity jitter.
Body sample_body(std::uint64_t seed, std::size_t h, std::size_t w);
Articulation sample_articulation(std::uint64_t seed);
AppearanceSpec sample_appearance(std::uint64_t seed, std::size_t h);

double default_sigma(std::size_t h);

/// [18,h,w]; pixel (x,y) has its centre at integer coordinates.
Tensor render_heatmaps(const Skeleton& sk, std::size_t h, std::size_t w, double sigma);
/// [3,h,w] in [-1,1].
Tensor render_person(const Skeleton& sk, const AppearanceSpec& app, std::size_t h, std::size_t w);

struct Episode {
  std::uint64_t seed = 0;
  Skeleton source_skeleton, target_skeleton;
  AppearanceSpec appearance;
  Tensor source_image, target_image;  // [3,h,w]
  Tensor source_pose, target_pose;    // [18,h,w]
};

Episode sample_episode(std::uint64_t seed, std::size_t h, std::size_t w);

/// Stateless seed mixing (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct Batch {
  Tensor source_image, target_image, source_pose, target_pose;  // [b,...]
  std::size_t size() const { return source_image.dim(0); }
};
Batch stack(const std::vector<Episode>& episodes);

/// Episodes for training step `step` of a run seeded with `seed`.
Batch training_batch(std::uint64_t seed, std::uint64_t step, std::size_t batch, std::size_t h,
                     std::size_t w);
/// `n` held-out episodes; seeds disjoint from every training batch.
std::vector<Episode> holdout_episodes(std::uint64_t seed, std::size_t n, std::size_t h,
                                      std::size_t w);

/// Max over channels of a heatmap stack -> [1,h,w], for visualisation.
Tensor pose_overlay(const Tensor& heatmaps);

/// Writes I_s, I_t and pose overlays of `n` episodes plus manifest.txt.
void dump_dataset(const std::filesystem::path& dir, std::uint64_t seed, std::size_t n,
                  std::size_t h, std::size_t w);

}  // namespace xing::pose
