#include "xing/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "xing/image_io.hpp"
#include "xing/ops.hpp"

namespace xing::pose {

namespace {

using Rng64 = std::mt19937_64;

constexpr const char* kJointNames[kJoints] = {
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow", "l_wrist", "r_hip",
    "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye", "r_ear", "l_ear"};

struct Vec {
  double x, y;
};
Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
Vec operator*(double s, Vec v) { return {s * v.x, s * v.y}; }

Vec rotate(Vec v, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {v.x * c - v.y * s, v.x * s + v.y * c};
}

// Limb direction: angle phi from straight down, `side` = -1 for the person's
// right (image left), +1 for the left.
Vec limb(double phi, double side) { return {side * std::sin(phi), std::cos(phi)}; }

double uniform(Rng64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double uniform(Rng64& rng, AngleRange r) { return uniform(rng, r.lo, r.hi); }

double unit(std::size_t h, std::size_t w) {
  return std::min(static_cast<double>(h) / 64.0, static_cast<double>(w) / 32.0);
}

double segment_distance(double px, double py, Vec a, Vec b) {
  const Vec ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0 ? ((px - a.x) * ab.x + (py - a.y) * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a.x + t * ab.x), dy = py - (a.y + t * ab.y);
  return std::sqrt(dx * dx + dy * dy);
}

class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w, const Color& bg) : h_(h), w_(w), v_(3 * h * w) {
    for (std::size_t k = 0; k < 3; ++k) {
      std::fill_n(v_.begin() + static_cast<std::ptrdiff_t>(k * h * w), h * w, bg[k]);
    }
  }

  // Coverage = clamp(half_width + 0.5 - distance); full coverage writes the
  // colour exactly.
  template <class Dist>
  void paint(const Color& col, double half_width, Dist dist) {
    for (std::size_t y = 0; y < h_; ++y) {
      for (std::size_t x = 0; x < w_; ++x) {
        const double cov = std::clamp(half_width + 0.5 - dist(double(x), double(y)), 0.0, 1.0);
        if (cov <= 0.0) continue;
        for (std::size_t k = 0; k < 3; ++k) {
          double& px = v_[(k * h_ + y) * w_ + x];
          px = cov >= 1.0 ? col[k] : cov * col[k] + (1.0 - cov) * px;
        }
      }
    }
  }

  void segment(const Keypoint& a, const Keypoint& b, const Color& col, double thickness) {
    if (!a.visible || !b.visible) return;
    const Vec pa{a.x, a.y}, pb{b.x, b.y};
    paint(col, 0.5 * thickness,
          [&](double x, double y) { return segment_distance(x, y, pa, pb); });
  }

  void disk(const Keypoint& c, const Color& col, double radius) {
    if (!c.visible) return;
    paint(col, radius - 0.5, [&](double x, double y) { return std::hypot(x - c.x, y - c.y); });
  }

  Tensor tensor() && { return Tensor({3, h_, w_}, std::move(v_)); }

 private:
  std::size_t h_, w_;
  std::vector<double> v_;
};

Color random_color(Rng64& rng) {
  return {uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9)};
}

double color_distance(const Color& a, const Color& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

}  // namespace

const char* joint_name(std::size_t j) {
  if (j >= kJoints) throw ContractError("joint index out of range");
  return kJointNames[j];
}

bool Skeleton::in_bounds(std::size_t h, std::size_t w) const {
  return std::all_of(joints.begin(), joints.end(), [&](const Keypoint& k) {
    return !k.visible || (k.x >= 0 && k.y >= 0 && k.x < double(w) && k.y < double(h));
  });
}

const std::vector<std::pair<std::size_t, std::size_t>>& bones() {
  static const std::vector<std::pair<std::size_t, std::size_t>> b = {
      {neck, r_shoulder}, {r_shoulder, r_elbow}, {r_elbow, r_wrist},
      {neck, l_shoulder}, {l_shoulder, l_elbow}, {l_elbow, l_wrist},
      {neck, r_hip},      {r_hip, r_knee},       {r_knee, r_ankle},
      {neck, l_hip},      {l_hip, l_knee},       {l_knee, l_ankle},
      {neck, nose},       {nose, r_eye},         {r_eye, r_ear},
      {nose, l_eye},      {l_eye, l_ear}};
  return b;
}

void AppearanceSpec::validate() const {
  for (const Color* c : {&head, &torso, &right_arm, &left_arm, &right_leg, &left_leg, &background}) {
    for (double v : *c) {
      if (!(v >= -1.0 && v <= 1.0)) throw ContractError("appearance colours must lie in [-1,1]");
    }
  }
  if (limb_thickness < 1.0 || torso_thickness < 1.0 || head_radius < 1.0) {
    throw ContractError("appearance thickness and head radius must be >= 1");
  }
}

Skeleton pose_skeleton(const Body& body, const Articulation& a) {
  Skeleton sk;
  auto set = [&](std::size_t j, Vec p) { sk.joints[j] = {p.x, p.y, true}; };
  const Vec pelvis{body.pelvis_x, body.pelvis_y};
  const Vec up = rotate({0, -1}, a.lean);
  const Vec across = rotate({1, 0}, a.lean);
  const Vec neck_p = pelvis + body.torso * up;
  set(neck, neck_p);

  const Vec head_up = rotate({0, -1}, a.lean + a.head_tilt);
  const Vec head_across = rotate({1, 0}, a.lean + a.head_tilt);
  const Vec nose_p = neck_p + body.neck_head * head_up;
  set(nose, nose_p);
  set(r_eye, nose_p + body.eye_dy * head_up - body.eye_dx * head_across);
  set(l_eye, nose_p + body.eye_dy * head_up + body.eye_dx * head_across);
  set(r_ear, nose_p + body.ear_dy * head_up - body.ear_dx * head_across);
  set(l_ear, nose_p + body.ear_dy * head_up + body.ear_dx * head_across);

  auto arm = [&](std::size_t sh, std::size_t el, std::size_t wr, double side, double upper,
                 double fore) {
    const Vec s = neck_p + side * body.shoulder_half * across;
    const Vec e = s + body.upper_arm * rotate(limb(upper, side), a.lean);
    const Vec w = e + body.forearm * rotate(limb(upper + fore, side), a.lean);
    set(sh, s);
    set(el, e);
    set(wr, w);
  };
  arm(r_shoulder, r_elbow, r_wrist, -1, a.r_upper_arm, a.r_forearm);
  arm(l_shoulder, l_elbow, l_wrist, +1, a.l_upper_arm, a.l_forearm);

  // Legs hang from the pelvis in the image frame; the torso lean does not
  // rotate them.
  auto leg = [&](std::size_t hp, std::size_t kn, std::size_t an, double side, double thigh,
                 double shin) {
    const Vec hip = pelvis + side * body.hip_half * across;
    const Vec knee = hip + body.thigh * limb(thigh, side);
    const Vec ankle = knee + body.shin * limb(thigh + shin, side);
    set(hp, hip);
    set(kn, knee);
    set(an, ankle);
  };
  leg(r_hip, r_knee, r_ankle, -1, a.r_thigh, a.r_shin);
  leg(l_hip, l_knee, l_ankle, +1, a.l_thigh, a.l_shin);
  return sk;
}

Body sample_body(std::uint64_t seed, std::size_t h, std::size_t w) {
  Rng64 rng(seed);
  const double u = unit(h, w) * uniform(rng, 0.9, 1.05);
  Body b;
  b.pelvis_x = 0.5 * double(w - 1) + uniform(rng, -2.0, 2.0) * unit(h, w);
  b.pelvis_y = 34.0 / 64.0 * double(h) + uniform(rng, -1.0, 1.0) * unit(h, w);
  b.torso = 19.0 * u;
  b.neck_head = 6.0 * u;
  b.shoulder_half = 5.0 * u * uniform(rng, 0.9, 1.1);
  b.hip_half = 3.0 * u * uniform(rng, 0.9, 1.1);
  b.upper_arm = 9.0 * u;
  b.forearm = 8.0 * u;
  b.thigh = 12.0 * u;
  b.shin = 11.0 * u;
  b.eye_dx = 1.5 * u;
  b.eye_dy = 1.5 * u;
  b.ear_dx = 2.8 * u;
  b.ear_dy = 0.3 * u;
  return b;
}

Articulation sample_articulation(std::uint64_t seed) {
  Rng64 rng(seed);
  Articulation a;
  a.lean = uniform(rng, kLean);
  a.head_tilt = uniform(rng, kHeadTilt);
  a.r_upper_arm = uniform(rng, kUpperArm);
  a.l_upper_arm = uniform(rng, kUpperArm);
  a.r_forearm = uniform(rng, kForearm);
  a.l_forearm = uniform(rng, kForearm);
  a.r_thigh = uniform(rng, kThigh);
  a.l_thigh = uniform(rng, kThigh);
  a.r_shin = uniform(rng, kShin);
  a.l_shin = uniform(rng, kShin);
  return a;
}

AppearanceSpec sample_appearance(std::uint64_t seed, std::size_t h) {
  Rng64 rng(seed);
  AppearanceSpec app;
  app.background = random_color(rng);
  auto part = [&] {
    Color c = random_color(rng);
    while (color_distance(c, app.background) < 0.8) c = random_color(rng);
    return c;
  };
  app.head = part();
  app.torso = part();
  app.right_arm = part();
  app.left_arm = part();
  app.right_leg = part();
  app.left_leg = part();
  const double u = double(h) / 64.0;
  app.limb_thickness = std::max(1.0, 3.0 * u * uniform(rng, 0.9, 1.3));
  app.torso_thickness = std::max(1.0, 7.0 * u * uniform(rng, 0.9, 1.2));
  app.head_radius = std::max(1.0, 3.2 * u * uniform(rng, 0.9, 1.15));
  return app;
}

double default_sigma(std::size_t h) { return 1.5 * double(h) / 64.0; }

Tensor render_heatmaps(const Skeleton& sk, std::size_t h, std::size_t w, double sigma) {
  if (!(sigma > 0)) throw ContractError("render_heatmaps: sigma must be positive");
  std::vector<double> v(kJoints * h * w, 0.0);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t j = 0; j < kJoints; ++j) {
    const auto& k = sk.joints[j];
    if (!k.visible) continue;
    for (std::size_t y = 0; y < h; ++y) {
      const double dy = double(y) - k.y;
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = double(x) - k.x;
        v[(j * h + y) * w + x] = std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  return Tensor({kJoints, h, w}, std::move(v));
}

Tensor render_person(const Skeleton& sk, const AppearanceSpec& app, std::size_t h, std::size_t w) {
  app.validate();
  Canvas canvas(h, w, app.background);
  const auto& J = sk.joints;
  const double limb_t = app.limb_thickness;

  canvas.segment(J[r_hip], J[r_knee], app.right_leg, limb_t);
  canvas.segment(J[r_knee], J[r_ankle], app.right_leg, limb_t);
  canvas.segment(J[l_hip], J[l_knee], app.left_leg, limb_t);
  canvas.segment(J[l_knee], J[l_ankle], app.left_leg, limb_t);

  Keypoint pelvis{0.5 * (J[r_hip].x + J[l_hip].x), 0.5 * (J[r_hip].y + J[l_hip].y),
                  J[r_hip].visible && J[l_hip].visible};
  canvas.segment(J[neck], pelvis, app.torso, app.torso_thickness);
  canvas.segment(J[r_shoulder], J[l_shoulder], app.torso, limb_t);
  canvas.segment(J[r_hip], J[l_hip], app.torso, limb_t);

  canvas.segment(J[r_shoulder], J[r_elbow], app.right_arm, limb_t);
  canvas.segment(J[r_elbow], J[r_wrist], app.right_arm, limb_t);
  canvas.segment(J[l_shoulder], J[l_elbow], app.left_arm, limb_t);
  canvas.segment(J[l_elbow], J[l_wrist], app.left_arm, limb_t);

  canvas.disk(J[nose], app.head, app.head_radius);
  return std::move(canvas).tensor();
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Episode sample_episode(std::uint64_t seed, std::size_t h, std::size_t w) {
  if (h < 16 || w < 16) throw ContractError("sample_episode: h and w must be >= 16");
  Episode ep;
  ep.seed = seed;
  const Body body = sample_body(mix_seed(seed, 1), h, w);
  ep.appearance = sample_appearance(mix_seed(seed, 2), h);

  auto pose = [&](std::uint64_t stream) {
    for (std::uint64_t attempt = 0; attempt < 256; ++attempt) {
      Skeleton sk = pose_skeleton(body, sample_articulation(mix_seed(mix_seed(seed, stream), attempt)));
      if (sk.in_bounds(h, w)) return sk;
    }
    // Arms and legs hanging straight down always fit the template.
    Articulation rest;
    rest.r_upper_arm = rest.l_upper_arm = 0.2;
    return pose_skeleton(body, rest);
  };
  ep.source_skeleton = pose(3);
  ep.target_skeleton = pose(4);

  const double sigma = default_sigma(h);
  ep.source_image = render_person(ep.source_skeleton, ep.appearance, h, w);
  ep.target_image = render_person(ep.target_skeleton, ep.appearance, h, w);
  ep.source_pose = render_heatmaps(ep.source_skeleton, h, w, sigma);
  ep.target_pose = render_heatmaps(ep.target_skeleton, h, w, sigma);
  return ep;
}

namespace {

Tensor stack_field(const std::vector<Episode>& eps, Tensor Episode::*field) {
  const Shape& s = (eps.front().*field).shape();
  std::vector<double> v;
  v.reserve(eps.size() * numel(s));
  for (const auto& e : eps) {
    if ((e.*field).shape() != s) throw ShapeError("stack: episodes differ in shape");
    const auto d = (e.*field).data();
    v.insert(v.end(), d.begin(), d.end());
  }
  Shape out{eps.size()};
  out.insert(out.end(), s.begin(), s.end());
  return Tensor(std::move(out), std::move(v));
}

constexpr std::uint64_t kHoldoutStream = ~0ULL;

}  // namespace

Batch stack(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw ContractError("stack: empty episode list");
  return {stack_field(episodes, &Episode::source_image), stack_field(episodes, &Episode::target_image),
          stack_field(episodes, &Episode::source_pose), stack_field(episodes, &Episode::target_pose)};
}

Batch training_batch(std::uint64_t seed, std::uint64_t step, std::size_t batch, std::size_t h,
                     std::size_t w) {
  if (batch == 0) throw ContractError("training_batch: batch must be >= 1");
  std::vector<Episode> eps;
  eps.reserve(batch);
  const std::uint64_t base = mix_seed(seed, step);
  for (std::size_t i = 0; i < batch; ++i) eps.push_back(sample_episode(mix_seed(base, i), h, w));
  return stack(eps);
}

std::vector<Episode> holdout_episodes(std::uint64_t seed, std::size_t n, std::size_t h,
                                      std::size_t w) {
  std::vector<Episode> eps;
  const std::uint64_t base = mix_seed(seed, kHoldoutStream);
  for (std::size_t i = 0; i < n; ++i) eps.push_back(sample_episode(mix_seed(base, i), h, w));
  return eps;
}

Tensor pose_overlay(const Tensor& heatmaps) {
  if (heatmaps.rank() != 3) throw ShapeError("pose_overlay expects [18,h,w]");
  const std::size_t c = heatmaps.dim(0), hw = heatmaps.dim(1) * heatmaps.dim(2);
  std::vector<double> v(hw, 0.0);
  const auto d = heatmaps.data();
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < hw; ++i) v[i] = std::max(v[i], d[k * hw + i]);
  }
  return Tensor({1, heatmaps.dim(1), heatmaps.dim(2)}, std::move(v));
}

void dump_dataset(const std::filesystem::path& dir, std::uint64_t seed, std::size_t n,
                  std::size_t h, std::size_t w) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot open " + (dir / "manifest.txt").string());
  manifest << "# seed source_image target_image source_pose target_pose\n";
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = mix_seed(seed, i);
    const Episode ep = sample_episode(s, h, w);
    const std::string stem = "ep" + std::to_string(i);
    const std::string files[4] = {stem + "_source.ppm", stem + "_target.ppm",
                                  stem + "_source_pose.ppm", stem + "_target_pose.ppm"};
    write_ppm(dir / files[0], to_rgb8(ep.source_image));
    write_ppm(dir / files[1], to_rgb8(ep.target_image));
    write_ppm(dir / files[2], gray_to_rgb8(pose_overlay(ep.source_pose)));
    write_ppm(dir / files[3], gray_to_rgb8(pose_overlay(ep.target_pose)));
    manifest << s << ' ' << files[0] << ' ' << files[1] << ' ' << files[2] << ' ' << files[3]
             << '\n';
  }
  manifest.flush();
  if (!manifest) throw IoError("write failed: " + (dir / "manifest.txt").string());
}

}  // namespace xing::pose
