#include "hgs/scene.hpp"

#include "hgs/error.hpp"
#include "hgs/renderer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

namespace hgs {

const char* to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw Error(ErrorKind::Format, "unknown split '" + s + "'");
}

const char* to_string(InitMode mode) {
  return mode == InitMode::GtSubsample ? "gt-subsample" : "random-ball";
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "gt-subsample") return InitMode::GtSubsample;
  if (s == "random-ball") return InitMode::RandomBall;
  throw Error(ErrorKind::InvalidInput, "unknown init mode '" + s + "'");
}

std::vector<std::size_t> Scene::indices(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) out.push_back(i);
  }
  return out;
}

std::size_t Scene::index_of_view(int view_id) const {
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    if (cameras[i].view_id == view_id) return i;
  }
  throw Error(ErrorKind::IndexOutOfRange, "view " + std::to_string(view_id) + " not in scene");
}

void Scene::validate() const {
  if (gt_images.size() != cameras.size() || split.size() != cameras.size()) {
    throw Error(ErrorKind::InvalidSpec, "scene cameras, images and split differ in length");
  }
  std::set<int> ids;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    cameras[i].validate();
    if (gt_images[i].width() != cameras[i].width || gt_images[i].height() != cameras[i].height) {
      throw Error(ErrorKind::InvalidSpec,
                  "image of view " + std::to_string(cameras[i].view_id) + " does not match its camera");
    }
    if (!ids.insert(cameras[i].view_id).second) {
      throw Error(ErrorKind::InvalidSpec, "duplicate view_id " + std::to_string(cameras[i].view_id));
    }
  }
  if (indices(Split::Train).size() < 2) {
    throw Error(ErrorKind::InvalidSpec, "scene needs at least two train views");
  }
}

std::pair<Vec3, double> camera_bounds(const std::vector<Camera>& cameras) {
  if (cameras.empty()) return {Vec3::Zero(), 1.0};
  Vec3 center = Vec3::Zero();
  for (const auto& c : cameras) center += c.center();
  center /= static_cast<double>(cameras.size());
  double radius = 0.0;
  for (const auto& c : cameras) radius = std::max(radius, (c.center() - center).norm());
  return {center, radius};
}

namespace {

Quat random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q;
  do {
    q = {n(rng), n(rng), n(rng), n(rng)};
  } while (q.norm() < 1e-6);
  return q.normalized();
}

Vec3 random_in_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 p;
  do {
    p = {u(rng), u(rng), u(rng)};
  } while (p.squaredNorm() > 1.0);
  return radius * p;
}

}  // namespace

SyntheticScene gen_synthetic(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.gt_gaussians <= 0) throw Error(ErrorKind::InvalidSpec, "ground-truth Gaussian count must be positive");
  if (spec.views < 3) throw Error(ErrorKind::InvalidSpec, "synthetic scenes need at least 3 cameras");
  if (spec.test_every < 1) throw Error(ErrorKind::InvalidSpec, "test_every must be >= 1");
  if (!(spec.ring_radius > 1.0)) throw Error(ErrorKind::InvalidSpec, "ring radius must exceed the unit content ball");

  std::mt19937_64 rng(seed);
  SyntheticScene out;
  Scene& scene = out.scene;
  scene.background = spec.background;

  const double focal = 0.5 * spec.width / std::tan(0.5 * spec.fov_deg * std::numbers::pi / 180.0);
  const double elevation = spec.elevation_deg * std::numbers::pi / 180.0;
  for (int k = 0; k < spec.views; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / spec.views;
    const double phi = (k % 2 == 0 ? 1.0 : -1.0) * elevation;
    const Vec3 eye = spec.ring_radius *
                     Vec3(std::cos(phi) * std::cos(theta), std::sin(phi), std::cos(phi) * std::sin(theta));
    scene.cameras.push_back(
        look_at(eye, Vec3::Zero(), Vec3::UnitY(), focal, focal, spec.width, spec.height, k));
    scene.split.push_back(k % spec.test_every == 0 ? Split::Test : Split::Train);
  }
  scene.extent = camera_bounds(scene.cameras).second;
  scene.content_center = Vec3::Zero();
  scene.content_radius = 1.0;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> opacity(0.5, 0.95);
  const double log_lo = std::log(spec.min_scale), log_hi = std::log(spec.max_scale);
  std::uniform_real_distribution<double> log_scale(log_lo, log_hi);
  GaussianCloud& gt = out.gt_cloud;
  gt.reserve(static_cast<std::size_t>(spec.gt_gaussians));
  for (int i = 0; i < spec.gt_gaussians; ++i) {
    const Vec3 mean = random_in_ball(rng, 1.0);
    const Vec3 ls(log_scale(rng), log_scale(rng), log_scale(rng));
    const Quat rot = random_rotation(rng);
    const double raw = logit(opacity(rng));
    const Vec3 color(unit(rng), unit(rng), unit(rng));
    gt.push_back(mean, ls, rot, raw, color);
  }

  for (const auto& cam : scene.cameras) {
    scene.gt_images.push_back(render_view(gt, cam, scene.background).image);
  }
  scene.validate();
  return out;
}

std::vector<double> nearest_neighbor_scales(const std::vector<Vec3>& points) {
  std::vector<double> out(points.size(), 0.0);
  std::vector<double> d;
  for (std::size_t i = 0; i < points.size(); ++i) {
    d.clear();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (j != i) d.push_back((points[i] - points[j]).norm());
    }
    const std::size_t k = std::min<std::size_t>(3, d.size());
    if (k == 0) continue;
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    double sum = 0.0;
    for (std::size_t m = 0; m < k; ++m) sum += d[m];
    out[i] = sum / static_cast<double>(k);
  }
  return out;
}

GaussianCloud init_cloud(const Scene& scene, std::size_t count, InitMode mode, std::uint64_t seed,
                         const GaussianCloud* gt_cloud) {
  if (count < 1) throw Error(ErrorKind::InvalidInput, "initial Gaussian count must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<Vec3> points;
  points.reserve(count);
  const Vec3 color = Vec3::Constant(0.5);

  if (mode == InitMode::GtSubsample) {
    if (!gt_cloud || gt_cloud->size() < count) {
      throw Error(ErrorKind::InvalidInput, "gt-subsample needs at least " + std::to_string(count) +
                                               " ground-truth points");
    }
    std::vector<std::size_t> order(gt_cloud->size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(count);
    std::sort(order.begin(), order.end());
    std::normal_distribution<double> noise(0.0, 0.05 * scene.extent);
    for (std::size_t i : order) {
      points.push_back(gt_cloud->means[i] + Vec3(noise(rng), noise(rng), noise(rng)));
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      points.push_back(scene.content_center + random_in_ball(rng, scene.content_radius));
    }
  }

  const auto nn = nearest_neighbor_scales(points);
  GaussianCloud cloud;
  cloud.reserve(count);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double s = nn[i] > 0.0 ? nn[i] : 0.1 * scene.content_radius;
    cloud.push_back(points[i], Vec3::Constant(std::log(s)), Quat(1.0, 0.0, 0.0, 0.0), logit(0.1), color);
  }
  return cloud;
}

void save_scene(const std::filesystem::path& dir, const Scene& scene) {
  scene.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + (dir / "images").string() + ": " + ec.message());

  nlohmann::json cams = nlohmann::json::array();
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Camera& c = scene.cameras[i];
    std::vector<double> rot(9), trans(3);
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) rot[static_cast<std::size_t>(r * 3 + k)] = c.rotation(r, k);
      trans[static_cast<std::size_t>(r)] = c.translation[r];
    }
    cams.push_back({{"view_id", c.view_id}, {"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
                    {"width", c.width}, {"height", c.height}, {"rotation", rot},
                    {"translation", trans}, {"split", to_string(scene.split[i])}});
    write_png(dir / "images" / (std::to_string(c.view_id) + ".png"), scene.gt_images[i]);
  }
  std::ofstream(dir / "cameras.json") << cams.dump(2) << "\n";

  nlohmann::json meta = {
      {"background", {scene.background[0], scene.background[1], scene.background[2]}},
      {"content_center", {scene.content_center[0], scene.content_center[1], scene.content_center[2]}},
      {"content_radius", scene.content_radius}};
  std::ofstream(dir / "scene.json") << meta.dump(2) << "\n";
}

Scene load_scene(const std::filesystem::path& dir) {
  std::ifstream in(dir / "cameras.json");
  if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / "cameras.json").string());
  Scene scene;
  try {
    const auto cams = nlohmann::json::parse(in);
    for (const auto& j : cams) {
      Camera c;
      c.view_id = j.at("view_id").get<int>();
      c.fx = j.at("fx").get<double>();
      c.fy = j.at("fy").get<double>();
      c.cx = j.at("cx").get<double>();
      c.cy = j.at("cy").get<double>();
      c.width = j.at("width").get<int>();
      c.height = j.at("height").get<int>();
      const auto rot = j.at("rotation").get<std::vector<double>>();
      const auto trans = j.at("translation").get<std::vector<double>>();
      if (rot.size() != 9 || trans.size() != 3) {
        throw Error(ErrorKind::Format, "camera rotation needs 9 values and translation 3");
      }
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c.rotation(r, k) = rot[static_cast<std::size_t>(r * 3 + k)];
        c.translation[r] = trans[static_cast<std::size_t>(r)];
      }
      scene.cameras.push_back(c);
      scene.split.push_back(parse_split(j.at("split").get<std::string>()));
      scene.gt_images.push_back(read_png(dir / "images" / (std::to_string(c.view_id) + ".png")));
    }

    const auto [center, radius] = camera_bounds(scene.cameras);
    scene.extent = radius;
    scene.content_center = center;
    scene.content_radius = 0.25 * radius;
    if (std::ifstream meta_in(dir / "scene.json"); meta_in) {
      const auto meta = nlohmann::json::parse(meta_in);
      if (meta.contains("background")) {
        const auto bg = meta.at("background").get<std::vector<double>>();
        if (bg.size() == 3) scene.background = {bg[0], bg[1], bg[2]};
      }
      if (meta.contains("content_center")) {
        const auto cc = meta.at("content_center").get<std::vector<double>>();
        if (cc.size() == 3) scene.content_center = {cc[0], cc[1], cc[2]};
      }
      if (meta.contains("content_radius")) scene.content_radius = meta.at("content_radius").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed scene json: ") + e.what());
  }
  scene.validate();
  return scene;
}

}  // namespace hgs
