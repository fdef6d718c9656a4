#pragma once

#include "hgs/camera.hpp"
#include "hgs/gaussian_model.hpp"
#include "hgs/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hgs {

enum class Split { Train, Test };

const char* to_string(Split split);
Split parse_split(const std::string& s);

struct Scene {
  std::vector<Camera> cameras;
  std::vector<Image> gt_images;
  std::vector<Split> split;
  Vec3 background = Vec3::Zero();
  /// Radius of the camera-center bounding sphere.
  double extent = 1.0;
  /// Sphere enclosing the scene content, used for random initialization.
  Vec3 content_center = Vec3::Zero();
  double content_radius = 1.0;

  std::size_t size() const { return cameras.size(); }
  std::vector<std::size_t> indices(Split which) const;
  /// Position of the camera with this view_id; throws IndexOutOfRange if absent.
  std::size_t index_of_view(int view_id) const;

  /// Throws InvalidSpec when the arrays disagree, an image does not match its
  /// camera, view ids repeat, or fewer than two train views exist.
  void validate() const;
};

/// Center and radius of the bounding sphere of the camera centers.
std::pair<Vec3, double> camera_bounds(const std::vector<Camera>& cameras);

struct SceneSpec {
  int width = 64;
  int height = 64;
  int views = 16;
  /// Every view whose index is a multiple of this is a test view.
  int test_every = 4;
  double ring_radius = 4.0;
  /// Cameras alternate between +/- this elevation above the ring plane.
  double elevation_deg = 15.0;
  double fov_deg = 40.0;
  int gt_gaussians = 300;
  double min_scale = 0.02;
  double max_scale = 0.12;
  Vec3 background = Vec3::Zero();
};

struct SyntheticScene {
  Scene scene;
  GaussianCloud gt_cloud;
};

/// Ring of cameras looking at the origin and a random ground-truth cloud in the
/// unit ball; gt images are renders of that cloud. Deterministic in `seed`.
SyntheticScene gen_synthetic(const SceneSpec& spec, std::uint64_t seed);

enum class InitMode { GtSubsample, RandomBall };

const char* to_string(InitMode mode);
InitMode parse_init_mode(const std::string& s);

/// Seeds an initial cloud: perturbed ground-truth means (gray) or uniform
/// samples in the content sphere, isotropic scale = mean distance to the three
/// nearest seeds, opacity 0.1.
GaussianCloud init_cloud(const Scene& scene, std::size_t count, InitMode mode, std::uint64_t seed,
                         const GaussianCloud* gt_cloud = nullptr);

/// Mean distance from each point to its (up to) three nearest neighbours.
std::vector<double> nearest_neighbor_scales(const std::vector<Vec3>& points);

/// cameras.json + images/<view_id>.png + scene.json.
void save_scene(const std::filesystem::path& dir, const Scene& scene);
Scene load_scene(const std::filesystem::path& dir);

}  // namespace hgs
