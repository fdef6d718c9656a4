#include "hgs/cli.hpp"

#include "hgs/error.hpp"
#include "hgs/image.hpp"
#include "hgs/renderer.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>

namespace hgs::cli {

namespace {

std::vector<DiagPoint> annotate(const std::vector<ViewPoint>& points, const RenderOutput& render,
                                const SsimMap& ssim) {
  std::vector<DiagPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    out.push_back({p.gaussian, p.x, p.y, ssim.at(p.x, p.y), render.pixel_counts[p.gaussian]});
  }
  return out;
}

Image overlay(const Image& base, const std::vector<DiagPoint>& points, const Vec3& color) {
  Image img = base;
  for (const auto& p : points) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx != 0 && dy != 0) continue;
        const int x = p.x + dx, y = p.y + dy;
        if (x >= 0 && y >= 0 && x < img.width() && y < img.height()) img.set_pixel(x, y, color);
      }
    }
  }
  return img;
}

void write_points_csv(const std::filesystem::path& path, const std::vector<DiagPoint>& points) {
  std::ofstream f(path);
  f << "gaussian,x,y,ssim,pixel_count\n";
  for (const auto& p : points) {
    f << p.gaussian << ',' << p.x << ',' << p.y << ',' << format_fixed(p.ssim) << ',' << p.pixel_count << '\n';
  }
}

}  // namespace

Vec3 index_color(std::int32_t index) {
  if (index < 0) return Vec3::Zero();
  std::uint32_t h = static_cast<std::uint32_t>(index) * 2654435761u;
  h ^= h >> 15;
  h *= 2246822519u;
  h ^= h >> 13;
  // Keep every channel away from black so -1 stays distinguishable.
  return {0.2 + 0.8 * ((h & 0xffu) / 255.0), 0.2 + 0.8 * (((h >> 8) & 0xffu) / 255.0),
          0.2 + 0.8 * (((h >> 16) & 0xffu) / 255.0)};
}

DiagBundle make_diag(const GaussianCloud& cloud, const Scene& scene, int view_id,
                     const PolicyConfig& cfg, double lambda_ssim) {
  const std::size_t v = scene.index_of_view(view_id);
  const Camera& cam = scene.cameras[v];
  DiagBundle b;
  b.view_id = view_id;
  b.render = render_view(cloud, cam, scene.background);
  const LossGrad loss = combined_loss(b.render.image, scene.gt_images[v], lambda_ssim);
  b.ssim = ssim_map(b.render.image, scene.gt_images[v]);
  b.grads = backward_view(cloud, cam, b.render, loss.d_image);
  const auto means = projected_means(b.render);
  b.over_large = annotate(over_large_points(b.render, means, cfg), b.render, b.ssim);
  b.hard = annotate(hard_points(b.render, means, b.ssim, cfg), b.render, b.ssim);
  return b;
}

void write_diag(const std::filesystem::path& dir, const DiagBundle& b) {
  std::filesystem::create_directories(dir);
  const int w = b.render.width(), h = b.render.height();

  Image index_map(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      index_map.set_pixel(x, y, index_color(b.render.rendered_index[static_cast<std::size_t>(y) * w + x]));
    }
  }
  write_png(dir / "rendered_index.png", index_map, false);
  {
    std::ofstream raw(dir / "rendered_index.u32", std::ios::binary);
    for (std::int32_t idx : b.render.rendered_index) {
      const auto u = static_cast<std::uint32_t>(idx);
      const char bytes[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                             static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
      raw.write(bytes, 4);
    }
  }

  Image ssim_img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double s = std::clamp(b.ssim.at(x, y), 0.0, 1.0);
      ssim_img.set_pixel(x, y, Vec3::Constant(s));
    }
  }
  write_png(dir / "ssim.png", ssim_img, false);

  write_png(dir / "render.png", b.render.image);
  write_png(dir / "over_large.png", overlay(b.render.image, b.over_large, Vec3(1.0, 0.0, 0.0)));
  write_png(dir / "hard.png", overlay(b.render.image, b.hard, Vec3(1.0, 1.0, 0.0)));
  write_points_csv(dir / "over_large.csv", b.over_large);
  write_points_csv(dir / "hard.csv", b.hard);

  std::ofstream g(dir / "grads.csv");
  g << "gaussian,view_id,visible,pixel_count,grad_x,grad_y,grad_norm\n";
  for (std::size_t i = 0; i < b.grads.size(); ++i) {
    const Vec2& v = b.grads.viewspace_grads[i];
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.9e,%.9e,%.9e", v.x(), v.y(), v.norm());
    g << i << ',' << b.view_id << ',' << (b.render.visible[i] ? 1 : 0) << ',' << b.render.pixel_counts[i] << ',' << buf << '\n';
  }
}

}  // namespace hgs::cli
