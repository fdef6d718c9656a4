#include "hgs/loss_metrics.hpp"

#include "hgs/error.hpp"

#include <cmath>
#include <numeric>

namespace hgs {
namespace {

void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::DimensionMismatch, "image dimensions differ");
  }
}

int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    i = i < 0 ? -i : 2 * (n - 1) - i;
  }
  return i;
}

/// Single-channel plane with separable reflect-padded filtering and its adjoint.
struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;

  Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height, 0.0) {}
  double& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
  double operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane blur(const Plane& in, const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size() / 2);
  Plane tmp(in.w, in.h), out(in.w, in.h);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += taps[k + r] * in(reflect(x + k, in.w), y);
      tmp(x, y) = s;
    }
  }
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += taps[k + r] * tmp(x, reflect(y + k, in.h));
      out(x, y) = s;
    }
  }
  return out;
}

/// Transpose of blur(): scatters each output back onto its reflected taps.
Plane blur_adjoint(const Plane& in, const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size() / 2);
  Plane tmp(in.w, in.h), out(in.w, in.h);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      for (int k = -r; k <= r; ++k) tmp(x, reflect(y + k, in.h)) += taps[k + r] * in(x, y);
    }
  }
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      for (int k = -r; k <= r; ++k) out(reflect(x + k, in.w), y) += taps[k + r] * tmp(x, y);
    }
  }
  return out;
}

Plane channel(const Image& img, int c) {
  Plane p(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) p(x, y) = img.at(x, y, c);
  }
  return p;
}

Plane product(const Plane& a, const Plane& b) {
  Plane p(a.w, a.h);
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = a.v[i] * b.v[i];
  return p;
}

struct ChannelStats {
  Plane mu_x, mu_y, e_xx, e_yy, e_xy;
};

ChannelStats channel_stats(const Plane& x, const Plane& y, const std::vector<double>& taps) {
  return {blur(x, taps), blur(y, taps), blur(product(x, x), taps), blur(product(y, y), taps),
          blur(product(x, y), taps)};
}

void check_window(const Image& img) {
  const int size = 2 * kSsimWindowRadius + 1;
  if (img.width() < size || img.height() < size) {
    throw Error(ErrorKind::InvalidInput, "image smaller than the 11x11 SSIM window");
  }
}

}  // namespace

std::vector<double> ssim_window_1d() {
  std::vector<double> taps(2 * kSsimWindowRadius + 1);
  for (int k = -kSsimWindowRadius; k <= kSsimWindowRadius; ++k) {
    taps[k + kSsimWindowRadius] = std::exp(-(k * k) / (2.0 * kSsimSigma * kSsimSigma));
  }
  const double sum = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (double& t : taps) t /= sum;
  return taps;
}

double SsimMap::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

LossGrad l1_loss(const Image& img, const Image& gt) {
  require_same_shape(img, gt);
  LossGrad out{0.0, Image(img.width(), img.height())};
  const auto& a = img.data();
  const auto& b = gt.data();
  const double scale = 1.0 / static_cast<double>(a.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += std::abs(d);
    out.d_image.data()[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
  }
  out.value = sum * scale;
  return out;
}

SsimMap ssim_map(const Image& img, const Image& gt) {
  require_same_shape(img, gt);
  check_window(img);
  const auto taps = ssim_window_1d();
  SsimMap map;
  map.width = img.width();
  map.height = img.height();
  map.values.assign(img.pixel_count(), 0.0);
  for (int c = 0; c < 3; ++c) {
    const ChannelStats st = channel_stats(channel(img, c), channel(gt, c), taps);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      const double mx = st.mu_x.v[i], my = st.mu_y.v[i];
      const double vx = st.e_xx.v[i] - mx * mx;
      const double vy = st.e_yy.v[i] - my * my;
      const double cxy = st.e_xy.v[i] - mx * my;
      const double s = ((2.0 * mx * my + kSsimC1) * (2.0 * cxy + kSsimC2)) /
                       ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
      map.values[i] += s;
    }
  }
  for (double& v : map.values) v /= 3.0;
  return map;
}

LossGrad dssim_loss(const Image& img, const Image& gt, SsimMap* map_out) {
  require_same_shape(img, gt);
  check_window(img);
  const auto taps = ssim_window_1d();
  const int w = img.width(), h = img.height();
  const double scale = 1.0 / (3.0 * static_cast<double>(img.pixel_count()));

  SsimMap map;
  map.width = w;
  map.height = h;
  map.values.assign(img.pixel_count(), 0.0);
  LossGrad out{0.0, Image(w, h)};

  for (int c = 0; c < 3; ++c) {
    const Plane x = channel(img, c);
    const Plane y = channel(gt, c);
    const ChannelStats st = channel_stats(x, y, taps);
    // dL/d(mu_x), dL/d(E[x^2]), dL/d(E[xy]) at each window center.
    Plane g_mu(w, h), g_xx(w, h), g_xy(w, h);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      const double mx = st.mu_x.v[i], my = st.mu_y.v[i];
      const double a1 = 2.0 * mx * my + kSsimC1;
      const double a2 = 2.0 * (st.e_xy.v[i] - mx * my) + kSsimC2;
      const double b1 = mx * mx + my * my + kSsimC1;
      const double b2 = st.e_xx.v[i] - mx * mx + st.e_yy.v[i] - my * my + kSsimC2;
      const double s = (a1 * a2) / (b1 * b2);
      map.values[i] += s;

      const double up = -scale;  // d(1 - mean S)/dS
      const double ds_dmx = (2.0 * my * (a2 - a1)) / (b1 * b2) - 2.0 * mx * s * (1.0 / b1 - 1.0 / b2);
      const double ds_dxx = -s / b2;
      const double ds_dxy = 2.0 * a1 / (b1 * b2);
      g_mu.v[i] = up * ds_dmx;
      g_xx.v[i] = up * ds_dxx;
      g_xy.v[i] = up * ds_dxy;
    }
    const Plane b_mu = blur_adjoint(g_mu, taps);
    const Plane b_xx = blur_adjoint(g_xx, taps);
    const Plane b_xy = blur_adjoint(g_xy, taps);
    for (int py = 0; py < h; ++py) {
      for (int px = 0; px < w; ++px) {
        out.d_image.at(px, py, c) = b_mu(px, py) + 2.0 * x(px, py) * b_xx(px, py) + y(px, py) * b_xy(px, py);
      }
    }
  }
  for (double& v : map.values) v /= 3.0;
  out.value = 1.0 - map.mean();
  if (map_out) *map_out = std::move(map);
  return out;
}

LossGrad combined_loss(const Image& img, const Image& gt, double lambda_ssim, SsimMap* map_out) {
  if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "lambda_ssim must lie in [0, 1]");
  }
  LossGrad l1 = l1_loss(img, gt);
  if (lambda_ssim == 0.0 && !map_out) return l1;
  LossGrad ds = dssim_loss(img, gt, map_out);
  LossGrad out{(1.0 - lambda_ssim) * l1.value + lambda_ssim * ds.value, Image(img.width(), img.height())};
  if (lambda_ssim == 0.0) {
    out.value = l1.value;
    out.d_image = std::move(l1.d_image);
    return out;
  }
  auto& d = out.d_image.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = (1.0 - lambda_ssim) * l1.d_image.data()[i] + lambda_ssim * ds.d_image.data()[i];
  }
  return out;
}

double psnr(const Image& img, const Image& gt) {
  require_same_shape(img, gt);
  const auto& a = img.data();
  const auto& b = gt.data();
  if (a.empty()) return kPsnrSentinel;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrSentinel;
  return std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / mse));
}

}  // namespace hgs
