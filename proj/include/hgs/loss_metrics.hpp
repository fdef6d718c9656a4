#pragma once

#include "hgs/image.hpp"

#include <vector>

namespace hgs {

inline constexpr int kSsimWindowRadius = 5;  // 11x11 window
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrSentinel = 99.0;

struct LossGrad {
  double value = 0.0;
  Image d_image;
};

/// Per-pixel SSIM, averaged over the three channels.
struct SsimMap {
  int width = 0;
  int height = 0;
  int window_radius = kSsimWindowRadius;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double mean() const;
};

/// Mean absolute error; gradient sign(img - gt) / (3HW), zero where equal.
LossGrad l1_loss(const Image& img, const Image& gt);

/// 11x11 Gaussian-window SSIM (sigma 1.5) with reflect padding.
SsimMap ssim_map(const Image& img, const Image& gt);

/// 1 - mean SSIM and its analytic gradient with respect to `img`.
LossGrad dssim_loss(const Image& img, const Image& gt, SsimMap* map_out = nullptr);

/// (1 - lambda) * L1 + lambda * (1 - mean SSIM). `map_out`, when given,
/// receives the SSIM map computed along the way.
LossGrad combined_loss(const Image& img, const Image& gt, double lambda_ssim,
                       SsimMap* map_out = nullptr);

/// 10 log10(1 / MSE), capped at the 99 dB sentinel.
double psnr(const Image& img, const Image& gt);

/// Normalized 1D Gaussian taps for the SSIM window.
std::vector<double> ssim_window_1d();

}  // namespace hgs
