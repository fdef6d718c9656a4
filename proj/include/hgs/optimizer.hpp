#pragma once

#include "hgs/backward.hpp"
#include "hgs/densify.hpp"
#include "hgs/gaussian_model.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace hgs {

struct LearningRates {
  double means = 1.6e-4;
  double scales = 5.0e-3;
  double rotations = 1.0e-3;
  double opacities = 5.0e-2;
  double colors = 2.5e-3;
};

/// Per-Gaussian Adam. Gaussians with an all-zero gradient are skipped entirely
/// (no moment decay, no step count), so each keeps its own bias-correction
/// clock.
class Adam {
 public:
  /// means(3) scales(3) rotation(4) opacity(1) color(3)
  static constexpr int kSlots = 14;
  using Slots = std::array<double, kSlots>;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;

  Adam() = default;
  explicit Adam(std::size_t n);

  std::size_t size() const { return steps_.size(); }

  /// Throws DimensionMismatch when the cloud, grads and state sizes differ.
  void step(GaussianCloud& cloud, const ParamGrads& grads, const LearningRates& lr);

  /// Rebuilds the state after grow/prune: copies of an existing Gaussian
  /// (kept, clone copy, first split child) inherit its moments and step count;
  /// second split children start from zero.
  void remap(const std::vector<Lineage>& lineage);

  const Slots& first_moment(std::size_t i) const { return m_[i]; }
  const Slots& second_moment(std::size_t i) const { return v_[i]; }
  std::int64_t steps(std::size_t i) const { return steps_[i]; }

  friend bool operator==(const Adam&, const Adam&) = default;

  void write(std::ostream& out) const;
  static Adam read(std::istream& in);

 private:
  std::vector<Slots> m_;
  std::vector<Slots> v_;
  std::vector<std::int64_t> steps_;
};

/// exp((1 - t) log(lr0) + t log(lr1)) with t = clamp(step / total, 0, 1).
double exp_decay(double lr0, double lr1, int step, int total);

}  // namespace hgs
