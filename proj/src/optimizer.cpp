#include "hgs/optimizer.hpp"

#include "hgs/binary_io.hpp"
#include "hgs/error.hpp"

#include <algorithm>
#include <cmath>

namespace hgs {

Adam::Adam(std::size_t n) : m_(n, Slots{}), v_(n, Slots{}), steps_(n, 0) {}

void Adam::step(GaussianCloud& cloud, const ParamGrads& grads, const LearningRates& lr) {
  const std::size_t n = size();
  if (cloud.size() != n || grads.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "optimizer state, cloud and gradients differ in size");
  }
  for (std::size_t i = 0; i < n; ++i) {
    Slots g;
    for (int a = 0; a < 3; ++a) g[a] = grads.d_means[i][a];
    for (int a = 0; a < 3; ++a) g[3 + a] = grads.d_log_scales[i][a];
    for (int a = 0; a < 4; ++a) g[6 + a] = grads.d_rotations[i][a];
    g[10] = grads.d_raw_opacities[i];
    for (int a = 0; a < 3; ++a) g[11 + a] = grads.d_colors[i][a];
    if (std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; })) continue;

    const std::int64_t t = ++steps_[i];
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    Slots delta;
    for (int s = 0; s < kSlots; ++s) {
      m_[i][s] = beta1 * m_[i][s] + (1.0 - beta1) * g[s];
      v_[i][s] = beta2 * v_[i][s] + (1.0 - beta2) * g[s] * g[s];
      delta[s] = (m_[i][s] / bc1) / (std::sqrt(v_[i][s] / bc2) + eps);
    }
    for (int a = 0; a < 3; ++a) cloud.means[i][a] -= lr.means * delta[a];
    for (int a = 0; a < 3; ++a) cloud.log_scales[i][a] -= lr.scales * delta[3 + a];
    for (int a = 0; a < 4; ++a) cloud.rotations[i][a] -= lr.rotations * delta[6 + a];
    cloud.raw_opacities[i] -= lr.opacities * delta[10];
    for (int a = 0; a < 3; ++a) cloud.colors[i][a] -= lr.colors * delta[11 + a];
  }
}

void Adam::remap(const std::vector<Lineage>& lineage) {
  Adam next(lineage.size());
  next.beta1 = beta1;
  next.beta2 = beta2;
  next.eps = eps;
  for (std::size_t j = 0; j < lineage.size(); ++j) {
    const Lineage& l = lineage[j];
    if (l.parent >= size()) throw Error(ErrorKind::IndexOutOfRange, "lineage parent out of range");
    if (l.origin == Origin::SplitSecond) continue;
    next.m_[j] = m_[l.parent];
    next.v_[j] = v_[l.parent];
    next.steps_[j] = steps_[l.parent];
  }
  *this = std::move(next);
}

void Adam::write(std::ostream& out) const {
  bin::put_f64(out, beta1);
  bin::put_f64(out, beta2);
  bin::put_f64(out, eps);
  bin::put_u64(out, size());
  for (std::size_t i = 0; i < size(); ++i) {
    bin::put_i64(out, steps_[i]);
    for (double x : m_[i]) bin::put_f64(out, x);
    for (double x : v_[i]) bin::put_f64(out, x);
  }
}

Adam Adam::read(std::istream& in) {
  const double b1 = bin::get_f64(in);
  const double b2 = bin::get_f64(in);
  const double e = bin::get_f64(in);
  const std::uint64_t n = bin::get_u64(in);
  if (n > (1ull << 32)) throw Error(ErrorKind::Format, "optimizer state size is implausible");
  Adam a(static_cast<std::size_t>(n));
  a.beta1 = b1;
  a.beta2 = b2;
  a.eps = e;
  for (std::size_t i = 0; i < n; ++i) {
    a.steps_[i] = bin::get_i64(in);
    for (double& x : a.m_[i]) x = bin::get_f64(in);
    for (double& x : a.v_[i]) x = bin::get_f64(in);
  }
  return a;
}

double exp_decay(double lr0, double lr1, int step, int total) {
  const double t = total <= 0 ? 1.0 : std::clamp(static_cast<double>(step) / total, 0.0, 1.0);
  return std::exp((1.0 - t) * std::log(lr0) + t * std::log(lr1));
}

}  // namespace hgs
