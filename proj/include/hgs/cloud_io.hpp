#pragma once

#include "hgs/gaussian_model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace hgs {

/// HGSCLOUD v1: "HGSCLOUD", u32 version, u64 count, then per Gaussian
/// mean[3], log_scale[3], rotation[4] (w first), raw_opacity, color[3], all
/// little-endian f32.
inline constexpr char kCloudMagic[8] = {'H', 'G', 'S', 'C', 'L', 'O', 'U', 'D'};
inline constexpr std::uint32_t kCloudVersion = 1;

void write_cloud(std::ostream& out, const GaussianCloud& cloud);
GaussianCloud read_cloud(std::istream& in);

void save_cloud(const std::filesystem::path& path, const GaussianCloud& cloud);
GaussianCloud load_cloud(const std::filesystem::path& path);

}  // namespace hgs
