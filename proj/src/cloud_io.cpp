#include "hgs/cloud_io.hpp"

#include "hgs/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace hgs {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), b.size());
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), b.size());
}

void put_f32(std::ostream& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint64_t get_le(std::istream& in, int bytes) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), bytes);
  if (!in) throw Error(ErrorKind::Format, "HGSCLOUD stream truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f32(std::istream& in) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, 4)));
}

}  // namespace

void write_cloud(std::ostream& out, const GaussianCloud& cloud) {
  cloud.validate();
  out.write(kCloudMagic, sizeof(kCloudMagic));
  put_u32(out, kCloudVersion);
  put_u64(out, cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) put_f32(out, cloud.means[i][k]);
    for (int k = 0; k < 3; ++k) put_f32(out, cloud.log_scales[i][k]);
    for (int k = 0; k < 4; ++k) put_f32(out, cloud.rotations[i][k]);
    put_f32(out, cloud.raw_opacities[i]);
    for (int k = 0; k < 3; ++k) put_f32(out, cloud.colors[i][k]);
  }
}

GaussianCloud read_cloud(std::istream& in) {
  char magic[sizeof(kCloudMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCloudMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::Format, "missing HGSCLOUD magic");
  }
  const auto version = static_cast<std::uint32_t>(get_le(in, 4));
  if (version != kCloudVersion) {
    throw Error(ErrorKind::Format, "unsupported HGSCLOUD version " + std::to_string(version));
  }
  const std::uint64_t count = get_le(in, 8);
  GaussianCloud cloud;
  cloud.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t i = 0; i < count; ++i) {
    Vec3 mean, log_scale, color;
    Quat rot;
    for (int k = 0; k < 3; ++k) mean[k] = get_f32(in);
    for (int k = 0; k < 3; ++k) log_scale[k] = get_f32(in);
    for (int k = 0; k < 4; ++k) rot[k] = get_f32(in);
    const double raw = get_f32(in);
    for (int k = 0; k < 3; ++k) color[k] = get_f32(in);
    cloud.push_back(mean, log_scale, rot, raw, color);
  }
  return cloud;
}

void save_cloud(const std::filesystem::path& path, const GaussianCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_cloud(out, cloud);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

GaussianCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_cloud(in);
}

}  // namespace hgs
