#include "voila/gaze/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>

#include "voila/error.hpp"
#include "voila/io/binary.hpp"

namespace voila::gaze {

namespace {

constexpr char kVhmMagic[4] = {'V', 'H', 'M', '1'};

void require_unit_mass(const Heatmap& map, const char* op) {
  const double mass = map.total_mass();
  if (std::abs(mass - 1.0) > kUnitMassTolerance) {
    throw PreconditionError(std::string(op) + ": heatmap mass " + std::to_string(mass) +
                            " is not normalized");
  }
}

void require_same_dims(const Heatmap& a, const Heatmap& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(op) + ": heatmap dimensions differ (" +
                     std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                     std::to_string(b.height()) + "x" + std::to_string(b.width()) + ")");
  }
}

}  // namespace

Heatmap::Heatmap(std::size_t height, std::size_t width)
    : height_(height), width_(width), values_(height * width, 0.0) {}

Heatmap::Heatmap(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height_ * width_) {
    throw ShapeError("Heatmap: " + std::to_string(values_.size()) + " values for a " +
                     std::to_string(height_) + "x" + std::to_string(width_) + " grid");
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw FormatError("Heatmap: negative or non-finite value");
  }
}

double Heatmap::total_mass() const {
  double total = 0.0;
  for (double v : values_) total += v;
  return total;
}

Heatmap& Heatmap::normalize() {
  const double mass = total_mass();
  if (!(mass > 0.0)) throw EmptyInputError("Heatmap::normalize: grid carries no mass");
  for (auto& v : values_) v /= mass;
  return *this;
}

double default_sigma(std::size_t height, std::size_t width) {
  return 0.04 * static_cast<double>(std::min(height, width));
}

std::size_t kernel_radius(double sigma) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3.0 * sigma)));
}

Matrix gaussian_kernel(double sigma, std::size_t radius) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_kernel: sigma must be positive");
  if (radius < 1) throw ParameterError("gaussian_kernel: radius must be >= 1");
  const std::size_t side = 2 * radius + 1;
  const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
  const double denom = 2.0 * sigma * sigma;
  Matrix k(side, side);
  const auto r = static_cast<long>(radius);
  for (long dy = -r; dy <= r; ++dy) {
    for (long dx = -r; dx <= r; ++dx) {
      const double d2 = static_cast<double>(dx * dx + dy * dy);
      k(static_cast<std::size_t>(dy + r), static_cast<std::size_t>(dx + r)) =
          norm * std::exp(-d2 / denom);
    }
  }
  return k;
}

std::size_t nearest_pixel(double coord, std::size_t extent) {
  const double scaled = std::floor(std::clamp(coord, 0.0, 1.0) * static_cast<double>(extent));
  return std::min(static_cast<std::size_t>(scaled), extent - 1);
}

Heatmap points_to_heatmap(const PointTrack& track, std::size_t height, std::size_t width,
                          double sigma) {
  if (track.empty()) throw EmptyInputError("points_to_heatmap: track has no points");
  if (height < 8 || width < 8) throw ParameterError("points_to_heatmap: grid must be at least 8x8");
  const std::size_t radius = kernel_radius(sigma);
  const Matrix kernel = gaussian_kernel(sigma, radius);

  // Occupied pixels in row-major order so accumulation order is fixed.
  std::map<std::size_t, double> splats;
  for (const auto& p : track.points) {
    splats[nearest_pixel(p.y, height) * width + nearest_pixel(p.x, width)] += 1.0;
  }

  Heatmap map(height, width);
  const auto r = static_cast<long>(radius);
  const auto h = static_cast<long>(height);
  const auto w = static_cast<long>(width);
  for (const auto& [index, count] : splats) {
    const auto cy = static_cast<long>(index / width);
    const auto cx = static_cast<long>(index % width);
    for (long dy = -r; dy <= r; ++dy) {
      const long y = cy + dy;
      if (y < 0 || y >= h) continue;
      for (long dx = -r; dx <= r; ++dx) {
        const long x = cx + dx;
        if (x < 0 || x >= w) continue;
        map.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) +=
            count * kernel(static_cast<std::size_t>(dy + r), static_cast<std::size_t>(dx + r));
      }
    }
  }
  map.normalize();
  return map;
}

double cumulative_emd(const Heatmap& p, const Heatmap& q) {
  require_same_dims(p, q, "cumulative_emd");
  require_unit_mass(p, "cumulative_emd");
  require_unit_mass(q, "cumulative_emd");
  const auto pv = p.values();
  const auto qv = q.values();
  double fp = 0.0;
  double fq = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    fp += pv[i];
    fq += qv[i];
    numerator += std::abs(fp - fq);
    denominator += fp;
  }
  return numerator / denominator;
}

Heatmap mean_heatmap(std::span<const Heatmap> maps) {
  if (maps.empty()) throw EmptyInputError("mean_heatmap: no heatmaps");
  Heatmap out(maps.front().height(), maps.front().width());
  for (const auto& m : maps) {
    require_same_dims(maps.front(), m, "mean_heatmap");
    require_unit_mass(m, "mean_heatmap");
    const auto v = m.values();
    auto o = out.values();
    for (std::size_t i = 0; i < v.size(); ++i) o[i] += v[i];
  }
  const double n = static_cast<double>(maps.size());
  for (auto& v : out.values()) v /= n;
  out.normalize();
  return out;
}

Matrix heatmap_to_patches(const Heatmap& map, std::size_t patch_rows, std::size_t patch_cols) {
  if (patch_rows == 0 || patch_cols == 0 || map.height() % patch_rows != 0 ||
      map.width() % patch_cols != 0) {
    throw ShapeError("heatmap_to_patches: " + std::to_string(map.height()) + "x" +
                     std::to_string(map.width()) + " grid does not split into " +
                     std::to_string(patch_rows) + "x" + std::to_string(patch_cols) + " patches");
  }
  const std::size_t ph = map.height() / patch_rows;
  const std::size_t pw = map.width() / patch_cols;
  Matrix out(patch_rows * patch_cols, ph * pw);
  for (std::size_t pr = 0; pr < patch_rows; ++pr) {
    for (std::size_t pc = 0; pc < patch_cols; ++pc) {
      auto row = out.row(pr * patch_cols + pc);
      for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x) row[y * pw + x] = map.at(pr * ph + y, pc * pw + x);
    }
  }
  return out;
}

std::vector<unsigned char> encode_vhm1(const Heatmap& map) {
  io::Bytes out(std::begin(kVhmMagic), std::end(kVhmMagic));
  out.reserve(12 + 4 * map.size());
  io::put_u32_le(out, static_cast<std::uint32_t>(map.height()));
  io::put_u32_le(out, static_cast<std::uint32_t>(map.width()));
  for (double v : map.values()) io::put_f32_le(out, static_cast<float>(v));
  return out;
}

Heatmap decode_vhm1(std::span<const unsigned char> bytes) {
  io::Reader in(bytes);
  const auto magic = in.take(4);
  if (std::memcmp(magic.data(), kVhmMagic, 4) != 0) throw FormatError("not a VHM1 heatmap file");
  const std::size_t height = in.u32();
  const std::size_t width = in.u32();
  if (in.remaining() != 4 * height * width) {
    throw FormatError("VHM1 payload is " + std::to_string(in.remaining()) + " bytes, expected " +
                      std::to_string(4 * height * width));
  }
  std::vector<double> values(height * width);
  for (auto& v : values) v = static_cast<double>(in.f32());
  return Heatmap(height, width, std::move(values));
}

void save_vhm1(const std::string& path, const Heatmap& map) {
  io::write_file(path, encode_vhm1(map));
}

Heatmap load_vhm1(const std::string& path) { return decode_vhm1(io::read_file(path)); }

void save_pgm(const std::string& path, const Heatmap& map) {
  const std::string header =
      "P5\n" + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n255\n";
  io::Bytes out(header.begin(), header.end());
  const auto values = map.values();
  const double peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  for (double v : values) {
    const double scaled = peak > 0.0 ? std::round(255.0 * v / peak) : 0.0;
    out.push_back(static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0)));
  }
  io::write_file(path, out);
}

}  // namespace voila::gaze
