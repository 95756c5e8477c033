#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "voila/gaze/track.hpp"
#include "voila/numeric.hpp"

namespace voila::gaze {

// H x W non-negative density grid, row-major. Row index is y, column is x.
class Heatmap {
 public:
  Heatmap() = default;
  Heatmap(std::size_t height, std::size_t width);
  Heatmap(std::size_t height, std::size_t width, std::vector<double> values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(std::size_t row, std::size_t col) { return values_[row * width_ + col]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double total_mass() const;
  // Scales to unit mass. Throws EmptyInputError when the grid carries no mass.
  Heatmap& normalize();

  bool operator==(const Heatmap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

constexpr double kUnitMassTolerance = 1e-6;

// Default blur width: 0.04 of the shorter side, roughly a foveal patch on a
// 224-pixel grid.
double default_sigma(std::size_t height, std::size_t width);

// Kernel truncation radius used by points_to_heatmap.
std::size_t kernel_radius(double sigma);

// Raw (unnormalized) isotropic Gaussian sampled at integer offsets in
// [-radius, radius]^2; entry (radius, radius) is the origin.
Matrix gaussian_kernel(double sigma, std::size_t radius);

// Nearest-pixel splat of every point, Gaussian blur truncated at ceil(3 sigma)
// with out-of-grid mass discarded, then normalized to unit mass.
Heatmap points_to_heatmap(const PointTrack& track, std::size_t height, std::size_t width,
                          double sigma);

// Pixel index a normalized coordinate splats to.
std::size_t nearest_pixel(double coord, std::size_t extent);

// Cumulative-histogram distance over the row-major flattening:
//   sum_i |F_i(P) - F_i(Q)| / sum_i F_i(P)
// Asymmetric: the first argument supplies the denominator.
double cumulative_emd(const Heatmap& p, const Heatmap& q);

Heatmap mean_heatmap(std::span<const Heatmap> maps);

// (patch_rows * patch_cols) x (patch_h * patch_w); patches row-major over the
// patch grid, pixels row-major inside each patch.
Matrix heatmap_to_patches(const Heatmap& map, std::size_t patch_rows, std::size_t patch_cols);

inline constexpr const char* kHeatmapFormat = "VHM1";

// "VHM1" file: magic, u32 LE height, u32 LE width, binary32 LE values.
std::vector<unsigned char> encode_vhm1(const Heatmap& map);
Heatmap decode_vhm1(std::span<const unsigned char> bytes);
void save_vhm1(const std::string& path, const Heatmap& map);
Heatmap load_vhm1(const std::string& path);

// 8-bit binary PGM scaled so the maximum maps to 255.
void save_pgm(const std::string& path, const Heatmap& map);

}  // namespace voila::gaze
