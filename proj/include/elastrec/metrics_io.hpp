#ifndef ELASTREC_METRICS_IO_HPP
#define ELASTREC_METRICS_IO_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "elastrec/mesh.hpp"

namespace elastrec {

enum class SampleType { f32le, f64le };

/**
 * Row-major, channel-interleaved image. Values are held as doubles; with
 * the default f32le encoding they are rounded to float on write, so only
 * float-representable data round-trips bit-exactly. Measurement rasters use
 * f64le to keep full precision.
 */
struct Raster {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 1;
  SampleType dtype = SampleType::f32le;
  std::string units;
  /// Optional divisor applied to the stored values (training pairs).
  std::optional<double> normalization;
  std::vector<double> data;

  std::size_t pixels() const { return rows * cols; }
  double at(std::size_t row, std::size_t col, std::size_t channel = 0) const {
    return data[(row * cols + col) * channels + channel];
  }
};

/// One-channel raster of a nodal field in mesh raster order.
Raster field_to_raster(const Mesh& mesh, const Vector& nodal, std::string units = "Pa",
                       SampleType dtype = SampleType::f32le);
/// Two-channel raster holding (lateral, axial) per node, i.e. the DOF vector.
Raster dofs_to_raster(const Mesh& mesh, const Vector& dofs, std::string units = "m",
                      SampleType dtype = SampleType::f64le);
Vector raster_values(const Raster& r);

/// ELRAS1 writer. Throws InvalidArgument for inconsistent or non-finite data
/// and IoError when the file cannot be written.
void write_raster(const std::filesystem::path& path, const Raster& r);
/// Throws BadMagicError, TruncatedFileError, ShapeError or FormatError.
Raster read_raster(const std::filesystem::path& path);

double rmse(const Raster& a, const Raster& b);
/// 20 log10(peak) - 10 log10(mse); +inf for identical rasters.
double psnr(const Raster& a, const Raster& b, double peak);
/// max / min over all samples; throws InvalidArgument when min <= 0.
double contrast_ratio(const Raster& r);

/// Values along a row of channel 0, as (col, value).
std::vector<std::pair<std::size_t, double>> cross_section(const Raster& r, std::size_t row);

}  // namespace elastrec

#endif  // ELASTREC_METRICS_IO_HPP
