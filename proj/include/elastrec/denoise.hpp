#ifndef ELASTREC_DENOISE_HPP
#define ELASTREC_DENOISE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "elastrec/mesh.hpp"

namespace elastrec {

/// Default pascal-to-network-unit scale for elasticity rasters.
inline constexpr double kDefaultNormalization = 1e5;

enum class Activation { identity, relu };

struct ConvLayer {
  int kh = 0;
  int kw = 0;
  int c_in = 0;
  int c_out = 0;
  std::vector<float> kernel;  ///< [kh][kw][c_in][c_out], row-major
  std::vector<float> bias;    ///< [c_out]
  Activation activation = Activation::identity;
};

struct NetworkDescriptor {
  std::vector<ConvLayer> layers;
  bool residual = false;  ///< output = input - net(input)
  double normalization = kDefaultNormalization;

  /// Throws ShapeError on channel chaining, kernel parity, or blob size problems.
  void validate() const;
};

/// Reads an ELNET1 file. Throws BadMagicError, TruncatedFileError or
/// ShapeError for the corresponding defects, IoError if unreadable.
NetworkDescriptor load_network(const std::filesystem::path& path);
void save_network(const std::filesystem::path& path, const NetworkDescriptor& net);

struct GaussianKernel {
  double sigma = 0.0;  ///< pixels; 0 gives the identity
};
struct MedianFilter {
  int window = 3;  ///< odd
};
struct IdentityMap {};

/**
 * A denoiser C acting on a rows x cols raster, with circular boundary handling.
 *
 * Pixel values handed to `apply` are in the caller's units. `denoise_field`
 * divides by `normalization()` before a CNN and multiplies back afterwards;
 * the classical filters are scale equivariant and skip that round trip.
 */
class Denoiser {
 public:
  static Denoiser identity(std::size_t rows, std::size_t cols);
  static Denoiser gaussian(double sigma, std::size_t rows, std::size_t cols);
  static Denoiser median(int window, std::size_t rows, std::size_t cols);
  static Denoiser cnn(NetworkDescriptor net, std::size_t rows, std::size_t cols);

  /// "identity", "gaussian:SIGMA", "median:W" or "cnn:PATH".
  static Denoiser parse(const std::string& spec, std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double normalization() const { return normalization_; }
  bool is_identity() const { return std::holds_alternative<IdentityMap>(kind_); }
  bool is_cnn() const { return std::holds_alternative<NetworkDescriptor>(kind_); }
  std::string describe() const;

  /// Throws InvalidArgument on a size mismatch or non-finite input.
  std::vector<double> apply(std::span<const double> raster) const;

  /// C(E) for a nodal field; nodal order is raster order.
  Vector denoise_field(const Vector& E) const;

  /// Dense weights of the gaussian kernel, (2r+1)^2 entries, empty otherwise.
  const std::vector<double>& kernel_weights() const { return weights_; }
  int kernel_radius() const { return radius_; }

 private:
  using Kind = std::variant<IdentityMap, GaussianKernel, MedianFilter, NetworkDescriptor>;
  Denoiser(Kind kind, std::size_t rows, std::size_t cols);

  std::vector<double> apply_gaussian(std::span<const double> x) const;
  std::vector<double> apply_median(std::span<const double> x, int window) const;
  std::vector<double> apply_cnn(std::span<const double> x, const NetworkDescriptor& net) const;

  Kind kind_;
  std::size_t rows_;
  std::size_t cols_;
  double normalization_ = 1.0;
  std::vector<double> weights_;
  int radius_ = 0;
};

/// E - C(E). The denoiser's derivative is never formed.
Vector red_gradient(const Denoiser& denoiser, const Vector& E);

/// 0.5 <E, E - C(E)>.
double red_value(const Denoiser& denoiser, const Vector& E);

struct RedConditionReport {
  /// max over samples and c of |C(cx) - cC(x)| / |cC(x)|
  double homogeneity_residual = 0.0;
  /// largest power-iteration estimate of |dC(x)| over samples
  double jacobian_norm = 0.0;
  /// max over samples of |<J a, b> - <a, J b>| / (|J a||b| + |a||J b|)
  double symmetry_residual = 0.0;
  std::size_t samples = 0;
};

RedConditionReport check_red_conditions(const Denoiser& denoiser,
                                        const std::vector<std::vector<double>>& samples,
                                        const std::vector<double>& c_values,
                                        std::uint64_t seed = 0, int power_iterations = 50);

}  // namespace elastrec

#endif  // ELASTREC_DENOISE_HPP
