#ifndef ELASTREC_SIMULATE_HPP
#define ELASTREC_SIMULATE_HPP

#include <cstdint>
#include <vector>

#include "elastrec/fem.hpp"
#include "elastrec/mesh.hpp"

namespace elastrec {

/// Random-ellipse lesion phantoms. Moduli in pascals; radii as a fraction of
/// the shorter domain side.
struct PhantomSpec {
  int lesion_count_min = 1;
  int lesion_count_max = 3;
  double radius_min = 0.05;
  double radius_max = 0.20;
  double background_min = 10e3;
  double background_max = 15e3;
  double lesion_min = 30e3;
  double lesion_max = 80e3;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument when the contrast ratio could leave [2, 8] or a
  /// lesion cannot fit inside the domain.
  void validate() const;
};

struct Lesion {
  Point center;
  double semi_major = 0.0;  ///< meters
  double semi_minor = 0.0;  ///< meters
  double angle = 0.0;       ///< radians
  double modulus = 0.0;     ///< pascals
  std::size_t center_node = 0;
};

struct Phantom {
  ElasticityField field;
  double background = 0.0;
  std::vector<Lesion> lesions;
};

Phantom generate_phantom_detailed(const Mesh& mesh, const PhantomSpec& spec);
ElasticityField generate_phantom(const Mesh& mesh, const PhantomSpec& spec);

/// Midpoint of the default background range, the ML starting field.
inline constexpr double kBackgroundMidpoint = 12.5e3;
inline constexpr double kDefaultExcitation = 1e-5;

struct ForwardSolution {
  DeformationField u;
  ForceVector f;  ///< K_total(E) u: reactions on the driven edge, ~0 elsewhere
  double relative_residual = 0.0;
};

/**
 * Solves the harmonic equilibrium with the top edge driven axially by
 * `excitation` meters (lateral motion held at zero); all other edges are
 * traction free.
 *
 * Throws ResonanceError if the constrained system cannot be factorized or
 * the solve residual exceeds 1e-8 relative.
 */
ForwardSolution forward_solve(const Mesh& mesh, const ElasticityField& E,
                              const MaterialParams& params, double excitation);

/// Noise std-dev giving the requested SNR against x; +inf dB yields 0.
double snr_to_sigma(const Vector& x, double snr_db);

struct MeasurementSet {
  DeformationField u_m;
  ForceVector f;
  double sigma_n = 0.0;
  double sigma_w = 0.0;
  ElasticityField E_true;  ///< evaluation only; empty when unknown
  std::uint64_t seed = 0;
};

/// u_m = u + n, f + w with i.i.d. Gaussian n, w calibrated from the SNRs.
MeasurementSet synthesize_measurements(const DeformationField& u, const ForceVector& f,
                                       double snr_u_db, double snr_f_db, std::uint64_t seed);

}  // namespace elastrec

#endif  // ELASTREC_SIMULATE_HPP
