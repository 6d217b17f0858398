#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"

#include "elastrec/denoise.hpp"
#include "elastrec/errors.hpp"
#include "elastrec/simulate.hpp"
#include "elastrec/statmodel.hpp"

using namespace elastrec;

namespace {

const MaterialParams kParams = MaterialParams::from_hz(90.0);

struct Fixture {
  Mesh mesh;
  Vector E_true;
  MeasurementSet m;
  SparseMatrix D;
  Vector b;

  explicit Fixture(std::size_t n, std::uint64_t seed = 1, double snr = 35.0)
      : mesh(build_grid_mesh(n, n, 0.1, 0.1)) {
    PhantomSpec spec;
    spec.seed = seed;
    E_true = generate_phantom(mesh, spec);
    const ForwardSolution s = forward_solve(mesh, E_true, kParams, kDefaultExcitation);
    m = synthesize_measurements(s.u, s.f, snr, snr, seed);
    D = assemble_D(mesh, m.u_m, kParams);
    b = effective_measurement(m.f, m.u_m, assemble_K_prime(mesh, kParams));
  }
};

}  // namespace

TEST_CASE("without displacement noise Gamma is a scaled identity") {
  const Mesh mesh = build_grid_mesh(3, 3, 0.1, 0.1);
  const Vector E = Vector::Constant(16, 2e4);
  const GammaOperator g = build_gamma(mesh, E, kParams, 0.5, 0.0);
  const Eigen::MatrixXd G(g.matrix());
  CHECK((G - 0.25 * Eigen::MatrixXd::Identity(32, 32)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.log_det() == doctest::Approx(32 * std::log(0.25)).epsilon(1e-13));
  CHECK(g.is_direct());
  CHECK(g.anchor() == E);
}

TEST_CASE("Gamma matches the dense covariance") {
  const Mesh mesh = build_grid_mesh(2, 2, 0.1, 0.1);
  std::mt19937_64 rng(3);
  const Vector E = oracle::random_vector(9, rng, 1e4, 5e4);
  const double sw = 0.3, sn = 2e-6;
  const GammaOperator g = build_gamma(mesh, E, kParams, sw, sn);
  const Eigen::MatrixXd K =
      oracle::dense_K(mesh, E, kParams.nu) + oracle::dense_K_prime(mesh, kParams.rho, kParams.omega);
  const Eigen::MatrixXd ref = sw * sw * Eigen::MatrixXd::Identity(18, 18) + sn * sn * K * K.transpose();
  const Eigen::MatrixXd G(g.matrix());
  CHECK((G - ref).cwiseAbs().maxCoeff() <= 1e-12 * ref.cwiseAbs().maxCoeff());
  CHECK((G - G.transpose()).cwiseAbs().maxCoeff() == 0.0);

  const double ref_logdet = 2.0 * Eigen::MatrixXd(ref.llt().matrixL()).diagonal().array().log().sum();
  CHECK(g.log_det() == doctest::Approx(ref_logdet).epsilon(1e-12));

  const Vector r = oracle::random_vector(18, rng);
  CHECK((g.solve(r) - ref.ldlt().solve(r)).norm() <= 1e-10 * ref.ldlt().solve(r).norm());
}

TEST_CASE("iterative covariance fallback agrees with the direct solve") {
  const Mesh mesh = build_grid_mesh(6, 6, 0.1, 0.1);
  std::mt19937_64 rng(4);
  const Vector E = oracle::random_vector(49, rng, 1e4, 5e4);
  const GammaOperator direct = build_gamma(mesh, E, kParams, 1.0, 1e-6);
  const GammaOperator iterative(direct.matrix(), E, /*direct_limit=*/10);
  CHECK_FALSE(iterative.is_direct());
  CHECK(std::isnan(iterative.log_det()));
  const Vector r = oracle::random_vector(98, rng);
  const Vector x = direct.solve(r);
  CHECK((iterative.solve(r) - x).norm() <= 1e-7 * x.norm());
}

TEST_CASE("covariance argument validation") {
  const Mesh mesh = build_grid_mesh(2, 2, 0.1, 0.1);
  const Vector E = Vector::Constant(9, 1e4);
  CHECK_THROWS_AS(build_gamma(mesh, E, kParams, 0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(build_gamma(mesh, E, kParams, 1.0, -1.0), InvalidArgument);
  SparseMatrix indefinite(2, 2);
  indefinite.insert(0, 0) = 1.0;
  indefinite.insert(1, 1) = -1.0;
  CHECK_THROWS_AS(GammaOperator{indefinite}, NumericalError);
}

TEST_CASE("sigma_w floor only applies when sigma_w is zero") {
  const Vector b = Vector::Constant(4, 3.0);
  CHECK(floored_sigma_w(0.7, b) == 0.7);
  CHECK(floored_sigma_w(0.0, b) == doctest::Approx(3e-12));
  CHECK(floored_sigma_w(0.0, Vector::Zero(4)) > 0.0);
}

TEST_CASE("effective measurement identities") {
  const Mesh mesh = build_grid_mesh(4, 4, 0.1, 0.1);
  const SparseMatrix Kp = assemble_K_prime(mesh, kParams);
  std::mt19937_64 rng(5);
  const Vector f = oracle::random_vector(50, rng);
  CHECK(effective_measurement(f, Vector::Zero(50), Kp) == f);

  // Noiseless data: b == D(u) E exactly up to round-off.
  PhantomSpec spec;
  spec.seed = 2;
  const Vector E = generate_phantom(mesh, spec);
  const ForwardSolution s = forward_solve(mesh, E, kParams, 1e-5);
  const Vector b = effective_measurement(s.f, s.u, Kp);
  const Vector DE = assemble_D(mesh, s.u, kParams) * E;
  CHECK((b - DE).norm() <= 1e-10 * b.norm());
  CHECK_THROWS_AS(effective_measurement(Vector::Zero(3), s.u, Kp), InvalidArgument);
}

TEST_CASE("data fidelity matches a dense evaluation") {
  Fixture fx(4);
  const GammaOperator gamma = build_gamma(fx.mesh, fx.E_true, kParams, fx.m.sigma_w, fx.m.sigma_n);
  std::mt19937_64 rng(6);
  const Vector E = oracle::random_vector(25, rng, 1e4, 6e4);
  const Eigen::MatrixXd G(gamma.matrix());
  const Eigen::MatrixXd Dd(fx.D);
  const Vector r = fx.b - Dd * E;
  const double ref = 0.5 * r.dot(G.ldlt().solve(r));
  CHECK(data_fidelity(E, fx.b, fx.D, gamma) == doctest::Approx(ref).epsilon(1e-10));
  const Vector gref = -Dd.transpose() * G.ldlt().solve(r);
  CHECK((data_fidelity_gradient(E, fx.b, fx.D, gamma) - gref).norm() <= 1e-9 * gref.norm());

  double value = 0.0;
  Vector grad;
  data_fidelity_and_gradient(E, fx.b, fx.D, gamma, value, grad);
  CHECK(value == doctest::Approx(ref).epsilon(1e-10));
  CHECK((grad - gref).norm() <= 1e-9 * gref.norm());
  CHECK_THROWS_AS(data_fidelity(Vector::Ones(3), fx.b, fx.D, gamma), InvalidArgument);
}

TEST_CASE("data fidelity gradient matches central differences") {
  Fixture fx(4, 3);
  const GammaOperator gamma = build_gamma(fx.mesh, fx.E_true, kParams, fx.m.sigma_w, fx.m.sigma_n);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector E = oracle::random_vector(25, rng, 1e4, 6e4);
    const Vector grad = data_fidelity_gradient(E, fx.b, fx.D, gamma);
    const double h = 1e-3 * E.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < E.size(); ++j) {
      Vector ep = E, em = E;
      ep[j] += h;
      em[j] -= h;
      const double fd =
          (data_fidelity(ep, fx.b, fx.D, gamma) - data_fidelity(em, fx.b, fx.D, gamma)) / (2 * h);
      CHECK(std::abs(fd - grad[j]) <= 1e-6 * std::abs(grad[j]));
    }
  }
}

TEST_CASE("data fidelity is convex along random segments") {
  Fixture fx(5, 4);
  const GammaOperator gamma = build_gamma(fx.mesh, fx.E_true, kParams, fx.m.sigma_w, fx.m.sigma_n);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector a = oracle::random_vector(36, rng, 1e4, 6e4);
    const Vector c = oracle::random_vector(36, rng, 1e4, 6e4);
    const double t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double mid = data_fidelity(t * a + (1 - t) * c, fx.b, fx.D, gamma);
    const double chord = t * data_fidelity(a, fx.b, fx.D, gamma) +
                         (1 - t) * data_fidelity(c, fx.b, fx.D, gamma);
    CHECK(mid <= chord * (1 + 1e-12));
  }
}

TEST_CASE("objective combines fidelity, log determinant and the prior") {
  Fixture fx(4, 5);
  const GammaOperator gamma = build_gamma(fx.mesh, fx.E_true, kParams, fx.m.sigma_w, fx.m.sigma_n);
  const Denoiser id = Denoiser::identity(5, 5);
  const Denoiser gauss = Denoiser::gaussian(1.0, 5, 5);
  const Vector& E = fx.E_true;
  const double g = data_fidelity(E, fx.b, fx.D, gamma);
  const double logdet_term = 0.5 * 25.0 * gamma.log_det();
  CHECK(objective(E, fx.b, fx.D, gamma, 0.0, gauss) == doctest::Approx(g + logdet_term));
  CHECK(objective(E, fx.b, fx.D, gamma, 3.0, id) == doctest::Approx(g + logdet_term));
  CHECK(objective(E, fx.b, fx.D, gamma, 2e-6, gauss) ==
        doctest::Approx(g + logdet_term + 2e-6 * red_value(gauss, E)));
  CHECK_THROWS_AS(objective(E, fx.b, fx.D, gamma, -1.0, gauss), InvalidArgument);
}
