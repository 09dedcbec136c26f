#include "doctest.h"

#include "bscaling/core.hpp"
#include "bscaling/error.hpp"
#include "bscaling/inference.hpp"
#include "bscaling/simlab.hpp"
#include "test_util.hpp"

using namespace bscaling;
using namespace testutil;

namespace {

template <class Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Usage;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Two measurements already on the unit interval.
Matrix toy_unit_data(std::mt19937_64& rng, Index n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> e(0.0, 0.5);
  Matrix w(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double y = u(rng);
    w(i, 0) = logistic(4.0 * (y - 0.5) + e(rng));
    const double v = logistic(3.0 * (y - 0.5) + e(rng));
    w(i, 1) = v * v;
  }
  return w;
}

std::vector<KnotSet> toy_knots() { return {KnotSet(3, {0.0, 0.5, 1.0}), KnotSet(3, {0.0, 0.5, 1.0})}; }

FitOptions fixed_unit_options() {
  FitOptions o;
  o.order = 3;
  o.k0 = 2;
  o.rescale = RescaleParams{{{0.0, 1.0}, {0.0, 1.0}}};
  o.knots = toy_knots();
  return o;
}

Matrix whitened(const MomentPair& mp) {
  const Matrix x = inv_sqrt_psd(mp.sigma);
  return x * mp.lambda * x;
}

Vector smallest_eigvec(const Matrix& r, const Vector& align) {
  const EigenDecomp e = sym_eig(r);
  Vector b = e.eigenvectors.col(r.rows() - 1);
  if (b.dot(align) < 0) b = -b;
  return b;
}

}  // namespace

TEST_CASE("influence samples: toy case against the block-diagonal construction") {
  std::mt19937_64 rng(1);
  const Index n = 5;
  const std::vector<Matrix> designs{uniform_vector(rng, n * 2).reshaped(n, 2),
                                    uniform_vector(rng, n * 2).reshaped(n, 2)};
  const InfluenceSamples s = influence_samples(designs);
  REQUIRE(s.sigma_star.cols() == 16);

  const Matrix q = CenteringConstant::make(2).q;
  const Vector ones = Vector::Ones(2);
  std::vector<Matrix> big_n;
  Matrix lambda = Matrix::Zero(4, 4), second = Matrix::Zero(4, 4);
  Vector zbar = Vector::Zero(4);
  for (Index i = 0; i < n; ++i) {
    Matrix ni = Matrix::Zero(4, 2);
    ni.block(0, 0, 2, 1) = designs[0].row(i).transpose();
    ni.block(2, 1, 2, 1) = designs[1].row(i).transpose();
    big_n.push_back(ni);
    lambda += ni * q * ni.transpose() / n;
    const Vector z = ni * ones / 2.0;
    zbar += z / n;
    second += z * z.transpose() / n;
  }
  for (Index i = 0; i < n; ++i) {
    const Matrix lam = big_n[i] * q * big_n[i].transpose() - lambda;
    const Vector z = big_n[i] * ones / 2.0;
    const Matrix sig = z * z.transpose() - second - (z - zbar) * zbar.transpose() - zbar * (z - zbar).transpose();
    for (Index a = 0; a < 4; ++a) {
      for (Index b = 0; b < 4; ++b) {
        CHECK(s.lambda_star(i, b * 4 + a) == doctest::Approx(lam(a, b)).epsilon(1e-12));
        CHECK(s.sigma_star(i, b * 4 + a) == doctest::Approx(sig(a, b)).epsilon(1e-12));
      }
    }
  }
  CHECK(s.lambda_star.colwise().mean().cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(s.sigma_star.colwise().mean().cwiseAbs().maxCoeff() <= 1e-12);

  // Phi against direct expectations.
  const PhiBlocks phi = estimate_phi(s);
  Matrix p11 = Matrix::Zero(16, 16), p21 = Matrix::Zero(16, 16);
  for (Index i = 0; i < n; ++i) {
    p11 += s.sigma_star.row(i).transpose() * s.sigma_star.row(i) / n;
    p21 += s.lambda_star.row(i).transpose() * s.sigma_star.row(i) / n;
  }
  CHECK(max_abs_diff(phi.phi11, p11) < 1e-14);
  CHECK(max_abs_diff(phi.phi21, p21) < 1e-14);
  CHECK(max_abs_diff(phi.phi12, phi.phi21.transpose()) == 0.0);
}

TEST_CASE("influence samples on a fitted model are mean zero and consistent with the moments") {
  std::mt19937_64 rng(2);
  const Matrix w = toy_unit_data(rng, 300);
  const FusionInput in = FusionInput::from_matrix(w);
  const FittedBScaling m = fit_bscaling(in, fixed_unit_options());
  const InfluenceSamples s = influence_samples(m, in);
  CHECK(s.lambda_star.colwise().mean().cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(s.sigma_star.colwise().mean().cwiseAbs().maxCoeff() <= 1e-10);

  const WorkingBasis wb = working_basis(m.knots, m.rescale.apply_clamped(w));
  const MomentPair mp = assemble_moments(wb.designs);
  const Index r = mp.lambda.rows();
  const Matrix q = CenteringConstant::make(2).q;
  Matrix direct = Matrix::Zero(r, r);
  for (Index i = 0; i < in.n(); ++i) {
    Matrix ni = Matrix::Zero(r, 2);
    ni.block(0, 0, wb.layout.sizes[0], 1) = wb.designs[0].row(i).transpose();
    ni.block(wb.layout.offsets[1], 1, wb.layout.sizes[1], 1) = wb.designs[1].row(i).transpose();
    direct += ni * q * ni.transpose() / static_cast<double>(in.n());
  }
  const Matrix recon = unvec(s.lambda_star.colwise().mean().transpose(), r, r) + mp.lambda;
  CHECK(max_abs_diff(recon, direct) <= 1e-12);
}

TEST_CASE("estimate_phi: PSD, quadratic scaling and the dimension guard") {
  std::mt19937_64 rng(3);
  const FusionInput in = FusionInput::from_matrix(toy_unit_data(rng, 200));
  const FittedBScaling m = fit_bscaling(in, fixed_unit_options());
  const InfluenceSamples s = influence_samples(m, in);
  const PhiBlocks phi = estimate_phi(s);
  const Matrix full = phi.full();
  CHECK(max_abs_diff(full, full.transpose()) <= 1e-12);
  const EigenDecomp e = sym_eig(full);
  CHECK(e.eigenvalues.minCoeff() >= -1e-8 * e.eigenvalues(0));

  const InfluenceSamples scaled{2.0 * s.sigma_star, 2.0 * s.lambda_star};
  CHECK(max_abs_diff(estimate_phi(scaled).full(), 4.0 * full) <= 1e-12);
  CHECK(kind_of([&] { estimate_phi(s, 5); }) == ErrorKind::MemoryBudget);
}

TEST_CASE("operators with Sigma = I") {
  std::mt19937_64 rng(4);
  MomentPair mp;
  mp.sigma = Matrix::Identity(3, 3);
  const Matrix a = random_matrix(rng, 3, 3);
  mp.lambda = a * a.transpose();
  const EigenDecomp e = sym_eig(mp.lambda);
  const OperatorMatrices ops = asymptotic_operators(mp, e, e.eigenvectors.col(2));
  const Matrix eye = Matrix::Identity(3, 3);
  CHECK(max_abs_diff(ops.omega1, -(kron(mp.lambda, eye) + kron(eye, mp.lambda)) / 2.0) < 1e-12);
  CHECK(max_abs_diff(ops.omega2, Matrix::Identity(9, 9)) < 1e-12);
}

TEST_CASE("operators match central finite differences") {
  std::mt19937_64 rng(5);
  const Index r = 4;
  MomentPair mp;
  mp.sigma = random_spd(rng, r);
  mp.lambda = random_spd(rng, r);
  const Matrix rn = whitened(mp);
  const EigenDecomp e = sym_eig(rn);
  const Vector b = e.eigenvectors.col(r - 1);
  const OperatorMatrices ops = asymptotic_operators(mp, e, b);
  CHECK(max_abs_diff(ops.omega2, kron(inv_sqrt_psd(mp.sigma), inv_sqrt_psd(mp.sigma))) < 1e-12);

  const double eps = 1e-6;
  for (int rep = 0; rep < 3; ++rep) {
    const Matrix d0 = random_matrix(rng, r, r);
    const Matrix delta = d0 + d0.transpose();
    for (int which = 0; which < 2; ++which) {
      MomentPair plus = mp, minus = mp;
      (which == 0 ? plus.sigma : plus.lambda) += eps * delta;
      (which == 0 ? minus.sigma : minus.lambda) -= eps * delta;
      const Matrix& omega = which == 0 ? ops.omega1 : ops.omega2;
      const Matrix& mb = which == 0 ? ops.m_b1 : ops.m_b2;
      const Matrix& ma = which == 0 ? ops.m_a1 : ops.m_a2;

      const Vector fd_r = (vec(whitened(plus)) - vec(whitened(minus))) / (2 * eps);
      const Vector an_r = omega * vec(delta);
      CHECK((fd_r - an_r).norm() <= 1e-3 * an_r.norm());

      const Vector bp = smallest_eigvec(whitened(plus), b), bm = smallest_eigvec(whitened(minus), b);
      const Vector fd_b = (bp - bm) / (2 * eps);
      const Vector an_b = mb * vec(delta);
      CHECK((fd_b - an_b).norm() <= 1e-3 * an_b.norm());

      const Vector ap = inv_sqrt_psd(plus.sigma) * bp, am = inv_sqrt_psd(minus.sigma) * bm;
      const Vector fd_a = (ap - am) / (2 * eps);
      const Vector an_a = ma * vec(delta);
      CHECK((fd_a - an_a).norm() <= 1e-3 * an_a.norm());
    }
  }
}

TEST_CASE("operator sandwiches do not depend on eigenvector signs of R_n") {
  std::mt19937_64 rng(6);
  MomentPair mp;
  mp.sigma = random_spd(rng, 3);
  mp.lambda = random_spd(rng, 3);
  EigenDecomp e = sym_eig(whitened(mp));
  const Vector b = e.eigenvectors.col(2);
  const OperatorMatrices ops = asymptotic_operators(mp, e, b);
  e.eigenvectors.col(0) *= -1.0;
  e.eigenvectors.col(1) *= -1.0;
  const OperatorMatrices flipped = asymptotic_operators(mp, e, b);
  CHECK(max_abs_diff(ops.m_b1, flipped.m_b1) < 1e-12);
  CHECK(max_abs_diff(ops.m_a2, flipped.m_a2) < 1e-12);
}

TEST_CASE("operators reject an ill-conditioned Sigma") {
  MomentPair mp;
  mp.sigma = Matrix::Identity(2, 2);
  mp.sigma(1, 1) = 1e-12;
  mp.lambda = Matrix::Identity(2, 2);
  const EigenDecomp e = sym_eig(mp.lambda);
  CHECK(kind_of([&] { asymptotic_operators(mp, e, e.eigenvectors.col(1)); }) == ErrorKind::SingularMatrix);
}

TEST_CASE("covariances: zero Phi and PSD output") {
  std::mt19937_64 rng(7);
  const FusionInput in = FusionInput::from_matrix(toy_unit_data(rng, 500));
  const FittedBScaling m = fit_bscaling(in, fixed_unit_options());
  const AsymptoticModel asy = build_asymptotic_model(m, in);
  for (const Matrix* p : {&asy.cov.pi_r, &asy.cov.pi_b, &asy.cov.pi_a}) {
    CHECK(max_abs_diff(*p, p->transpose()) <= 1e-12);
    const EigenDecomp e = sym_eig(*p);
    CHECK(e.eigenvalues.minCoeff() >= -1e-8 * std::max(1.0, e.eigenvalues(0)));
  }
  PhiBlocks zero = asy.phi;
  zero.phi11.setZero();
  zero.phi12.setZero();
  zero.phi21.setZero();
  zero.phi22.setZero();
  const Covariances z = covariances(asy.ops, zero);
  CHECK(z.pi_r.cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.pi_b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.pi_a.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sigma_mu_ci: interval shape, quantile and errors") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  std::mt19937_64 rng(8);
  const FusionInput in = FusionInput::from_matrix(toy_unit_data(rng, 500));
  const FittedBScaling m = fit_bscaling(in, fixed_unit_options());
  const AsymptoticModel asy = build_asymptotic_model(m, in);
  for (Index i = 0; i < 20; ++i) {
    const Vector w = in.data.row(i).transpose();
    const PredictionCI ci = sigma_mu_ci(m, asy, w, 0.95);
    CHECK(ci.sigma_mu >= 0.0);
    CHECK(ci.lower <= ci.mu_hat);
    CHECK(ci.mu_hat <= ci.upper);
    CHECK(ci.upper - ci.lower ==
          doctest::Approx(2 * 1.959963984540054 * ci.sigma_mu / std::sqrt(500.0)).epsilon(1e-12));
    CHECK(ci.mu_hat == doctest::Approx(predict_bmean(m, w.transpose())(0)));
  }
  const Vector w = in.data.row(0).transpose();
  CHECK(kind_of([&] { sigma_mu_ci(m, asy, w, 1.5); }) == ErrorKind::DomainError);
  CHECK(kind_of([&] { sigma_mu_ci(m, asy, Vector::Zero(3), 0.95); }) == ErrorKind::DimensionMismatch);
  Vector bad = w;
  bad(0) = std::nan("");
  CHECK(kind_of([&] { sigma_mu_ci(m, asy, bad, 0.95); }) == ErrorKind::NonFinite);

  // Different data than the fit: refused.
  const FusionInput other = FusionInput::from_matrix(toy_unit_data(rng, 500));
  CHECK(kind_of([&] { build_asymptotic_model(m, other); }) == ErrorKind::DimensionMismatch);
  CHECK(kind_of([&] { build_asymptotic_model(m, in, 3); }) == ErrorKind::MemoryBudget);
  FittedBScaling profiled = m;
  profiled.profiled = true;
  CHECK(kind_of([&] { build_asymptotic_model(profiled, in); }) == ErrorKind::SingularMatrix);
}

TEST_CASE("sigma_mu agrees with the delete-one jackknife") {
  std::mt19937_64 rng(9);
  const Index n = 400;
  const Matrix w = toy_unit_data(rng, n);
  const FusionInput in = FusionInput::from_matrix(w);
  const FitOptions opts = fixed_unit_options();
  const FittedBScaling m = fit_bscaling(in, opts);
  const AsymptoticModel asy = build_asymptotic_model(m, in);
  Vector w_new(2);
  w_new << 0.55, 0.3;
  const PredictionCI ci = sigma_mu_ci(m, asy, w_new, 0.95);

  const Vector mu_full = predict_bmean(m, w);
  Vector jack(n);
  for (Index i = 0; i < n; ++i) {
    Matrix sub(n - 1, 2);
    sub << w.topRows(i), w.bottomRows(n - 1 - i);
    FittedBScaling mi = fit_bscaling(FusionInput::from_matrix(sub), opts);
    if (predict_bmean(mi, w).dot(mu_full) < 0) mi = flip_sign(mi);
    jack(i) = predict_bmean(mi, w_new.transpose())(0);
  }
  const double var_jack = (n - 1.0) / n * (jack.array() - jack.mean()).square().sum();
  const double var_asym = ci.sigma_mu * ci.sigma_mu / n;
  INFO("jackknife " << var_jack << " asymptotic " << var_asym);
  CHECK(var_asym / var_jack > 0.8);
  CHECK(var_asym / var_jack < 1.25);
}

TEST_CASE("Pi_R matches the Monte Carlo covariance of R_n") {
  const Index n = 2000;
  const int reps = 300;
  const std::vector<KnotSet> knots = toy_knots();

  std::mt19937_64 big_rng(10);
  const Matrix big = toy_unit_data(big_rng, 200000);
  const WorkingBasis big_basis = working_basis(knots, big);
  const MomentPair big_mp = assemble_moments(big_basis.designs);
  const Matrix x = inv_sqrt_psd(big_mp.sigma);
  const EigenDecomp big_eig = sym_eig(x * big_mp.lambda * x);
  const Index r = big_mp.sigma.rows();
  const OperatorMatrices ops = asymptotic_operators(big_mp, big_eig, big_eig.eigenvectors.col(r - 1));
  const Matrix pi_r = covariances(ops, estimate_phi(influence_samples(big_basis.designs))).pi_r;

  Matrix draws(reps, r * r);
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 rng(derive_seed(77, Stream::Replication, static_cast<std::uint64_t>(rep)));
    const WorkingBasis wb = working_basis(knots, toy_unit_data(rng, n));
    draws.row(rep) = vec(whitened(assemble_moments(wb.designs))).transpose();
  }
  const Matrix centered = draws.rowwise() - draws.colwise().mean();
  const Matrix emp = centered.transpose() * centered * (static_cast<double>(n) / (reps - 1));

  const double top = pi_r.cwiseAbs().maxCoeff();
  int dominant = 0, within = 0;
  for (Index i = 0; i < pi_r.rows(); ++i) {
    for (Index j = 0; j < pi_r.cols(); ++j) {
      if (std::abs(pi_r(i, j)) < 0.25 * top) continue;
      ++dominant;
      if (std::abs(emp(i, j) - pi_r(i, j)) <= 0.25 * std::abs(pi_r(i, j))) ++within;
    }
  }
  INFO("dominant entries " << dominant << ", within 25%: " << within);
  CHECK(dominant > 0);
  CHECK(within == dominant);
}
