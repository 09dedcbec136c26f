#include "bscaling/inference.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "bscaling/error.hpp"

namespace bscaling {

namespace {

constexpr double kMaxOperatorCondition = 1e12;

Matrix stack_designs(const std::vector<Matrix>& designs, const BlockLayout& layout) {
  const Index n = designs.front().rows();
  Matrix stacked(n, layout.total);
  for (std::size_t k = 0; k < designs.size(); ++k) {
    if (designs[k].rows() != n) {
      throw Error(ErrorKind::DimensionMismatch, "influence_samples: row counts differ");
    }
    stacked.middleCols(layout.offsets[k], layout.sizes[k]) = designs[k];
  }
  return stacked;
}

// q_kl expanded to the coefficient layout.
Matrix block_q(const BlockLayout& layout) {
  const auto kk = static_cast<double>(layout.sizes.size());
  Matrix mask(layout.total, layout.total);
  for (std::size_t k = 0; k < layout.sizes.size(); ++k) {
    for (std::size_t l = 0; l < layout.sizes.size(); ++l) {
      mask.block(layout.offsets[k], layout.offsets[l], layout.sizes[k], layout.sizes[l])
          .setConstant((k == l ? 1.0 : 0.0) - 1.0 / kk);
    }
  }
  return mask;
}

Index working_dim(const Matrix& samples) {
  const auto r = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(samples.cols()))));
  if (r * r != samples.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "influence samples are not vec'd square matrices");
  }
  return r;
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

InfluenceSamples influence_samples(const std::vector<Matrix>& designs) {
  if (designs.size() < 2) throw Error(ErrorKind::DimensionMismatch, "influence_samples: need K >= 2");
  std::vector<Index> sizes;
  for (const Matrix& d : designs) sizes.push_back(d.cols());
  const BlockLayout layout = BlockLayout::from_sizes(sizes);
  const Matrix stacked = stack_designs(designs, layout);
  const Index n = stacked.rows();
  const Index r = layout.total;
  const double kk = static_cast<double>(designs.size());
  const Matrix mask = block_q(layout);
  const Matrix z = stacked / kk;

  const MomentPair moments = assemble_moments(designs);
  const Vector zbar = moments.mean_z;
  const Matrix second = z.transpose() * z / static_cast<double>(n);

  InfluenceSamples out;
  out.sigma_star.resize(n, r * r);
  out.lambda_star.resize(n, r * r);
  for (Index i = 0; i < n; ++i) {
    const Vector x = stacked.row(i).transpose();
    const Vector zi = z.row(i).transpose();
    const Matrix lam = mask.cwiseProduct(x * x.transpose()) - moments.lambda;
    const Matrix sig = zi * zi.transpose() - second - (zi - zbar) * zbar.transpose() -
                       zbar * (zi - zbar).transpose();
    out.lambda_star.row(i) = vec(lam).transpose();
    out.sigma_star.row(i) = vec(sig).transpose();
  }
  return out;
}

InfluenceSamples influence_samples(const FittedBScaling& model, const FusionInput& input) {
  input.validate();
  const WorkingBasis wb = working_basis(model.knots, model.rescale.apply_clamped(input.data));
  return influence_samples(wb.designs);
}

Matrix PhiBlocks::full() const {
  const Index a = phi11.rows();
  const Index b = phi22.rows();
  Matrix out(a + b, a + b);
  out << phi11, phi12, phi21, phi22;
  return out;
}

PhiBlocks estimate_phi(const InfluenceSamples& samples, Index max_dim) {
  const Index r = working_dim(samples.sigma_star);
  if (r > max_dim) {
    throw Error(ErrorKind::MemoryBudget, "inference dimension " + std::to_string(r) +
                                             " exceeds the limit " + std::to_string(max_dim));
  }
  const Index n = samples.sigma_star.rows();
  if (n < 2 || samples.lambda_star.rows() != n || samples.lambda_star.cols() != r * r) {
    throw Error(ErrorKind::DimensionMismatch, "estimate_phi: inconsistent influence samples");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  PhiBlocks phi;
  phi.phi11 = symmetrized(samples.sigma_star.transpose() * samples.sigma_star * inv_n);
  phi.phi22 = symmetrized(samples.lambda_star.transpose() * samples.lambda_star * inv_n);
  phi.phi21 = samples.lambda_star.transpose() * samples.sigma_star * inv_n;
  phi.phi12 = phi.phi21.transpose();
  return phi;
}

OperatorMatrices asymptotic_operators(const MomentPair& moments, const EigenDecomp& eig_r,
                                      const Vector& b_hat) {
  const Index r = moments.sigma.rows();
  if (eig_r.eigenvalues.size() != r || b_hat.size() != r || moments.lambda.rows() != r) {
    throw Error(ErrorKind::DimensionMismatch, "asymptotic_operators: dimension mismatch");
  }
  const EigenDecomp sig = sym_eig(moments.sigma);
  if (!(sig.eigenvalues(r - 1) > 0.0)) {
    throw Error(ErrorKind::SingularMatrix, "asymptotic_operators: Sigma_n is not positive definite");
  }
  const Matrix& u = sig.eigenvectors;
  const Vector root = sig.eigenvalues.cwiseSqrt();
  const Matrix inv_half = u * root.cwiseInverse().asDiagonal() * u.transpose();

  // (S (x) S^1/2 + S^1/2 (x) S) is diagonal in the basis U (x) U with
  // entries s_i sqrt(s_j) + sqrt(s_i) s_j.
  Vector kron_diag(r * r);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < r; ++j) {
      kron_diag(i * r + j) = sig.eigenvalues(i) * root(j) + root(i) * sig.eigenvalues(j);
    }
  }
  if (kron_diag.maxCoeff() / kron_diag.minCoeff() > kMaxOperatorCondition) {
    throw Error(ErrorKind::SingularMatrix,
                "asymptotic_operators: Kronecker sum is ill-conditioned beyond 1e12");
  }
  const Matrix uu = kron(u, u);
  const Matrix kron_inv = uu * kron_diag.cwiseInverse().asDiagonal() * uu.transpose();

  const Matrix eye = Matrix::Identity(r, r);
  const Matrix xl = inv_half * moments.lambda;

  OperatorMatrices ops;
  ops.v = eig_r.eigenvectors;
  ops.gamma = eig_r.eigenvalues;
  ops.omega1 = -(kron(xl, eye) + kron(eye, xl)) * kron_inv;
  ops.omega2 = kron(inv_half, inv_half);

  const ShiftedPinv pinv = pinv_shifted_diag(ops.gamma(r - 1), ops.gamma);
  ops.ties = pinv.ties;
  const Matrix resolvent = ops.v * pinv.diagonal.asDiagonal() * ops.v.transpose();
  const Matrix omega3 = kron(b_hat.transpose(), resolvent);

  ops.m_b1 = omega3 * ops.omega1;
  ops.m_b2 = omega3 * ops.omega2;
  ops.m_a1 = -kron(b_hat.transpose(), eye) * kron_inv + inv_half * ops.m_b1;
  ops.m_a2 = inv_half * ops.m_b2;
  return ops;
}

Covariances covariances(const OperatorMatrices& ops, const PhiBlocks& phi) {
  const Index q = phi.phi11.rows();
  if (phi.phi22.rows() != q || ops.omega1.cols() != q || ops.m_a1.cols() != q) {
    throw Error(ErrorKind::DimensionMismatch, "covariances: operator and Phi shapes differ");
  }
  const Matrix full = phi.full();
  auto sandwich = [&full](const Matrix& left, const Matrix& right) {
    Matrix m(left.rows(), left.cols() + right.cols());
    m << left, right;
    return symmetrized(m * full * m.transpose());
  };
  Covariances out;
  out.pi_r = sandwich(ops.omega1, ops.omega2);
  out.pi_b = sandwich(ops.m_b1, ops.m_b2);
  out.pi_a = sandwich(ops.m_a1, ops.m_a2);
  return out;
}

AsymptoticModel build_asymptotic_model(const FittedBScaling& model, const FusionInput& input,
                                       Index max_dim) {
  if (model.profiled || model.ridge_applied > 0.0) {
    throw Error(ErrorKind::SingularMatrix,
                "inference needs an invertible Sigma_n; this fit was regularized");
  }
  input.validate();
  AsymptoticModel asy;
  asy.basis = working_basis(model.knots, model.rescale.apply_clamped(input.data));
  const Index r = asy.basis.layout.total;
  if (r > max_dim) {
    throw Error(ErrorKind::MemoryBudget, "inference dimension " + std::to_string(r) +
                                             " exceeds the limit " + std::to_string(max_dim));
  }
  if (model.b_hat.size() != r) {
    throw Error(ErrorKind::DimensionMismatch, "model does not match the input's basis");
  }
  asy.n = input.n();
  asy.moments = assemble_moments(asy.basis.designs);
  const Matrix inv_half = inv_sqrt_psd(asy.moments.sigma, 0.0);
  const Matrix rn = inv_half * asy.moments.lambda * inv_half;
  const EigenDecomp eig = sym_eig(rn);

  const Vector& b = model.b_hat;
  const double rayleigh = b.dot(rn * b);
  const double residual = (rn * b - rayleigh * b).norm();
  if (residual > 1e-6 * std::max(1.0, eig.eigenvalues.cwiseAbs().maxCoeff()) ||
      std::abs(rayleigh - eig.eigenvalues(r - 1)) > 1e-6 * std::max(1.0, std::abs(rayleigh))) {
    throw Error(ErrorKind::DimensionMismatch,
                "b_hat is not the smallest eigenvector of R_n for this input; "
                "inference needs the training data");
  }

  const InfluenceSamples samples = influence_samples(asy.basis.designs);
  asy.phi = estimate_phi(samples, max_dim);
  asy.ops = asymptotic_operators(asy.moments, eig, b);
  asy.cov = covariances(asy.ops, asy.phi);
  asy.a_star = samples.sigma_star * asy.ops.m_a1.transpose() +
               samples.lambda_star * asy.ops.m_a2.transpose();

  Matrix stacked(asy.n, r);
  for (std::size_t k = 0; k < asy.basis.designs.size(); ++k) {
    stacked.middleCols(asy.basis.layout.offsets[k], asy.basis.layout.sizes[k]) =
        asy.basis.designs[k];
  }
  asy.bmean_centered = stacked * (inv_half * b) / static_cast<double>(input.k());
  return asy;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::DomainError, "normal_quantile: p outside (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

PredictionCI sigma_mu_ci(const FittedBScaling& model, const AsymptoticModel& asy,
                         const Vector& w_new, double level) {
  if (w_new.size() != model.k()) {
    throw Error(ErrorKind::DimensionMismatch, "w_new must have one entry per measurement");
  }
  if (!w_new.allFinite()) throw Error(ErrorKind::NonFinite, "w_new has NaN/Inf entries");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::DomainError, "level must lie in (0,1)");

  const Matrix row = w_new.transpose();
  PredictionCI ci;
  ci.level = level;
  ci.n = asy.n;
  ci.mu_hat = predict_bmean(model, row)(0);

  const Vector unit = model.rescale.apply_clamped(row).row(0).transpose();
  const Vector g = working_features(model.knots, asy.basis, unit) / static_cast<double>(model.k());
  ci.sigma2_coef = g.dot(asy.cov.pi_a * g);

  // The working basis is centered at sample means, which adds -mu_B(w_i)
  // to the influence value of mu_hat(w_new).
  const Vector coef_part = asy.a_star * g;
  const double cross = coef_part.dot(asy.bmean_centered) / static_cast<double>(asy.n);
  const double centering = asy.bmean_centered.squaredNorm() / static_cast<double>(asy.n);
  double sigma2 = ci.sigma2_coef - 2.0 * cross + centering;
  if (sigma2 < -1e-10) {
    throw Error(ErrorKind::NegativeVariance, "sigma_mu^2 = " + std::to_string(sigma2));
  }
  sigma2 = std::max(sigma2, 0.0);
  ci.sigma_mu = std::sqrt(sigma2);
  const double half = normal_quantile(0.5 * (1.0 + level)) * ci.sigma_mu /
                      std::sqrt(static_cast<double>(asy.n));
  ci.lower = ci.mu_hat - half;
  ci.upper = ci.mu_hat + half;
  return ci;
}

}  // namespace bscaling
