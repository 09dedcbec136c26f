#pragma once

#include "bscaling/core.hpp"
#include "bscaling/numerics.hpp"

namespace bscaling {

/// Default refusal threshold for the working dimension r: Phi is 2r^2 square.
inline constexpr Index kDefaultMaxInferenceDim = 40;

/// Plug-in influence values, one row per observation:
///   lambda_star row i = vec(N_i Q N_i^T) - vec(Lambda_n)
///   sigma_star  row i = vec(z_i z_i^T) - vec(E_n zz^T) - vec((z_i - zbar) zbar^T)
///                       - vec(zbar (z_i - zbar)^T)
/// Both have zero column means.
struct InfluenceSamples {
  Matrix sigma_star;
  Matrix lambda_star;
};

/// From per-measurement designs (the coordinates of the moment matrices).
InfluenceSamples influence_samples(const std::vector<Matrix>& designs);

/// From a fitted model and its training input (working coordinates).
InfluenceSamples influence_samples(const FittedBScaling& model, const FusionInput& input);

/// Phi = E_n [x x^T] with x = (sigma_star row, lambda_star row).
struct PhiBlocks {
  Matrix phi11;  // sigma/sigma
  Matrix phi12;  // sigma/lambda
  Matrix phi21;  // lambda/sigma
  Matrix phi22;  // lambda/lambda

  Matrix full() const;
};

/// Throws MemoryBudget when the working dimension exceeds max_dim.
PhiBlocks estimate_phi(const InfluenceSamples& samples, Index max_dim = kDefaultMaxInferenceDim);

/// Linearization operators of R_n, b_hat and a_hat with respect to
/// (vec Sigma, vec Lambda):
///   Omega1 = -(S^-1/2 L (x) I + I (x) S^-1/2 L)(S (x) S^1/2 + S^1/2 (x) S)^-1
///   Omega2 = S^-1/2 (x) S^-1/2
///   Omega3 = b^T (x) V (d_r I - Gamma)^+ V^T
///   M_b1 = Omega3 Omega1, M_b2 = Omega3 Omega2
///   M_a1 = -(b^T (x) I)(S (x) S^1/2 + S^1/2 (x) S)^-1 + S^-1/2 M_b1
///   M_a2 = S^-1/2 M_b2
struct OperatorMatrices {
  Matrix omega1;
  Matrix omega2;
  Matrix m_b1;
  Matrix m_b2;
  Matrix m_a1;
  Matrix m_a2;
  Matrix v;
  Vector gamma;
  std::vector<Index> ties;
};

/// Throws SingularMatrix when (S (x) S^1/2 + S^1/2 (x) S) has condition
/// number above 1e12.
OperatorMatrices asymptotic_operators(const MomentPair& moments, const EigenDecomp& eig_r,
                                      const Vector& b_hat);

struct Covariances {
  Matrix pi_r;
  Matrix pi_b;
  Matrix pi_a;
};

Covariances covariances(const OperatorMatrices& ops, const PhiBlocks& phi);

/// Everything needed for prediction intervals of one fit.
struct AsymptoticModel {
  PhiBlocks phi;
  OperatorMatrices ops;
  Covariances cov;
  MomentPair moments;
  WorkingBasis basis;
  Matrix a_star;         // n x r influence values of a_hat
  Vector bmean_centered; // in-sample B-mean (mean zero)
  Index n = 0;
};

/// Refuses (SingularMatrix) models whose Sigma_n needed ridge or
/// profiling, and inputs the model was not fitted on (DimensionMismatch).
AsymptoticModel build_asymptotic_model(const FittedBScaling& model, const FusionInput& input,
                                       Index max_dim = kDefaultMaxInferenceDim);

struct PredictionCI {
  double mu_hat = 0.0;
  double sigma_mu = 0.0;
  double sigma2_coef = 0.0;  // N(w)^T Pi_a N(w) / K^2 (coefficient part alone)
  double level = 0.95;
  double lower = 0.0;
  double upper = 0.0;
  Index n = 0;
};

/// Standard normal quantile.
double normal_quantile(double p);

/// B-mean at w_new with a Wald interval mu_hat +- z sigma_mu / sqrt(n).
/// sigma_mu^2 is the variance of the influence value of mu_hat(w_new):
/// the coefficient part N^T Pi_a N / K^2 plus the terms from centering
/// the working basis at the sample means.
PredictionCI sigma_mu_ci(const FittedBScaling& model, const AsymptoticModel& asy,
                         const Vector& w_new, double level);

}  // namespace bscaling
