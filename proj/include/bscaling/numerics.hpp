#pragma once

#include <vector>

#include <Eigen/Dense>

namespace bscaling {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Full symmetric eigendecomposition, eigenvalues in descending order.
/// Column j of `eigenvectors` pairs with eigenvalues(j); each column has
/// its largest-magnitude component positive (ties: lowest index).
struct EigenDecomp {
  Vector eigenvalues;
  Matrix eigenvectors;
};

/// Decomposes (S + S^T)/2. Throws NonFinite on NaN/Inf input.
EigenDecomp sym_eig(const Matrix& s);

/// max/min eigenvalue ratio; infinity when the minimum is <= 0.
double condition_number(const Vector& eigenvalues);

/// M = V diag(d^{-1/2}) V^T of S + ridge * (tr(S)/r) I.
/// Throws SingularMatrix when the smallest shifted eigenvalue is
/// <= 1e-14 times the largest.
Matrix inv_sqrt_psd(const Matrix& s, double ridge = 0.0);

/// Symmetric square root of a PSD matrix (negative rounding noise clipped).
Matrix sqrt_psd(const Matrix& s);

Matrix kron(const Matrix& a, const Matrix& b);

/// Column-stacking vectorization.
Vector vec(const Matrix& a);
Matrix unvec(const Vector& v, Index rows, Index cols);

/// Moore-Penrose inverse of (d I - diag(gamma)). Entries whose gap
/// |d - gamma_j| is within tol * max|gamma| are zeroed; the indices of
/// those that are not exactly the pivot itself are reported as ties.
struct ShiftedPinv {
  Vector diagonal;
  std::vector<Index> zeroed;
  std::vector<Index> ties;
};

ShiftedPinv pinv_shifted_diag(double d, const Vector& gamma, double tol = 1e-10);

/// Flips the sign of v so its largest-|entry| (lowest index on ties) is
/// positive. Returns the applied sign.
double canonicalize_sign(Eigen::Ref<Vector> v);

}  // namespace bscaling
