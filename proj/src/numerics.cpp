#include "bscaling/numerics.hpp"

#include <cmath>
#include <limits>

#include "bscaling/error.hpp"

namespace bscaling {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::DegenerateMeasurement: return "DegenerateMeasurement";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::MemoryBudget: return "MemoryBudget";
    case ErrorKind::NegativeVariance: return "NegativeVariance";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 1;
    case ErrorKind::SingularMatrix:
    case ErrorKind::MemoryBudget:
    case ErrorKind::NegativeVariance:
      return 3;
    default:
      return 2;
  }
}

double canonicalize_sign(Eigen::Ref<Vector> v) {
  if (v.size() == 0) return 1.0;
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  }
  if (v(best) < 0.0) {
    v = -v;
    return -1.0;
  }
  return 1.0;
}

EigenDecomp sym_eig(const Matrix& s) {
  if (s.rows() != s.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "sym_eig: matrix is not square");
  }
  if (!s.allFinite()) {
    throw Error(ErrorKind::NonFinite, "sym_eig: matrix has NaN/Inf entries");
  }
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::NonFinite, "sym_eig: eigensolver did not converge");
  }
  const Index r = s.rows();
  EigenDecomp out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  for (Index j = 0; j < r; ++j) canonicalize_sign(out.eigenvectors.col(j));
  return out;
}

double condition_number(const Vector& eigenvalues) {
  if (eigenvalues.size() == 0) return 1.0;
  const double hi = eigenvalues.maxCoeff();
  const double lo = eigenvalues.minCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

Matrix inv_sqrt_psd(const Matrix& s, double ridge) {
  EigenDecomp eig = sym_eig(s);
  const Index r = s.rows();
  if (ridge > 0.0 && r > 0) {
    eig.eigenvalues.array() += ridge * s.trace() / static_cast<double>(r);
  }
  const double largest = eig.eigenvalues(0);
  const double smallest = eig.eigenvalues(r - 1);
  if (!(smallest > 1e-14 * largest) || largest <= 0.0) {
    throw Error(ErrorKind::SingularMatrix,
                "inv_sqrt_psd: smallest eigenvalue " + std::to_string(smallest) +
                    " is not positive relative to largest " + std::to_string(largest));
  }
  const Vector scale = eig.eigenvalues.array().rsqrt();
  return eig.eigenvectors * scale.asDiagonal() * eig.eigenvectors.transpose();
}

Matrix sqrt_psd(const Matrix& s) {
  const EigenDecomp eig = sym_eig(s);
  const Vector root = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors * root.asDiagonal() * eig.eigenvectors.transpose();
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vector vec(const Matrix& a) {
  return Eigen::Map<const Vector>(a.data(), a.size());
}

Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (rows * cols != v.size()) {
    throw Error(ErrorKind::DimensionMismatch, "unvec: size does not match shape");
  }
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

ShiftedPinv pinv_shifted_diag(double d, const Vector& gamma, double tol) {
  ShiftedPinv out;
  out.diagonal = Vector::Zero(gamma.size());
  const double scale = gamma.size() > 0 ? gamma.cwiseAbs().maxCoeff() : 0.0;
  for (Index j = 0; j < gamma.size(); ++j) {
    const double gap = d - gamma(j);
    if (std::abs(gap) > tol * scale) {
      out.diagonal(j) = 1.0 / gap;
    } else {
      out.zeroed.push_back(j);
    }
  }
  // The zeroed entry closest to d is the pivot itself; the rest are ties.
  if (out.zeroed.size() > 1) {
    Index pivot = out.zeroed.front();
    for (Index j : out.zeroed) {
      if (std::abs(d - gamma(j)) < std::abs(d - gamma(pivot))) pivot = j;
    }
    for (Index j : out.zeroed) {
      if (j != pivot) out.ties.push_back(j);
    }
  }
  return out;
}

}  // namespace bscaling
