#include "bscaling/baselines.hpp"

#include <cmath>

#include "bscaling/error.hpp"

namespace bscaling {

double pearson(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::DimensionMismatch, "pearson: length mismatch");
  const Vector xc = x.array() - x.mean();
  const Vector yc = y.array() - y.mean();
  const double sx = xc.squaredNorm();
  const double sy = yc.squaredNorm();
  if (!(sx > 0.0) || !(sy > 0.0)) throw Error(ErrorKind::ZeroVariance, "pearson: constant input");
  return xc.dot(yc) / std::sqrt(sx * sy);
}

PcaResult pca_scores(const Matrix& data, bool standardize) {
  const Index n = data.rows();
  if (n <= data.cols()) throw Error(ErrorKind::InsufficientData, "pca: need n > K");
  if (!data.allFinite()) throw Error(ErrorKind::NonFinite, "pca: NaN/Inf in data");
  Matrix centered = data.rowwise() - data.colwise().mean();
  if (standardize) {
    for (Index k = 0; k < centered.cols(); ++k) {
      const double sd = std::sqrt(centered.col(k).squaredNorm() / static_cast<double>(n - 1));
      if (!(sd > 0.0)) throw Error(ErrorKind::ZeroVariance, "pca: constant column");
      centered.col(k) /= sd;
    }
  }
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const EigenDecomp eig = sym_eig(cov);
  PcaResult out;
  out.loadings = eig.eigenvectors;
  out.variances = eig.eigenvalues;
  out.scores = centered * out.loadings;
  return out;
}

Index pc_max_index(const Matrix& scores, const Vector& y) {
  Index best = -1;
  double best_corr = -1.0;
  for (Index j = 0; j < scores.cols(); ++j) {
    const Vector col = scores.col(j);
    if (!((col.array() - col.mean()).matrix().squaredNorm() > 0.0)) continue;
    const double c = std::abs(pearson(col, y));
    if (c > best_corr) {
      best_corr = c;
      best = j;
    }
  }
  if (best < 0) throw Error(ErrorKind::ZeroVariance, "pc_max: every score column is constant");
  return best;
}

double pc_max_corr(const Matrix& scores, const Vector& y) {
  return std::abs(pearson(scores.col(pc_max_index(scores, y)), y));
}

Vector mds_embed_1d(const Matrix& data) {
  const Index n = data.rows();
  if (n < 3) throw Error(ErrorKind::InsufficientData, "mds: need at least 3 points");
  if (!data.allFinite()) throw Error(ErrorKind::NonFinite, "mds: NaN/Inf in data");

  // Squared Euclidean distances from the Gram matrix of the rows.
  const Matrix gram = data * data.transpose();
  const Vector sq = gram.diagonal();
  Matrix d2 = (-2.0 * gram).colwise() + sq;
  d2.rowwise() += sq.transpose();
  d2 = d2.cwiseMax(0.0);
  d2.diagonal().setZero();

  // B = -1/2 J D2 J, J = I - 11^T/n.
  const Vector row_mean = d2.rowwise().mean();
  const Vector col_mean = d2.colwise().mean().transpose();
  const double grand = d2.mean();
  Matrix b = d2;
  b.colwise() -= row_mean;
  b.rowwise() -= col_mean.transpose();
  b.array() += grand;
  b *= -0.5;

  const EigenDecomp eig = sym_eig(b);
  Vector out = std::sqrt(std::max(eig.eigenvalues(0), 0.0)) * eig.eigenvectors.col(0);
  canonicalize_sign(out);
  return out;
}

double mds_strain(const Matrix& data, const Vector& embedding) {
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = i + 1; j < data.rows(); ++j) {
      const double d = (data.row(i) - data.row(j)).norm();
      const double e = std::abs(embedding(i) - embedding(j));
      num += (d - e) * (d - e);
      den += d * d;
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

CorrReport corr_metrics(const Matrix& data, const std::map<std::string, Vector>& candidates,
                        const Vector& y) {
  if (data.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "corr_metrics: length mismatch");
  CorrReport report;
  for (const auto& [name, v] : candidates) {
    report.per_method[name] = std::abs(pearson(v, y));
  }
  double sum = 0.0;
  for (Index k = 0; k < data.cols(); ++k) {
    const double c = std::abs(pearson(data.col(k), y));
    report.rho_max = std::max(report.rho_max, c);
    sum += c;
  }
  report.rho_bar0 = data.cols() > 0 ? sum / static_cast<double>(data.cols()) : 0.0;
  return report;
}

}  // namespace bscaling
