#pragma once

#include <map>
#include <string>

#include "bscaling/numerics.hpp"

namespace bscaling {

/// Pearson correlation. Throws ZeroVariance if either input is constant.
double pearson(const Vector& x, const Vector& y);

struct PcaResult {
  Matrix scores;     // n x K, centered data times loadings
  Matrix loadings;   // K x K orthonormal, columns by descending variance
  Vector variances;  // n-1 divisor
};

/// PCA of the column covariance matrix; `standardize` switches to the
/// correlation-matrix variant.
PcaResult pca_scores(const Matrix& data, bool standardize = false);

/// max_j |corr(scores_j, y)|, skipping zero-variance score columns.
double pc_max_corr(const Matrix& scores, const Vector& y);

/// Index of the score column achieving pc_max_corr.
Index pc_max_index(const Matrix& scores, const Vector& y);

/// Classical (Torgerson) scaling of the rows to one dimension:
/// B = -1/2 J D^2 J, embedding sqrt(l1) v1, largest-|entry| positive.
Vector mds_embed_1d(const Matrix& data);

/// Normalized strain sum (d_ij - |x_i - x_j|)^2 / sum d_ij^2.
double mds_strain(const Matrix& data, const Vector& embedding);

struct CorrReport {
  std::map<std::string, double> per_method;
  double rho_max = 0.0;
  double rho_bar0 = 0.0;
};

/// |corr(candidate, y)| per candidate plus max and mean |corr(w_k, y)|
/// over the data columns.
CorrReport corr_metrics(const Matrix& data, const std::map<std::string, Vector>& candidates,
                        const Vector& y);

}  // namespace bscaling
