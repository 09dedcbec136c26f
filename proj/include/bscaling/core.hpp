#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bscaling/numerics.hpp"
#include "bscaling/spline_basis.hpp"

namespace bscaling {

/// n observations (rows) of K measurements (columns).
struct FusionInput {
  Matrix data;
  std::vector<std::string> column_names;

  Index n() const { return data.rows(); }
  Index k() const { return data.cols(); }

  /// Throws InsufficientData (n < 2 or K < 2), NonFinite, or
  /// DimensionMismatch (name count).
  void validate() const;

  /// Builds an input with default names w1..wK and validates it.
  static FusionInput from_matrix(Matrix data);
};

struct ColumnRange {
  double min = 0.0;
  double max = 1.0;
};

/// Per-column min/max map onto [0,1].
struct RescaleParams {
  std::vector<ColumnRange> columns;

  double apply(Index column, double x) const;
  /// Rescales every column and clamps to [0,1].
  Matrix apply_clamped(const Matrix& rows) const;
};

/// Q = I - 11^T/K and the vector 1/K.
struct CenteringConstant {
  Matrix q;
  Vector one_over_k;

  static CenteringConstant make(Index k);
};

/// Sample moment matrices of the fusion eigenproblem.
///   lambda = n^-1 sum_i N_i Q N_i^T
///   sigma  = n-divisor covariance of z_i = N_i 1 / K
struct MomentPair {
  Matrix lambda;
  Matrix sigma;
  Vector mean_z;
};

/// Offsets of the per-measurement coefficient blocks in a stacked vector.
struct BlockLayout {
  std::vector<Index> offsets;
  std::vector<Index> sizes;
  Index total = 0;

  static BlockLayout from_sizes(const std::vector<Index>& sizes);
};

/// Working coordinates of the eigenproblem. Each measurement's B-spline
/// design loses its first column (the basis sums to one, so the others
/// plus a constant span the same space) and is centered at the training
/// means; this removes the additive-constant directions that make the
/// covariance of the full basis singular.
struct WorkingBasis {
  std::vector<Matrix> designs;
  std::vector<Vector> means;
  BlockLayout layout;
};

/// Builds centered working designs from rescaled-and-clamped data.
WorkingBasis working_basis(const std::vector<KnotSet>& knots, const Matrix& unit_data);

/// Working-coordinate feature vector (stacked over k, before the 1/K
/// factor) of one new observation given in unit coordinates.
Vector working_features(const std::vector<KnotSet>& knots, const WorkingBasis& basis,
                        const Vector& unit_row);

/// Block (k,l) of lambda is n^-1 sum_i q_kl D_k(i) D_l(i)^T. Designs may
/// have different column counts. Throws DimensionMismatch on row-count
/// disagreement.
MomentPair assemble_moments(const std::vector<Matrix>& designs);

/// Solution of min a^T Lambda a subject to a^T Sigma a = 1.
struct GeneralizedSolution {
  Vector eigenvalues;   // spectrum of the whitened matrix, descending
  Vector b;             // whitened minimizer (unit norm)
  Vector a;             // minimizer in the original coordinates
  double d_min = 0.0;   // b^T R b
  bool profiled = false;
  double ridge_applied = 0.0;
  Index tie_dimension = 1;
  std::vector<std::string> warnings;
};

struct SolveOptions {
  /// Relative ridge added to Sigma when its condition number exceeds
  /// 1e12. Zero selects exact restriction to the range of Sigma instead.
  double ridge = 0.0;
  /// Optional roughness penalty (same coordinates as the moments) used
  /// only to pick a unique minimizer inside a degenerate eigenspace.
  const Matrix* roughness = nullptr;
};

GeneralizedSolution solve_generalized(const MomentPair& moments, const SolveOptions& opts = {});

struct FittedBScaling {
  RescaleParams rescale;
  int order = 4;
  int k0 = 0;
  std::vector<KnotSet> knots;
  std::vector<std::string> column_names;
  BlockLayout layout;          // full-basis blocks of a_hat
  Vector a_hat;                // full B-spline coefficients, blocks per measurement
  Vector b_hat;                // whitened eigenvector (working coordinates)
  Vector eigenvalues;          // spectrum of R_n, descending
  double d_min = 0.0;
  double b_variance = 0.0;     // aggregate B-variance
  double sign = 1.0;           // canonicalization applied to the raw eigenvector
  bool profiled = false;       // Sigma_n was rank deficient
  double ridge_applied = 0.0;
  Index n_train = 0;
  std::vector<int> k0_grid;
  std::vector<std::string> warnings;

  Index k() const { return static_cast<Index>(knots.size()); }
};

RescaleParams fit_rescaler(const FusionInput& input);

struct FitOptions {
  int k0 = 11;
  int order = 4;
  double ridge = 0.0;
  /// Fixed rescaling and knots (e.g. taken from a reference fit); when
  /// absent they are estimated from the input.
  std::optional<RescaleParams> rescale;
  std::optional<std::vector<KnotSet>> knots;
};

FittedBScaling fit_bscaling(const FusionInput& input, const FitOptions& opts);
FittedBScaling fit_bscaling(const FusionInput& input, int k0, int m, double ridge = 0.0);

/// Column k holds f_k evaluated at column k of rows (original scale).
Matrix component_transforms(const FittedBScaling& model, const Matrix& rows);

/// B-mean: row means of component_transforms.
Vector predict_bmean(const FittedBScaling& model, const Matrix& rows);

struct BVariance {
  Vector per_row;
  double aggregate = 0.0;
};

BVariance b_variance(const FittedBScaling& model, const FusionInput& input);

/// Same model with the opposite sign convention.
FittedBScaling flip_sign(FittedBScaling model);

struct K0Row {
  int k0 = 0;
  double b_variance = 0.0;
  double d_min = 0.0;
  std::string error;  // empty when the fit succeeded
};

struct K0Selection {
  int best_k0 = 0;
  std::vector<K0Row> table;
};

/// Fits every grid value and returns the one with minimal aggregate
/// B-variance (ties within 1e-10: smallest k0). Failed fits are kept in
/// the table with their error and skipped.
K0Selection select_k0(const FusionInput& input, const std::vector<int>& grid, int m);

/// 11, 12, ..., 25.
std::vector<int> default_k0_grid();

}  // namespace bscaling
