#pragma once

#include <span>
#include <vector>

#include "bscaling/numerics.hpp"

namespace bscaling {

/// Spline space of a given order on [0,1] with strictly increasing
/// breakpoints 0 = t_0 < ... < t_k0 = 1. The basis is the clamped
/// B-spline basis (boundary knots repeated `order` times), so it has
/// basis_count = k0 + order - 1 functions.
class KnotSet {
 public:
  KnotSet() = default;
  /// Throws DomainError unless breakpoints are strictly increasing from
  /// 0 to 1 and order >= 1.
  KnotSet(int order, std::vector<double> breakpoints);

  int order() const { return order_; }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  int intervals() const { return static_cast<int>(breakpoints_.size()) - 1; }
  int basis_count() const { return intervals() + order_ - 1; }

  /// Clamped knot vector of length basis_count() + order().
  std::vector<double> full_knots() const;

  /// Index of the breakpoint interval containing x (x clamped to [0,1];
  /// x == 1 falls in the last interval).
  int interval_of(double x) const;

 private:
  int order_ = 0;
  std::vector<double> breakpoints_;
};

/// Type-7 (linear interpolation) empirical quantile of sorted data.
double sorted_quantile(std::span<const double> sorted, double p);

/// Knots at the j/k0 empirical quantiles of `values` (values in [0,1]).
/// Quantiles that coincide with a boundary or a previous knot are dropped,
/// shrinking the interval count.
/// Errors: InsufficientData if n < k0 + m; DegenerateMeasurement if fewer
/// than two distinct values.
KnotSet make_quantile_knots(std::span<const double> values, int k0, int m);

/// All basis functions at x (clamped to [0,1]); at most order() nonzero.
Vector eval_basis(const KnotSet& ks, double x);

/// Row i = eval_basis(ks, values[i]).
Matrix basis_design(const KnotSet& ks, std::span<const double> values);

/// q-th derivative of every basis function at x.
Vector eval_basis_derivative(const KnotSet& ks, double x, int q);

/// Gram matrix G_ij = integral over [0,1] of N_i^(q) N_j^(q).
Matrix roughness_gram(const KnotSet& ks, int q);

}  // namespace bscaling
