#pragma once

#include "bscaling/numerics.hpp"

namespace bscaling {

struct RegressionFit {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  double r2 = 0.0;
  double adj_r2 = 0.0;
  Index n = 0;
};

/// OLS of g (or log g) on x with intercept; adj R^2 = 1 - (1 - R^2)(n-1)/(n-2).
/// Errors: InsufficientData (n < 3), DimensionMismatch, ZeroVariance (x
/// constant), DomainError (log of g <= 0), NonFinite.
RegressionFit adjusted_r2(const Vector& x, const Vector& g, bool log_response);

}  // namespace bscaling
