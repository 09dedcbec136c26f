#include "bscaling/regression.hpp"

#include <cmath>

#include "bscaling/error.hpp"

namespace bscaling {

RegressionFit adjusted_r2(const Vector& x, const Vector& g, bool log_response) {
  if (x.size() != g.size()) {
    throw Error(ErrorKind::DimensionMismatch, "adjusted_r2: x has " + std::to_string(x.size()) +
                                                  " values, response has " + std::to_string(g.size()));
  }
  const Index n = x.size();
  if (n < 3) throw Error(ErrorKind::InsufficientData, "adjusted_r2: need n >= 3");
  if (!x.allFinite() || !g.allFinite()) throw Error(ErrorKind::NonFinite, "adjusted_r2: non-finite input");
  Vector y = g;
  if (log_response) {
    for (Index i = 0; i < n; ++i) {
      if (!(g(i) > 0.0)) {
        throw Error(ErrorKind::DomainError,
                    "adjusted_r2: log of nonpositive response at row " + std::to_string(i + 1));
      }
      y(i) = std::log(g(i));
    }
  }
  const double xbar = x.mean();
  const double ybar = y.mean();
  const Vector xc = x.array() - xbar;
  const Vector yc = y.array() - ybar;
  const double sxx = xc.squaredNorm();
  if (!(sxx > 0.0) || sxx <= 1e-300) throw Error(ErrorKind::ZeroVariance, "adjusted_r2: x is constant");

  RegressionFit fit;
  fit.n = n;
  fit.alpha1 = xc.dot(yc) / sxx;
  fit.alpha0 = ybar - fit.alpha1 * xbar;
  const double syy = yc.squaredNorm();
  const double sse = (yc - fit.alpha1 * xc).squaredNorm();
  fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) / static_cast<double>(n - 2);
  return fit;
}

}  // namespace bscaling
