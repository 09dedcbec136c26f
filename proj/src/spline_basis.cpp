#include "bscaling/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bscaling/error.hpp"

namespace bscaling {

namespace {

// Knots closer than this are treated as one knot.
constexpr double kKnotTolerance = 1e-12;

double clamp01(double x) {
  if (std::isnan(x)) return x;
  return std::clamp(x, 0.0, 1.0);
}

// Values of all B-splines of the given order on the knot vector t at x,
// by the triangular Cox-de Boor table. Used for derivatives, where lower
// orders on the same knot vector are needed.
Vector all_bsplines(const std::vector<double>& t, int order, int span, double x) {
  const Index count = static_cast<Index>(t.size()) - order;
  Vector values = Vector::Zero(static_cast<Index>(t.size()) - 1);
  values(span) = 1.0;
  for (int k = 2; k <= order; ++k) {
    Vector next = Vector::Zero(values.size());
    for (Index j = 0; j + k < static_cast<Index>(t.size()); ++j) {
      double v = 0.0;
      const double left = t[j + k - 1] - t[j];
      const double right = t[j + k] - t[j + 1];
      if (left > 0.0) v += (x - t[j]) / left * values(j);
      if (right > 0.0) v += (t[j + k] - x) / right * values(j + 1);
      next(j) = v;
    }
    values = std::move(next);
  }
  return values.head(count);
}

}  // namespace

KnotSet::KnotSet(int order, std::vector<double> breakpoints)
    : order_(order), breakpoints_(std::move(breakpoints)) {
  if (order_ < 1) throw Error(ErrorKind::DomainError, "KnotSet: order must be >= 1");
  if (breakpoints_.size() < 2 || breakpoints_.front() != 0.0 || breakpoints_.back() != 1.0) {
    throw Error(ErrorKind::DomainError, "KnotSet: breakpoints must run from 0 to 1");
  }
  for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
    if (!(breakpoints_[i] > breakpoints_[i - 1])) {
      throw Error(ErrorKind::DomainError, "KnotSet: breakpoints must be strictly increasing");
    }
  }
}

std::vector<double> KnotSet::full_knots() const {
  std::vector<double> t;
  t.reserve(breakpoints_.size() + 2 * (order_ - 1));
  t.insert(t.end(), order_ - 1, 0.0);
  t.insert(t.end(), breakpoints_.begin(), breakpoints_.end());
  t.insert(t.end(), order_ - 1, 1.0);
  return t;
}

int KnotSet::interval_of(double x) const {
  x = clamp01(x);
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x);
  int i = static_cast<int>(it - breakpoints_.begin()) - 1;
  return std::clamp(i, 0, intervals() - 1);
}

double sorted_quantile(std::span<const double> sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 0) throw Error(ErrorKind::InsufficientData, "quantile of empty data");
  const double h = static_cast<double>(n - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

KnotSet make_quantile_knots(std::span<const double> values, int k0, int m) {
  if (k0 < 1 || m < 1) {
    throw Error(ErrorKind::DomainError, "make_quantile_knots: k0 and m must be positive");
  }
  const auto n = static_cast<long>(values.size());
  if (n < k0 + m) {
    throw Error(ErrorKind::InsufficientData,
                "make_quantile_knots: n=" + std::to_string(n) + " < k0+m=" +
                    std::to_string(k0 + m));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  if (!(sorted.back() > sorted.front())) {
    throw Error(ErrorKind::DegenerateMeasurement,
                "make_quantile_knots: fewer than two distinct values");
  }
  std::vector<double> knots{0.0};
  for (int j = 1; j < k0; ++j) {
    const double q = sorted_quantile(sorted, static_cast<double>(j) / k0);
    if (q > knots.back() + kKnotTolerance && q < 1.0 - kKnotTolerance) knots.push_back(q);
  }
  knots.push_back(1.0);
  return KnotSet(m, std::move(knots));
}

Vector eval_basis(const KnotSet& ks, double x) {
  const int m = ks.order();
  const int p = m - 1;
  x = clamp01(x);
  const std::vector<double> t = ks.full_knots();
  const int span = ks.interval_of(x) + p;

  // Nonzero functions N_{span-p..span} (de Boor's triangular scheme).
  std::vector<double> local(m, 0.0), left(m, 0.0), right(m, 0.0);
  local[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = local[r] / (right[r + 1] + left[j - r]);
      local[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    local[j] = saved;
  }
  Vector out = Vector::Zero(ks.basis_count());
  for (int r = 0; r <= p; ++r) out(span - p + r) = local[r];
  return out;
}

Matrix basis_design(const KnotSet& ks, std::span<const double> values) {
  Matrix out(static_cast<Index>(values.size()), ks.basis_count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.row(static_cast<Index>(i)) = eval_basis(ks, values[i]).transpose();
  }
  return out;
}

Vector eval_basis_derivative(const KnotSet& ks, double x, int q) {
  const int m = ks.order();
  const Index count = ks.basis_count();
  if (q == 0) return eval_basis(ks, x);
  if (q >= m) return Vector::Zero(count);
  x = clamp01(x);
  const std::vector<double> t = ks.full_knots();
  const int span = ks.interval_of(x) + m - 1;

  // Start from order m-q functions and differentiate q times:
  // d/dx N_{j,k} = (k-1) [N_{j,k-1}/(t_{j+k-1}-t_j) - N_{j+1,k-1}/(t_{j+k}-t_{j+1})].
  Vector values = all_bsplines(t, m - q, span, x);
  for (int k = m - q + 1; k <= m; ++k) {
    const Index n_k = static_cast<Index>(t.size()) - k;
    Vector next = Vector::Zero(n_k);
    for (Index j = 0; j < n_k; ++j) {
      const double left = t[j + k - 1] - t[j];
      const double right = t[j + k] - t[j + 1];
      double v = 0.0;
      if (left > 0.0) v += values(j) / left;
      if (right > 0.0) v -= values(j + 1) / right;
      next(j) = (k - 1) * v;
    }
    values = std::move(next);
  }
  return values;
}

Matrix roughness_gram(const KnotSet& ks, int q) {
  const Index count = ks.basis_count();
  Matrix gram = Matrix::Zero(count, count);
  if (q >= ks.order()) return gram;
  // Gauss-Legendre nodes on [-1,1]; degree 2(m-1-q) <= 2*order-1 is exact.
  const int points = std::max(1, ks.order());
  std::vector<double> nodes(points), weights(points);
  for (int i = 0; i < points; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < points; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = points * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    nodes[i] = z;
    weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  const auto& bp = ks.breakpoints();
  for (int interval = 0; interval < ks.intervals(); ++interval) {
    const double a = bp[interval], b = bp[interval + 1];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int i = 0; i < points; ++i) {
      const Vector d = eval_basis_derivative(ks, mid + half * nodes[i], q);
      gram.noalias() += (weights[i] * half) * d * d.transpose();
    }
  }
  return gram;
}

}  // namespace bscaling
