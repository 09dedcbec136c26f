#include "bscaling/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>

#include "bscaling/error.hpp"

namespace bscaling {

namespace {

// Sigma_n is treated as singular above this condition number.
constexpr double kMaxCondition = 1e12;
// Eigenvalues of R_n within this distance of the smallest (relative to
// max(1, largest)) are one degenerate eigenspace.
constexpr double kTieTolerance = 1e-9;
// Relative gap of the two smallest eigenvalues below which a fit is
// flagged as near-degenerate.
constexpr double kGapWarning = 1e-10;

std::span<const double> column_span(const Matrix& m, Index col) {
  return {m.col(col).data(), static_cast<std::size_t>(m.rows())};
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

// Symmetric Moore-Penrose inverse with a relative eigenvalue cutoff.
Matrix pinv_sym(const Matrix& s) {
  if (s.size() == 0) return s;
  const EigenDecomp eig = sym_eig(s);
  const double cutoff = 1e-12 * std::max(eig.eigenvalues.cwiseAbs().maxCoeff(),
                                         std::numeric_limits<double>::min());
  Vector inv = Vector::Zero(eig.eigenvalues.size());
  for (Index j = 0; j < inv.size(); ++j) {
    if (std::abs(eig.eigenvalues(j)) > cutoff) inv(j) = 1.0 / eig.eigenvalues(j);
  }
  return eig.eigenvectors * inv.asDiagonal() * eig.eigenvectors.transpose();
}

}  // namespace

void FusionInput::validate() const {
  if (data.rows() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 observations");
  if (data.cols() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 measurements");
  if (static_cast<Index>(column_names.size()) != data.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "column name count does not match data");
  }
  if (!data.allFinite()) throw Error(ErrorKind::NonFinite, "input data has NaN/Inf entries");
}

FusionInput FusionInput::from_matrix(Matrix data) {
  FusionInput in;
  in.column_names.reserve(static_cast<std::size_t>(data.cols()));
  for (Index k = 0; k < data.cols(); ++k) in.column_names.push_back("w" + std::to_string(k + 1));
  in.data = std::move(data);
  in.validate();
  return in;
}

double RescaleParams::apply(Index column, double x) const {
  const ColumnRange& c = columns.at(static_cast<std::size_t>(column));
  return (x - c.min) / (c.max - c.min);
}

Matrix RescaleParams::apply_clamped(const Matrix& rows) const {
  if (rows.cols() != static_cast<Index>(columns.size())) {
    throw Error(ErrorKind::DimensionMismatch,
                "expected " + std::to_string(columns.size()) + " columns, got " +
                    std::to_string(rows.cols()));
  }
  Matrix out(rows.rows(), rows.cols());
  for (Index k = 0; k < rows.cols(); ++k) {
    for (Index i = 0; i < rows.rows(); ++i) {
      out(i, k) = std::clamp(apply(k, rows(i, k)), 0.0, 1.0);
    }
  }
  return out;
}

CenteringConstant CenteringConstant::make(Index k) {
  CenteringConstant c;
  const double inv = 1.0 / static_cast<double>(k);
  c.q = Matrix::Identity(k, k) - Matrix::Constant(k, k, inv);
  c.one_over_k = Vector::Constant(k, inv);
  return c;
}

BlockLayout BlockLayout::from_sizes(const std::vector<Index>& sizes) {
  BlockLayout layout;
  layout.sizes = sizes;
  for (Index s : sizes) {
    layout.offsets.push_back(layout.total);
    layout.total += s;
  }
  return layout;
}

WorkingBasis working_basis(const std::vector<KnotSet>& knots, const Matrix& unit_data) {
  if (static_cast<Index>(knots.size()) != unit_data.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "working_basis: one knot set per column required");
  }
  WorkingBasis wb;
  std::vector<Index> sizes;
  for (Index k = 0; k < unit_data.cols(); ++k) {
    const KnotSet& ks = knots[static_cast<std::size_t>(k)];
    if (ks.basis_count() < 2) {
      throw Error(ErrorKind::DegenerateMeasurement,
                  "measurement " + std::to_string(k + 1) + ": spline space holds only constants");
    }
    const Matrix full = basis_design(ks, column_span(unit_data, k));
    Matrix d = full.rightCols(ks.basis_count() - 1);
    Vector mean = d.colwise().mean().transpose();
    d.rowwise() -= mean.transpose();
    sizes.push_back(d.cols());
    wb.designs.push_back(std::move(d));
    wb.means.push_back(std::move(mean));
  }
  wb.layout = BlockLayout::from_sizes(sizes);
  return wb;
}

Vector working_features(const std::vector<KnotSet>& knots, const WorkingBasis& basis,
                        const Vector& unit_row) {
  Vector out(basis.layout.total);
  for (std::size_t k = 0; k < knots.size(); ++k) {
    const Vector n = eval_basis(knots[k], unit_row(static_cast<Index>(k)));
    out.segment(basis.layout.offsets[k], basis.layout.sizes[k]) =
        n.tail(n.size() - 1) - basis.means[k];
  }
  return out;
}

MomentPair assemble_moments(const std::vector<Matrix>& designs) {
  if (designs.size() < 2) {
    throw Error(ErrorKind::DimensionMismatch, "assemble_moments: need at least 2 designs");
  }
  const Index n = designs.front().rows();
  std::vector<Index> sizes;
  for (const Matrix& d : designs) {
    if (d.rows() != n) throw Error(ErrorKind::DimensionMismatch, "assemble_moments: row counts differ");
    sizes.push_back(d.cols());
  }
  const BlockLayout layout = BlockLayout::from_sizes(sizes);
  const auto kk = static_cast<double>(designs.size());

  Matrix stacked(n, layout.total);
  for (std::size_t k = 0; k < designs.size(); ++k) {
    stacked.middleCols(layout.offsets[k], layout.sizes[k]) = designs[k];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix gram = Matrix::Zero(layout.total, layout.total);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(stacked.transpose(), inv_n);
  gram = gram.selfadjointView<Eigen::Lower>();
  const Vector mean = stacked.colwise().mean().transpose();

  MomentPair out;
  out.lambda = gram;
  for (std::size_t k = 0; k < designs.size(); ++k) {
    for (std::size_t l = 0; l < designs.size(); ++l) {
      const double q = (k == l ? 1.0 : 0.0) - 1.0 / kk;
      out.lambda.block(layout.offsets[k], layout.offsets[l], layout.sizes[k], layout.sizes[l]) *= q;
    }
  }
  out.sigma = (gram - mean * mean.transpose()) / (kk * kk);
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  out.mean_z = mean / kk;
  return out;
}

GeneralizedSolution solve_generalized(const MomentPair& moments, const SolveOptions& opts) {
  const Matrix& lambda = moments.lambda;
  const Matrix& sigma = moments.sigma;
  const Index r = sigma.rows();
  if (lambda.rows() != r || lambda.cols() != r || sigma.cols() != r) {
    throw Error(ErrorKind::DimensionMismatch, "solve_generalized: moment shapes differ");
  }
  GeneralizedSolution sol;
  Matrix whitened;  // R
  Matrix to_a;      // a = to_a * b

  const EigenDecomp sig = sym_eig(sigma);
  const double cond = condition_number(sig.eigenvalues);
  if (cond <= kMaxCondition) {
    to_a = inv_sqrt_psd(sigma, 0.0);
    whitened = to_a * lambda * to_a;
  } else if (opts.ridge > 0.0) {
    to_a = inv_sqrt_psd(sigma, opts.ridge);
    whitened = to_a * lambda * to_a;
    sol.ridge_applied = opts.ridge;
    sol.warnings.push_back("Sigma_n condition number " + format_double(cond) +
                           " exceeds 1e12; relative ridge " + format_double(opts.ridge) +
                           " applied");
  } else {
    // Restrict the constraint to range(Sigma) and minimize the objective
    // over the null directions, which the constraint does not see.
    const double s_max = sig.eigenvalues(0);
    if (!(s_max > 0.0)) throw Error(ErrorKind::SingularMatrix, "Sigma_n is zero");
    Index rank = 0;
    while (rank < r && sig.eigenvalues(rank) > s_max / kMaxCondition) ++rank;
    const Matrix u_range = sig.eigenvectors.leftCols(rank);
    const Matrix u_null = sig.eigenvectors.rightCols(r - rank);
    const Matrix l_rr = u_range.transpose() * lambda * u_range;
    const Matrix l_nr = u_null.transpose() * lambda * u_range;
    const Matrix l_nn = u_null.transpose() * lambda * u_null;
    const Matrix profile = pinv_sym(l_nn) * l_nr;  // beta = -profile * alpha
    const Matrix l_eff = l_rr - l_nr.transpose() * profile;
    const Vector inv_root = sig.eigenvalues.head(rank).array().rsqrt();
    whitened = inv_root.asDiagonal() * l_eff * inv_root.asDiagonal();
    to_a = (u_range - u_null * profile) * inv_root.asDiagonal();
    sol.profiled = true;
    sol.warnings.push_back("Sigma_n is rank deficient (rank " + std::to_string(rank) + " of " +
                           std::to_string(r) + "); null directions profiled out");
  }
  whitened = 0.5 * (whitened + whitened.transpose()).eval();

  const EigenDecomp eig = sym_eig(whitened);
  const Index p = eig.eigenvalues.size();
  sol.eigenvalues = eig.eigenvalues;
  const double smallest = eig.eigenvalues(p - 1);
  const double scale = std::max(1.0, std::abs(eig.eigenvalues(0)));

  Index first_tied = p - 1;
  while (first_tied > 0 && eig.eigenvalues(first_tied - 1) - smallest <= kTieTolerance * scale) {
    --first_tied;
  }
  sol.tie_dimension = p - first_tied;
  sol.b = eig.eigenvectors.col(p - 1);

  if (p > 1) {
    const double gap = eig.eigenvalues(p - 2) - smallest;
    const double rel = gap / std::max(eig.eigenvalues.cwiseAbs().maxCoeff(),
                                      std::numeric_limits<double>::min());
    if (rel <= kGapWarning || sol.tie_dimension > 1) {
      sol.warnings.push_back("two smallest eigenvalues of R_n are near-degenerate (gap " +
                             format_double(gap) + ")");
    }
  }
  if (sol.tie_dimension > 1 && opts.roughness != nullptr) {
    // Among equally optimal directions keep the smoothest one.
    const Matrix basis = eig.eigenvectors.rightCols(sol.tie_dimension);
    const Matrix coef = to_a * basis;
    const Matrix rough = coef.transpose() * (*opts.roughness) * coef;
    const EigenDecomp pick = sym_eig(rough);
    sol.b = basis * pick.eigenvectors.col(sol.tie_dimension - 1);
    sol.warnings.push_back("degenerate minimizer space of dimension " +
                           std::to_string(sol.tie_dimension) +
                           "; smoothest minimizer selected");
  }
  sol.d_min = sol.b.dot(whitened * sol.b);
  sol.a = to_a * sol.b;
  return sol;
}

RescaleParams fit_rescaler(const FusionInput& input) {
  RescaleParams params;
  for (Index k = 0; k < input.k(); ++k) {
    const double lo = input.data.col(k).minCoeff();
    const double hi = input.data.col(k).maxCoeff();
    if (!(hi > lo)) {
      throw Error(ErrorKind::DegenerateMeasurement,
                  "column '" + input.column_names[static_cast<std::size_t>(k)] + "' is constant");
    }
    params.columns.push_back({lo, hi});
  }
  return params;
}

FittedBScaling fit_bscaling(const FusionInput& input, const FitOptions& opts) {
  input.validate();
  const Index kk = input.k();
  const Index n = input.n();

  FittedBScaling model;
  model.order = opts.order;
  model.k0 = opts.k0;
  model.column_names = input.column_names;
  model.n_train = n;
  model.rescale = opts.rescale ? *opts.rescale : fit_rescaler(input);
  const Matrix unit = model.rescale.apply_clamped(input.data);

  if (opts.knots) {
    if (static_cast<Index>(opts.knots->size()) != kk) {
      throw Error(ErrorKind::DimensionMismatch, "fit: one knot set per column required");
    }
    model.knots = *opts.knots;
    model.order = model.knots.front().order();
  } else {
    for (Index k = 0; k < kk; ++k) {
      model.knots.push_back(make_quantile_knots(column_span(unit, k), opts.k0, opts.order));
    }
  }

  const WorkingBasis wb = working_basis(model.knots, unit);
  const Index r = wb.layout.total;
  if (n <= r) {
    throw Error(ErrorKind::InsufficientData, "fit: n=" + std::to_string(n) +
                                                 " must exceed the coefficient count " +
                                                 std::to_string(r));
  }
  const MomentPair moments = assemble_moments(wb.designs);

  Matrix roughness = Matrix::Zero(r, r);
  const int q = std::min(2, model.order - 1);
  for (std::size_t k = 0; k < model.knots.size() && q > 0; ++k) {
    const Matrix g = roughness_gram(model.knots[k], q);
    const Index s = wb.layout.sizes[k];
    roughness.block(wb.layout.offsets[k], wb.layout.offsets[k], s, s) = g.bottomRightCorner(s, s);
  }
  SolveOptions solve_opts;
  solve_opts.ridge = opts.ridge;
  solve_opts.roughness = q > 0 ? &roughness : nullptr;
  GeneralizedSolution sol = solve_generalized(moments, solve_opts);

  Vector a_work = sol.a;
  double d_min = sol.d_min;
  if (sol.ridge_applied > 0.0) {
    // The ridge perturbs the constraint; restore it on the unshifted Sigma_n.
    a_work /= std::sqrt(a_work.dot(moments.sigma * a_work));
    d_min = a_work.dot(moments.lambda * a_work);
  }

  // Back to full B-spline coefficients: sum_j c_j (N_{j+1} - mean_j)
  // equals sum_j (c_j - C) N_{j+1} - C N_1 with C = c . mean.
  std::vector<Index> full_sizes;
  for (const KnotSet& ks : model.knots) full_sizes.push_back(ks.basis_count());
  model.layout = BlockLayout::from_sizes(full_sizes);
  model.a_hat.resize(model.layout.total);
  for (std::size_t k = 0; k < model.knots.size(); ++k) {
    const Vector c = a_work.segment(wb.layout.offsets[k], wb.layout.sizes[k]);
    const double shift = c.dot(wb.means[k]);
    model.a_hat(model.layout.offsets[k]) = -shift;
    model.a_hat.segment(model.layout.offsets[k] + 1, c.size()) = c.array() - shift;
  }
  model.sign = canonicalize_sign(model.a_hat);
  model.b_hat = model.sign * sol.b;
  model.eigenvalues = sol.eigenvalues;
  model.d_min = d_min;
  model.profiled = sol.profiled;
  model.ridge_applied = sol.ridge_applied;
  model.warnings = sol.warnings;

  // Aggregate B-variance straight from the fitted transforms.
  Matrix transforms(n, kk);
  for (std::size_t k = 0; k < model.knots.size(); ++k) {
    transforms.col(static_cast<Index>(k)) =
        wb.designs[k] * (model.sign * a_work.segment(wb.layout.offsets[k], wb.layout.sizes[k]));
  }
  const Vector mu = transforms.rowwise().mean();
  model.b_variance =
      (transforms.colwise() - mu).array().square().rowwise().mean().mean();
  return model;
}

FittedBScaling fit_bscaling(const FusionInput& input, int k0, int m, double ridge) {
  FitOptions opts;
  opts.k0 = k0;
  opts.order = m;
  opts.ridge = ridge;
  return fit_bscaling(input, opts);
}

Matrix component_transforms(const FittedBScaling& model, const Matrix& rows) {
  const Matrix unit = model.rescale.apply_clamped(rows);
  Matrix out(rows.rows(), rows.cols());
  for (std::size_t k = 0; k < model.knots.size(); ++k) {
    const auto col = static_cast<Index>(k);
    const Vector coef = model.a_hat.segment(model.layout.offsets[k], model.layout.sizes[k]);
    for (Index i = 0; i < rows.rows(); ++i) {
      out(i, col) = eval_basis(model.knots[k], unit(i, col)).dot(coef);
    }
  }
  return out;
}

Vector predict_bmean(const FittedBScaling& model, const Matrix& rows) {
  return component_transforms(model, rows).rowwise().mean();
}

BVariance b_variance(const FittedBScaling& model, const FusionInput& input) {
  input.validate();
  const Matrix t = component_transforms(model, input.data);
  const Vector mu = t.rowwise().mean();
  BVariance out;
  out.per_row = (t.colwise() - mu).array().square().rowwise().mean();
  out.aggregate = out.per_row.mean();
  return out;
}

FittedBScaling flip_sign(FittedBScaling model) {
  model.a_hat = -model.a_hat;
  model.b_hat = -model.b_hat;
  model.sign = -model.sign;
  return model;
}

K0Selection select_k0(const FusionInput& input, const std::vector<int>& grid, int m) {
  if (grid.empty()) throw Error(ErrorKind::Usage, "select_k0: empty grid");
  K0Selection sel;
  double best = std::numeric_limits<double>::infinity();
  for (int k0 : grid) {
    K0Row row;
    row.k0 = k0;
    try {
      const FittedBScaling fit = fit_bscaling(input, k0, m);
      row.b_variance = fit.b_variance;
      row.d_min = fit.d_min;
    } catch (const Error& e) {
      row.error = std::string(to_string(e.kind())) + ": " + e.what();
      row.b_variance = row.d_min = std::numeric_limits<double>::quiet_NaN();
    }
    sel.table.push_back(row);
  }
  for (const K0Row& row : sel.table) {
    if (row.error.empty()) best = std::min(best, row.b_variance);
  }
  if (!std::isfinite(best)) {
    throw Error(ErrorKind::InsufficientData, "select_k0: every grid point failed; first: " +
                                                 sel.table.front().error);
  }
  const double tie = 1e-10 * std::max(1.0, std::abs(best));
  for (const K0Row& row : sel.table) {
    if (row.error.empty() && row.b_variance <= best + tie &&
        (sel.best_k0 == 0 || row.k0 < sel.best_k0)) {
      sel.best_k0 = row.k0;
    }
  }
  return sel;
}

std::vector<int> default_k0_grid() {
  std::vector<int> grid(15);
  std::iota(grid.begin(), grid.end(), 11);
  return grid;
}

}  // namespace bscaling
