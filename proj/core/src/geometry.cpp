#include "convexctrl/geometry.hpp"

#include <cmath>
#include <limits>

namespace convexctrl {

namespace {

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

void check_match(const CostateVec& p, const TangentVec& v) {
  if (p.mode != v.mode || p.dim_x() != v.dim_x() || p.n_labels() != v.n_labels())
    throw std::invalid_argument("pairing: dimension or mode mismatch");
}

}  // namespace

TangentVec zero_tangent(LabelMode mode, int d, int n) {
  return TangentVec{mode, Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(n)};
}

CostateVec zero_costate(LabelMode mode, int d, int n) {
  return CostateVec{mode, Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(n)};
}

Eigen::VectorXd canonical_dual(const Eigen::VectorXd& p_raw) {
  check_finite(p_raw, "canonical_dual");
  if (p_raw.size() == 0) return p_raw;
  return p_raw.array() - p_raw.mean();
}

CostateVec make_costate(LabelMode mode, Eigen::VectorXd px, const Eigen::VectorXd& plam_raw) {
  check_finite(px, "make_costate");
  return CostateVec{mode, std::move(px), canonical_dual(plam_raw)};
}

double pairing(const CostateVec& p, const TangentVec& v) {
  check_match(p, v);
  const double w = eta_weight(p.mode, p.n_labels());
  return p.px.dot(v.dx) + w * p.plam.dot(v.dlam);
}

bool in_state_space(const StateC& c, double tol, double box_r, double box_R) {
  if (!c.x.allFinite() || !c.lam.allFinite()) return false;
  const int n = c.n_labels();
  if (n == 0) return true;
  if (c.mode == LabelMode::simplex) {
    if ((c.lam.array() < -tol).any()) return false;
    return std::abs(c.lam.sum() - 1.0) <= tol * std::max(1, n);
  }
  if ((c.lam.array() < box_r - tol).any()) return false;
  if ((c.lam.array() > box_R + tol).any()) return false;
  return std::abs(c.lam.mean() - 1.0) <= tol;
}

Eigen::VectorXd stacked(const TangentVec& v) {
  Eigen::VectorXd s(v.dim_x() + v.n_labels());
  s << v.dx, v.dlam;
  return s;
}

Eigen::VectorXd stacked(const CostateVec& p) {
  Eigen::VectorXd s(p.dim_x() + p.n_labels());
  s << p.px, p.plam;
  return s;
}

TangentVec tangent_from_stacked(LabelMode mode, int d, const Eigen::VectorXd& s) {
  return TangentVec{mode, s.head(d), s.tail(s.size() - d)};
}

CostateVec costate_from_stacked(LabelMode mode, int d, const Eigen::VectorXd& s) {
  return CostateVec{mode, s.head(d), canonical_dual(s.tail(s.size() - d))};
}

TangentVec apply(const Eigen::MatrixXd& M, const TangentVec& v) {
  const Eigen::VectorXd s = M * stacked(v);
  return tangent_from_stacked(v.mode, v.dim_x(), s);
}

Eigen::MatrixXd adjoint_matrix(const Eigen::MatrixXd& M, LabelMode mode, int d, int n) {
  // adjoint w.r.t. the duality pairing: W^{-1} M^T W with W = diag(I_d, eta I_n)
  const double w = eta_weight(mode, n);
  Eigen::VectorXd weights(d + n);
  weights.head(d).setOnes();
  weights.tail(n).setConstant(w);
  return weights.cwiseInverse().asDiagonal() * M.transpose() * weights.asDiagonal();
}

CostateVec apply_adjoint(const Eigen::MatrixXd& M, const CostateVec& p) {
  const int d = p.dim_x();
  const int n = p.n_labels();
  const Eigen::VectorXd s = adjoint_matrix(M, p.mode, d, n) * stacked(p);
  return costate_from_stacked(p.mode, d, s);
}

StateC advance(const StateC& c, const TangentVec& v, double dt) {
  return StateC{c.mode, c.x + dt * v.dx, c.lam + dt * v.dlam};
}

TangentVec state_difference(const StateC& a, const StateC& b) {
  return TangentVec{a.mode, a.x - b.x, a.lam - b.lam};
}

double ground_distance(const StateC& a, const StateC& b) {
  if (a.mode != b.mode || a.dim_x() != b.dim_x() || a.n_labels() != b.n_labels())
    throw std::invalid_argument("ground_distance: mismatched states");
  const double dx = (a.x - b.x).norm();
  if (a.mode == LabelMode::simplex) return dx + (a.lam - b.lam).lpNorm<1>();
  const int n = a.n_labels();
  return dx + std::sqrt((a.lam - b.lam).squaredNorm() / static_cast<double>(n));
}

double tangent_norm_E(const TangentVec& v) {
  const double dx = v.dx.norm();
  if (v.mode == LabelMode::simplex) return dx + v.dlam.lpNorm<1>();
  return dx + std::sqrt(v.dlam.squaredNorm() / static_cast<double>(std::max(1, v.n_labels())));
}

double tangent_norm(const TangentVec& v) {
  const double w = eta_weight(v.mode, v.n_labels());
  return std::sqrt(v.dx.squaredNorm() + w * v.dlam.squaredNorm());
}

double costate_norm(const CostateVec& p) {
  const double w = eta_weight(p.mode, p.n_labels());
  return std::sqrt(p.px.squaredNorm() + w * p.plam.squaredNorm());
}

TangentVec add(const TangentVec& a, const TangentVec& b) {
  return TangentVec{a.mode, a.dx + b.dx, a.dlam + b.dlam};
}

TangentVec scale(const TangentVec& a, double s) {
  return TangentVec{a.mode, s * a.dx, s * a.dlam};
}

CostateVec add(const CostateVec& a, const CostateVec& b) {
  return CostateVec{a.mode, a.px + b.px, a.plam + b.plam};
}

CostateVec scale(const CostateVec& a, double s) {
  return CostateVec{a.mode, s * a.px, s * a.plam};
}

std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("min_cost_assignment: square matrix required");
  if (n == 0) return {};
  // Hungarian method with potentials (Jonker-Volgenant style), 1-based scratch.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(n) + 1, 0);  // column -> row
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)]) - 1] = j - 1;
  return row_to_col;
}

double w1_empirical(const Ensemble& a, const Ensemble& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("w1_empirical: ensembles must have equal particle counts");
  if (a.mode != b.mode || a.dim_x() != b.dim_x() || a.n_labels() != b.n_labels())
    throw std::invalid_argument("w1_empirical: mismatched ensembles");
  const int n = a.size();
  if (n == 0) return 0.0;
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = ground_distance(a[i], b[j]);
  const std::vector<int> assign = min_cost_assignment(cost);
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += cost(i, assign[static_cast<std::size_t>(i)]);
  return total / static_cast<double>(n);
}

}  // namespace convexctrl
