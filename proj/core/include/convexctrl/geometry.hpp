#pragma once

// Convex state space C = R^d x Lambda, where Lambda is either the probability
// simplex over n labels or a box-constrained density on an n-point strategy
// grid with uniform reference weights 1/n. Tangent vectors carry zero-sum
// (resp. zero-grid-mean) label components; costates are stored with mean-zero
// label components, the canonical representative of the dual modulo constants.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace convexctrl {

enum class LabelMode { simplex, density };

// weight of one grid point in the discrete eta-integral on label coordinates
inline double eta_weight(LabelMode mode, int n_labels) {
  return mode == LabelMode::simplex ? 1.0 : 1.0 / static_cast<double>(n_labels);
}

struct StateC {
  LabelMode mode = LabelMode::simplex;
  Eigen::VectorXd x;
  Eigen::VectorXd lam;

  int dim_x() const { return static_cast<int>(x.size()); }
  int n_labels() const { return static_cast<int>(lam.size()); }
};

struct TangentVec {
  LabelMode mode = LabelMode::simplex;
  Eigen::VectorXd dx;
  Eigen::VectorXd dlam;

  int dim_x() const { return static_cast<int>(dx.size()); }
  int n_labels() const { return static_cast<int>(dlam.size()); }
};

struct CostateVec {
  LabelMode mode = LabelMode::simplex;
  Eigen::VectorXd px;
  Eigen::VectorXd plam;  // mean-zero

  int dim_x() const { return static_cast<int>(px.size()); }
  int n_labels() const { return static_cast<int>(plam.size()); }
};

// N equally weighted particles; the empirical measure (1/N) sum of deltas.
struct Ensemble {
  LabelMode mode = LabelMode::simplex;
  std::vector<StateC> particles;

  int size() const { return static_cast<int>(particles.size()); }
  int dim_x() const { return particles.empty() ? 0 : particles.front().dim_x(); }
  int n_labels() const { return particles.empty() ? 0 : particles.front().n_labels(); }
  const StateC& operator[](int i) const { return particles[static_cast<std::size_t>(i)]; }
  StateC& operator[](int i) { return particles[static_cast<std::size_t>(i)]; }
};

TangentVec zero_tangent(LabelMode mode, int d, int n);
CostateVec zero_costate(LabelMode mode, int d, int n);

// subtracts the mean; pairing with any tangent direction is unchanged
Eigen::VectorXd canonical_dual(const Eigen::VectorXd& p_raw);

CostateVec make_costate(LabelMode mode, Eigen::VectorXd px, const Eigen::VectorXd& plam_raw);

// <p, v> = px.dx + plam.dlam (simplex) or px.dx + (1/n) plam.dlam (density)
double pairing(const CostateVec& p, const TangentVec& v);

bool in_state_space(const StateC& c, double tol, double box_r = 0.0,
                    double box_R = std::numeric_limits<double>::infinity());

// stacked coordinates [x; lam], used by the materialised differentials
Eigen::VectorXd stacked(const TangentVec& v);
Eigen::VectorXd stacked(const CostateVec& p);
TangentVec tangent_from_stacked(LabelMode mode, int d, const Eigen::VectorXd& s);
CostateVec costate_from_stacked(LabelMode mode, int d, const Eigen::VectorXd& s);

TangentVec apply(const Eigen::MatrixXd& M, const TangentVec& v);

// q with <q, w> = <p, M w> for every tangent w; output is canonical
CostateVec apply_adjoint(const Eigen::MatrixXd& M, const CostateVec& p);
Eigen::MatrixXd adjoint_matrix(const Eigen::MatrixXd& M, LabelMode mode, int d, int n);

StateC advance(const StateC& c, const TangentVec& v, double dt);
TangentVec state_difference(const StateC& a, const StateC& b);  // a - b

// ground norm on E: |x|_2 + |lam|_1 (simplex), |x|_2 + ((1/n) sum lam^2)^(1/2) (density)
double ground_distance(const StateC& a, const StateC& b);
double tangent_norm_E(const TangentVec& v);

// weighted-l2 norms used for error reports
double tangent_norm(const TangentVec& v);
double costate_norm(const CostateVec& p);

TangentVec add(const TangentVec& a, const TangentVec& b);
TangentVec scale(const TangentVec& a, double s);
CostateVec add(const CostateVec& a, const CostateVec& b);
CostateVec scale(const CostateVec& a, double s);

// exact minimum-cost assignment (Hungarian method, O(N^3)); returns column of each row
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

// 1-Wasserstein distance between equal-size, equally weighted ensembles
double w1_empirical(const Ensemble& a, const Ensemble& b);

}  // namespace convexctrl
