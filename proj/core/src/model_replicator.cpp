#include <cmath>

#include "convexctrl/model.hpp"

namespace convexctrl {

// Strategy grid: n midpoints of [0,1] with uniform weights 1/n. Densities
// live in the box [r, R] with grid mean 1. The transition operator is
//   T_k = (F_k - (1/n) sum_m F_m l_m) l_k,  F_k = (1/N) sum_j J(x, v_k, x_j),
// and the entropy operator S_k = (sbar - log l_k) l_k with
// sbar = (1/n) sum l_m log l_m; both have zero grid mean by construction.

void ReplicatorParams::validate() const {
  if (d < 1 || n < 2) throw std::invalid_argument("replicator: need d >= 1 and n >= 2");
  if (!(entropy_eps > 0.0)) throw std::invalid_argument("replicator: entropy_eps must be positive");
  if (!(0.0 < box_r && box_r < box_R))
    throw std::invalid_argument("replicator: need 0 < r < R");
  if (!(box_r <= 1.0 && 1.0 <= box_R))
    throw std::invalid_argument("replicator: the uniform density must be admissible (r <= 1 <= R)");
  if (!(payoff_width > 0.0)) throw std::invalid_argument("replicator: payoff width must be positive");
  if (track_weight < 0.0 || final_weight < 0.0 || control_weight < 0.0)
    throw std::invalid_argument("replicator: cost weights must be >= 0");
  if (goal.size() != d) throw std::invalid_argument("replicator: goal must have dimension d");
}

ReplicatorModel::ReplicatorModel(ReplicatorParams params)
    : Model(LabelMode::density, params.d, params.n), p_(std::move(params)) {
  if (p_.goal.size() == 0) p_.goal = Eigen::VectorXd::Zero(p_.d);
  p_.validate();
}

double ReplicatorModel::grid_point(int k) const {
  return (static_cast<double>(k) + 0.5) / static_cast<double>(n_);
}

double ReplicatorModel::payoff(const Eigen::VectorXd& x, double v, const Eigen::VectorXd& xp) const {
  const double b = p_.payoff_base + p_.payoff_slope * v;
  const double w2 = p_.payoff_width * p_.payoff_width;
  return b * std::exp(-0.5 * (x - xp).squaredNorm() / w2);
}

Eigen::VectorXd ReplicatorModel::payoff_grad_x(const Eigen::VectorXd& x, double v,
                                               const Eigen::VectorXd& xp) const {
  const double w2 = p_.payoff_width * p_.payoff_width;
  return -payoff(x, v, xp) / w2 * (x - xp);
}

Eigen::VectorXd ReplicatorModel::payoff_grad_xp(const Eigen::VectorXd& x, double v,
                                                const Eigen::VectorXd& xp) const {
  return -payoff_grad_x(x, v, xp);
}

Eigen::VectorXd ReplicatorModel::entropy_operator(const Eigen::VectorXd& lam) const {
  if ((lam.array() <= 0.0).any())
    throw std::invalid_argument("replicator: entropy operator needs strictly positive densities");
  const Eigen::ArrayXd loglam = lam.array().log();
  const double sbar = (lam.array() * loglam).mean();
  return ((sbar - loglam) * lam.array()).matrix();
}

Eigen::MatrixXd ReplicatorModel::entropy_operator_differential(const Eigen::VectorXd& lam) const {
  if ((lam.array() <= 0.0).any())
    throw std::invalid_argument("replicator: entropy operator needs strictly positive densities");
  const int n = static_cast<int>(lam.size());
  const Eigen::ArrayXd loglam = lam.array().log();
  const double sbar = (lam.array() * loglam).mean();
  Eigen::MatrixXd D = ((sbar - loglam - 1.0).matrix()).asDiagonal();
  D += lam * ((1.0 + loglam).matrix().transpose()) / static_cast<double>(n);
  return D;
}

TangentVec ReplicatorModel::velocity(double, const Ensemble& mu, const StateC& c,
                                     const FeedbackField& u) const {
  check_state(c);
  if (mu.size() == 0) throw std::invalid_argument("replicator: empty ensemble");
  const int big_n = mu.size();
  TangentVec out = zero_tangent(mode_, d_, n_);
  Eigen::VectorXd conv = Eigen::VectorXd::Zero(d_);
  Eigen::VectorXd payoff_mean = Eigen::VectorXd::Zero(n_);
  for (int j = 0; j < big_n; ++j) {
    conv += p_.kernel.eval(mu[j].x - c.x);
    for (int k = 0; k < n_; ++k) payoff_mean[k] += payoff(c.x, grid_point(k), mu[j].x);
  }
  conv /= static_cast<double>(big_n);
  payoff_mean /= static_cast<double>(big_n);
  const double fbar = payoff_mean.dot(c.lam) / static_cast<double>(n_);
  out.dx = conv + u.eval(c);
  out.dlam = ((payoff_mean.array() - fbar) * c.lam.array()).matrix() +
             p_.entropy_eps * entropy_operator(c.lam);
  return out;
}

Eigen::MatrixXd ReplicatorModel::c_differential(double, const Ensemble& mu, const StateC& c,
                                                const FeedbackField& u) const {
  check_state(c);
  const int big_n = mu.size();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d_ + n_, d_ + n_);
  Eigen::MatrixXd dconv = Eigen::MatrixXd::Zero(d_, d_);
  Eigen::VectorXd payoff_mean = Eigen::VectorXd::Zero(n_);
  Eigen::MatrixXd payoff_grad = Eigen::MatrixXd::Zero(n_, d_);  // row k: (1/N) sum_j grad_x J
  for (int j = 0; j < big_n; ++j) {
    dconv -= p_.kernel.jacobian(mu[j].x - c.x);
    for (int k = 0; k < n_; ++k) {
      payoff_mean[k] += payoff(c.x, grid_point(k), mu[j].x);
      payoff_grad.row(k) += payoff_grad_x(c.x, grid_point(k), mu[j].x).transpose();
    }
  }
  dconv /= static_cast<double>(big_n);
  payoff_mean /= static_cast<double>(big_n);
  payoff_grad /= static_cast<double>(big_n);
  const double inv_grid = 1.0 / static_cast<double>(n_);
  const double fbar = payoff_mean.dot(c.lam) * inv_grid;
  const Eigen::RowVectorXd gbar = (c.lam.transpose() * payoff_grad) * inv_grid;

  M.topLeftCorner(d_, d_) = dconv + u.x_jacobian(c);
  for (int k = 0; k < n_; ++k)
    M.block(d_ + k, 0, 1, d_) = c.lam[k] * (payoff_grad.row(k) - gbar);
  // d T_k / d l_m = delta_km (F_k - fbar) - (1/n) F_m l_k
  Eigen::MatrixXd label_block = ((payoff_mean.array() - fbar).matrix()).asDiagonal();
  label_block -= (c.lam * payoff_mean.transpose()) * inv_grid;
  label_block += p_.entropy_eps * entropy_operator_differential(c.lam);
  M.bottomRightCorner(n_, n_) = label_block;
  return M;
}

Eigen::MatrixXd ReplicatorModel::mu_gradient(double, const Ensemble& mu, const StateC& c,
                                             const FeedbackField&, int tilde_index) const {
  check_state(c);
  if (tilde_index < 0 || tilde_index >= mu.size())
    throw std::invalid_argument("replicator: tilde_index out of range");
  const StateC& ct = mu[tilde_index];
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d_ + n_, d_ + n_);
  G.topLeftCorner(d_, d_) = p_.kernel.jacobian(ct.x - c.x);
  Eigen::MatrixXd rows(n_, d_);
  for (int k = 0; k < n_; ++k) rows.row(k) = payoff_grad_xp(c.x, grid_point(k), ct.x).transpose();
  const Eigen::RowVectorXd rbar = (c.lam.transpose() * rows) / static_cast<double>(n_);
  for (int k = 0; k < n_; ++k) G.block(d_ + k, 0, 1, d_) = c.lam[k] * (rows.row(k) - rbar);
  return G;
}

Eigen::MatrixXd ReplicatorModel::control_jacobian(double, const Ensemble&, const StateC&,
                                                  const FeedbackField&) const {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d_ + n_, d_);
  B.topLeftCorner(d_, d_) = Eigen::MatrixXd::Identity(d_, d_);
  return B;
}

bool ReplicatorModel::has_running_cost() const {
  return p_.track_weight > 0.0 || p_.control_weight > 0.0;
}

double ReplicatorModel::cost_integrand(double, const Ensemble&, const StateC& c,
                                       const FeedbackField& u) const {
  return p_.track_weight * (c.x - p_.goal).squaredNorm() +
         p_.control_weight * u.eval(c).squaredNorm();
}

CostateVec ReplicatorModel::cost_integrand_c_gradient(double, const Ensemble&, const StateC& c,
                                                      const FeedbackField& u) const {
  Eigen::VectorXd px = 2.0 * p_.track_weight * (c.x - p_.goal);
  px += 2.0 * p_.control_weight * u.x_jacobian(c).transpose() * u.eval(c);
  return make_costate(mode_, std::move(px), Eigen::VectorXd::Zero(n_));
}

Eigen::VectorXd ReplicatorModel::cost_integrand_u_gradient(double, const Ensemble&,
                                                           const StateC& c,
                                                           const FeedbackField& u) const {
  return 2.0 * p_.control_weight * u.eval(c);
}

double ReplicatorModel::final_cost(const Ensemble& mu) const {
  double phi = 0.0;
  for (int i = 0; i < mu.size(); ++i) phi += (mu[i].x - p_.goal).squaredNorm();
  return p_.final_weight * phi / static_cast<double>(mu.size());
}

CostateVec ReplicatorModel::final_cost_mu_gradient(const Ensemble& mu, int tilde_index) const {
  Eigen::VectorXd px = 2.0 * p_.final_weight * (mu[tilde_index].x - p_.goal);
  return make_costate(mode_, std::move(px), Eigen::VectorXd::Zero(n_));
}

}  // namespace convexctrl
