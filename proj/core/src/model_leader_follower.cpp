#include <cmath>

#include "convexctrl/model.hpp"

namespace convexctrl {

// Internals use the scalar label lambda = lam[0] (follower weight); the
// simplex pair is (lambda, 1 - lambda) and every label velocity is (T, -T),
// so the first component determines the second. Matrix representatives put
// the full d/d lambda into the lam[0] column; on zero-sum tangents this is
// the unique action, and canonical costates do not depend on the choice.

void LeaderFollowerParams::validate() const {
  if (d < 1) throw std::invalid_argument("leader_follower: d >= 1 required");
  if (std::abs(g1_scale * 0.0) > 1e-12 || std::abs(g1_scale * 1.0 - 1.0) > 1e-12)
    throw std::invalid_argument("leader_follower: g1 must satisfy g1(0) = 0 and g1(1) = 1");
  if (h_f.amp < 0.0 || h_l.amp < 0.0)
    throw std::invalid_argument("leader_follower: switching-rate amplitudes must be >= 0");
  if (!(h_full_until <= h_zero_from) || h_zero_from > 0.8 + 1e-12)
    throw std::invalid_argument("leader_follower: control gain must vanish from lambda = 0.8 on");
  if (!(control_weight > 0.0))
    throw std::invalid_argument("leader_follower: control_weight must be positive");
  if (track_weight < 0.0 || cohesion_weight < 0.0 || final_weight < 0.0)
    throw std::invalid_argument("leader_follower: cost weights must be >= 0");
  if (control_exponent < 1.0)
    throw std::invalid_argument("leader_follower: cost exponent must be >= 1");
  if (goal.size() != d) throw std::invalid_argument("leader_follower: goal must have dimension d");
}

LeaderFollowerModel::LeaderFollowerModel(LeaderFollowerParams params)
    : Model(LabelMode::simplex, params.d, 2), p_(std::move(params)) {
  if (p_.goal.size() == 0) p_.goal = Eigen::VectorXd::Zero(p_.d);
  p_.validate();
}

double LeaderFollowerModel::h_gain(double lam) const {
  return 1.0 - SmoothStep{p_.h_full_until, p_.h_zero_from}.value(lam);
}

double LeaderFollowerModel::h_gain_deriv(double lam) const {
  return -SmoothStep{p_.h_full_until, p_.h_zero_from}.deriv(lam);
}

double LeaderFollowerModel::ell(EllChoice which, double lam) const {
  switch (which) {
    case EllChoice::follower_fraction: return p_.g.value(lam);
    case EllChoice::leader_fraction: return 1.0 - p_.g.value(lam);
    case EllChoice::one: return 1.0;
  }
  return 1.0;
}

double LeaderFollowerModel::ell_deriv(EllChoice which, double lam) const {
  switch (which) {
    case EllChoice::follower_fraction: return p_.g.deriv(lam);
    case EllChoice::leader_fraction: return -p_.g.deriv(lam);
    case EllChoice::one: return 0.0;
  }
  return 0.0;
}

Eigen::VectorXd LeaderFollowerModel::follower_barycenter(const Ensemble& mu) const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d_);
  for (int j = 0; j < mu.size(); ++j) m += p_.g.value(mu[j].lam[0]) * mu[j].x;
  return m / static_cast<double>(mu.size());
}

struct LeaderFollowerModel::Fields {
  Eigen::VectorXd conv_f, conv_l;   // follower/leader side kernel sums at x
  Eigen::MatrixXd dconv_f, dconv_l; // their x-derivatives
  double alpha_f = 0.0, alpha_l = 0.0;
  Eigen::VectorXd grad_alpha_f, grad_alpha_l;
};

LeaderFollowerModel::Fields LeaderFollowerModel::fields_at(const Ensemble& mu, const StateC& c,
                                                           bool with_jacobians) const {
  Fields f;
  f.conv_f = Eigen::VectorXd::Zero(d_);
  f.conv_l = Eigen::VectorXd::Zero(d_);
  f.grad_alpha_f = Eigen::VectorXd::Zero(d_);
  f.grad_alpha_l = Eigen::VectorXd::Zero(d_);
  if (with_jacobians) {
    f.dconv_f = Eigen::MatrixXd::Zero(d_, d_);
    f.dconv_l = Eigen::MatrixXd::Zero(d_, d_);
  }
  const int n = mu.size();
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd z = mu[j].x - c.x;
    const double gj = p_.g.value(mu[j].lam[0]);
    f.conv_f += gj * p_.k_ff.eval(z) + (1.0 - gj) * p_.k_lf.eval(z);
    f.conv_l += gj * p_.k_fl.eval(z) + (1.0 - gj) * p_.k_ll.eval(z);
    f.alpha_f += p_.h_f.eval(z) * ell(p_.ell_f, mu[j].lam[0]);
    f.alpha_l += p_.h_l.eval(z) * ell(p_.ell_l, mu[j].lam[0]);
    // d/dx of K(x_j - x) and H(x_j - x) carries a minus sign
    f.grad_alpha_f -= p_.h_f.grad(z) * ell(p_.ell_f, mu[j].lam[0]);
    f.grad_alpha_l -= p_.h_l.grad(z) * ell(p_.ell_l, mu[j].lam[0]);
    if (with_jacobians) {
      f.dconv_f -= gj * p_.k_ff.jacobian(z) + (1.0 - gj) * p_.k_lf.jacobian(z);
      f.dconv_l -= gj * p_.k_fl.jacobian(z) + (1.0 - gj) * p_.k_ll.jacobian(z);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  f.conv_f *= inv_n;
  f.conv_l *= inv_n;
  f.alpha_f *= inv_n;
  f.alpha_l *= inv_n;
  f.grad_alpha_f *= inv_n;
  f.grad_alpha_l *= inv_n;
  if (with_jacobians) {
    f.dconv_f *= inv_n;
    f.dconv_l *= inv_n;
  }
  return f;
}

TangentVec LeaderFollowerModel::velocity(double, const Ensemble& mu, const StateC& c,
                                         const FeedbackField& u) const {
  check_state(c);
  if (mu.size() == 0) throw std::invalid_argument("leader_follower: empty ensemble");
  const Fields f = fields_at(mu, c, false);
  const double lam = c.lam[0];
  const double gl = p_.g.value(lam);
  TangentVec out = zero_tangent(mode_, d_, n_);
  out.dx = gl * f.conv_f + (1.0 - gl) * f.conv_l + h_gain(lam) * u.eval(c);
  const double trans = -f.alpha_f * g1(lam) + f.alpha_l * (1.0 - g1(lam));
  out.dlam[0] = trans;
  out.dlam[1] = -trans;
  return out;
}

Eigen::MatrixXd LeaderFollowerModel::c_differential(double, const Ensemble& mu, const StateC& c,
                                                    const FeedbackField& u) const {
  check_state(c);
  const Fields f = fields_at(mu, c, true);
  const double lam = c.lam[0];
  const double gl = p_.g.value(lam);
  const double dgl = p_.g.deriv(lam);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d_ + 2, d_ + 2);
  M.topLeftCorner(d_, d_) =
      gl * f.dconv_f + (1.0 - gl) * f.dconv_l + h_gain(lam) * u.x_jacobian(c);
  M.block(0, d_, d_, 1) = dgl * (f.conv_f - f.conv_l) + h_gain_deriv(lam) * u.eval(c);
  const Eigen::RowVectorXd trans_x =
      (-g1(lam) * f.grad_alpha_f + (1.0 - g1(lam)) * f.grad_alpha_l).transpose();
  M.block(d_, 0, 1, d_) = trans_x;
  M.block(d_ + 1, 0, 1, d_) = -trans_x;
  const double trans_lam = p_.g1_scale * (-f.alpha_f - f.alpha_l);
  M(d_, d_) = trans_lam;
  M(d_ + 1, d_) = -trans_lam;
  return M;
}

Eigen::MatrixXd LeaderFollowerModel::mu_gradient(double, const Ensemble& mu, const StateC& c,
                                                 const FeedbackField&, int tilde_index) const {
  check_state(c);
  if (tilde_index < 0 || tilde_index >= mu.size())
    throw std::invalid_argument("leader_follower: tilde_index out of range");
  const StateC& ct = mu[tilde_index];
  const Eigen::VectorXd z = ct.x - c.x;
  const double lam = c.lam[0];
  const double gl = p_.g.value(lam);
  const double gt = p_.g.value(ct.lam[0]);
  const double dgt = p_.g.deriv(ct.lam[0]);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d_ + 2, d_ + 2);
  // velocity rows: d/d x_tilde of K(x_tilde - x) is +Jac K
  G.topLeftCorner(d_, d_) =
      gl * (gt * p_.k_ff.jacobian(z) + (1.0 - gt) * p_.k_lf.jacobian(z)) +
      (1.0 - gl) * (gt * p_.k_fl.jacobian(z) + (1.0 - gt) * p_.k_ll.jacobian(z));
  G.block(0, d_, d_, 1) = gl * dgt * (p_.k_ff.eval(z) - p_.k_lf.eval(z)) +
                          (1.0 - gl) * dgt * (p_.k_fl.eval(z) - p_.k_ll.eval(z));
  // transition rows
  const Eigen::RowVectorXd trans_x =
      (-g1(lam) * ell(p_.ell_f, ct.lam[0]) * p_.h_f.grad(z) +
       (1.0 - g1(lam)) * ell(p_.ell_l, ct.lam[0]) * p_.h_l.grad(z))
          .transpose();
  G.block(d_, 0, 1, d_) = trans_x;
  G.block(d_ + 1, 0, 1, d_) = -trans_x;
  const double trans_lam = -g1(lam) * ell_deriv(p_.ell_f, ct.lam[0]) * p_.h_f.eval(z) +
                           (1.0 - g1(lam)) * ell_deriv(p_.ell_l, ct.lam[0]) * p_.h_l.eval(z);
  G(d_, d_) = trans_lam;
  G(d_ + 1, d_) = -trans_lam;
  return G;
}

Eigen::MatrixXd LeaderFollowerModel::control_jacobian(double, const Ensemble&, const StateC& c,
                                                      const FeedbackField&) const {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d_ + 2, d_);
  B.topLeftCorner(d_, d_) = h_gain(c.lam[0]) * Eigen::MatrixXd::Identity(d_, d_);
  return B;
}

bool LeaderFollowerModel::has_running_cost() const { return !p_.mayer_only; }

namespace {

// p |u|^(p-2) u, guarded at u = 0
Eigen::VectorXd power_cost_gradient(const Eigen::VectorXd& u, double p) {
  const double r = u.norm();
  if (r < 1e-300) return Eigen::VectorXd::Zero(u.size());
  return p * std::pow(r, p - 2.0) * u;
}

}  // namespace

double LeaderFollowerModel::cost_integrand(double, const Ensemble& mu, const StateC& c,
                                           const FeedbackField& u) const {
  if (!has_running_cost()) return 0.0;
  const double lam = c.lam[0];
  double l = p_.track_weight * (c.x - p_.goal).squaredNorm();
  if (p_.cohesion_weight > 0.0) {
    const Eigen::VectorXd m_f = follower_barycenter(mu);
    l += p_.cohesion_weight * theta(lam) * (c.x - m_f).squaredNorm();
  }
  l += p_.control_weight * std::pow(u.eval(c).norm(), p_.control_exponent);
  return l;
}

CostateVec LeaderFollowerModel::cost_integrand_c_gradient(double, const Ensemble& mu,
                                                          const StateC& c,
                                                          const FeedbackField& u) const {
  if (!has_running_cost()) return zero_costate(mode_, d_, n_);
  const double lam = c.lam[0];
  Eigen::VectorXd px = 2.0 * p_.track_weight * (c.x - p_.goal);
  double dlam = 0.0;
  if (p_.cohesion_weight > 0.0) {
    const Eigen::VectorXd m_f = follower_barycenter(mu);
    px += 2.0 * p_.cohesion_weight * theta(lam) * (c.x - m_f);
    dlam += -p_.cohesion_weight * p_.g.deriv(lam) * (c.x - m_f).squaredNorm();
  }
  const Eigen::VectorXd uval = u.eval(c);
  const Eigen::VectorXd du = p_.control_weight * power_cost_gradient(uval, p_.control_exponent);
  px += u.x_jacobian(c).transpose() * du;
  Eigen::VectorXd plam_raw = Eigen::VectorXd::Zero(2);
  plam_raw[0] = dlam;
  return make_costate(mode_, std::move(px), plam_raw);
}

CostateVec LeaderFollowerModel::cost_integrand_mu_gradient(double, const Ensemble& mu,
                                                           const StateC& c, const FeedbackField&,
                                                           int tilde_index) const {
  if (!has_running_cost() || p_.cohesion_weight == 0.0) return zero_costate(mode_, d_, n_);
  const StateC& ct = mu[tilde_index];
  const Eigen::VectorXd m_f = follower_barycenter(mu);
  const Eigen::VectorXd q = 2.0 * p_.cohesion_weight * theta(c.lam[0]) * (c.x - m_f);
  Eigen::VectorXd px = -p_.g.value(ct.lam[0]) * q;
  Eigen::VectorXd plam_raw = Eigen::VectorXd::Zero(2);
  plam_raw[0] = -p_.g.deriv(ct.lam[0]) * q.dot(ct.x);
  return make_costate(mode_, std::move(px), plam_raw);
}

Eigen::VectorXd LeaderFollowerModel::cost_integrand_u_gradient(double, const Ensemble&,
                                                               const StateC& c,
                                                               const FeedbackField& u) const {
  if (!has_running_cost()) return Eigen::VectorXd::Zero(d_);
  return p_.control_weight * power_cost_gradient(u.eval(c), p_.control_exponent);
}

double LeaderFollowerModel::final_cost(const Ensemble& mu) const {
  double phi = 0.0;
  for (int i = 0; i < mu.size(); ++i) phi += (mu[i].x - p_.goal).squaredNorm();
  return p_.final_weight * phi / static_cast<double>(mu.size());
}

CostateVec LeaderFollowerModel::final_cost_mu_gradient(const Ensemble& mu, int tilde_index) const {
  Eigen::VectorXd px = 2.0 * p_.final_weight * (mu[tilde_index].x - p_.goal);
  return make_costate(mode_, std::move(px), Eigen::VectorXd::Zero(2));
}

}  // namespace convexctrl
