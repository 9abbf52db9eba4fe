#include "convexctrl/model.hpp"

#include <cmath>

namespace convexctrl {

double SmoothStep::value(double s) const {
  if (s <= lo) return 0.0;
  if (s >= hi) return 1.0;
  const double t = (s - lo) / (hi - lo);
  return t * t * (3.0 - 2.0 * t);
}

double SmoothStep::deriv(double s) const {
  if (s <= lo || s >= hi) return 0.0;
  const double t = (s - lo) / (hi - lo);
  return 6.0 * t * (1.0 - t) / (hi - lo);
}

Eigen::VectorXd GaussianVecKernel::eval(const Eigen::VectorXd& z) const {
  return amp * std::exp(-0.5 * z.squaredNorm() / (width * width)) * z;
}

Eigen::MatrixXd GaussianVecKernel::jacobian(const Eigen::VectorXd& z) const {
  const int d = static_cast<int>(z.size());
  const double w2 = width * width;
  const double e = amp * std::exp(-0.5 * z.squaredNorm() / w2);
  return e * (Eigen::MatrixXd::Identity(d, d) - (z * z.transpose()) / w2);
}

double GaussianBump::eval(const Eigen::VectorXd& z) const {
  return amp * std::exp(-0.5 * z.squaredNorm() / (width * width));
}

Eigen::VectorXd GaussianBump::grad(const Eigen::VectorXd& z) const {
  return -eval(z) / (width * width) * z;
}

void Model::check_state(const StateC& c) const {
  if (c.mode != mode_ || c.dim_x() != d_ || c.n_labels() != n_)
    throw std::invalid_argument("Model: state does not match the model's space");
}

double Model::cost_integrand(double, const Ensemble&, const StateC&, const FeedbackField&) const {
  return 0.0;
}

CostateVec Model::cost_integrand_c_gradient(double, const Ensemble&, const StateC&,
                                            const FeedbackField&) const {
  return zero_costate(mode_, d_, n_);
}

CostateVec Model::cost_integrand_mu_gradient(double, const Ensemble&, const StateC&,
                                             const FeedbackField&, int) const {
  return zero_costate(mode_, d_, n_);
}

Eigen::VectorXd Model::cost_integrand_u_gradient(double, const Ensemble&, const StateC&,
                                                 const FeedbackField&) const {
  return Eigen::VectorXd::Zero(d_);
}

double Model::final_cost(const Ensemble&) const { return 0.0; }

CostateVec Model::final_cost_mu_gradient(const Ensemble&, int) const {
  return zero_costate(mode_, d_, n_);
}

double running_cost(const Model& model, double t, const Ensemble& mu, const ControlValue& u) {
  if (!model.has_running_cost()) return 0.0;
  double total = 0.0;
  for (int i = 0; i < mu.size(); ++i) total += model.cost_integrand(t, mu, mu[i], u.at(i));
  return total / static_cast<double>(mu.size());
}

CostateVec running_cost_mu_gradient(const Model& model, double t, const Ensemble& mu,
                                    const ControlValue& u, int tilde_index) {
  CostateVec grad = model.cost_integrand_c_gradient(t, mu, mu[tilde_index], u.at(tilde_index));
  const double inv_n = 1.0 / static_cast<double>(mu.size());
  for (int j = 0; j < mu.size(); ++j) {
    const CostateVec coupling = model.cost_integrand_mu_gradient(t, mu, mu[j], u.at(j), tilde_index);
    grad = add(grad, scale(coupling, inv_n));
  }
  return make_costate(grad.mode, grad.px, grad.plam);
}

}  // namespace convexctrl
