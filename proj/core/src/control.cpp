#include "convexctrl/control.hpp"

#include <cmath>

namespace convexctrl {

int TimeGrid::node_index(double t, double tol) const {
  const double raw = (t - t0) / dt();
  const double rounded = std::round(raw);
  if (std::abs(raw - rounded) > tol * std::max(1.0, std::abs(raw)))
    throw std::invalid_argument("TimeGrid: time is not aligned with a grid node");
  const int k = static_cast<int>(rounded);
  if (k < 0 || k > steps) throw std::invalid_argument("TimeGrid: time outside the grid");
  return k;
}

FeedbackField FeedbackField::constant(Eigen::VectorXd v) {
  FeedbackField f;
  f.kind = Kind::constant;
  f.value = std::move(v);
  f.u_max = std::max(1.0, f.value.norm());
  return f;
}

FeedbackField FeedbackField::goal_seeking(Eigen::VectorXd goal, double gain, double u_max) {
  if (!(u_max > 0.0)) throw std::invalid_argument("FeedbackField: u_max must be positive");
  FeedbackField f;
  f.kind = Kind::goal_seeking;
  f.goal = std::move(goal);
  f.gain = gain;
  f.u_max = u_max;
  return f;
}

Eigen::VectorXd smooth_saturate(const Eigen::VectorXd& z, double u_max) {
  const double r = z.norm();
  if (r < 1e-12) return z;
  return z * (u_max * std::tanh(r / u_max) / r);
}

Eigen::MatrixXd smooth_saturate_jacobian(const Eigen::VectorXd& z, double u_max) {
  const int d = static_cast<int>(z.size());
  const double r = z.norm();
  if (r < 1e-8) return Eigen::MatrixXd::Identity(d, d);
  const double t = std::tanh(r / u_max);
  const double a = u_max * t / r;                 // radial scale
  const double b = (1.0 - t * t) - a;             // correction along z
  const Eigen::VectorXd zh = z / r;
  return a * Eigen::MatrixXd::Identity(d, d) + b * (zh * zh.transpose());
}

Eigen::VectorXd FeedbackField::eval(const StateC& c) const {
  if (kind == Kind::constant) return value;
  return smooth_saturate(gain * (goal - c.x), u_max);
}

Eigen::MatrixXd FeedbackField::x_jacobian(const StateC& c) const {
  const int d = c.dim_x();
  if (kind == Kind::constant) return Eigen::MatrixXd::Zero(d, d);
  return smooth_saturate_jacobian(gain * (goal - c.x), u_max) * (-gain);
}

bool FeedbackField::equals(const FeedbackField& other, double tol) const {
  if (kind != other.kind) return false;
  if (kind == Kind::constant) {
    if (value.size() != other.value.size()) return false;
    return (value - other.value).lpNorm<Eigen::Infinity>() <= tol;
  }
  if (goal.size() != other.goal.size()) return false;
  return (goal - other.goal).lpNorm<Eigen::Infinity>() <= tol &&
         std::abs(gain - other.gain) <= tol && std::abs(u_max - other.u_max) <= tol;
}

ControlSchedule ControlSchedule::constant(const TimeGrid& grid, ControlValue v) {
  grid.validate();
  ControlSchedule s;
  s.grid = grid;
  s.values.assign(static_cast<std::size_t>(grid.steps), v);
  return s;
}

}  // namespace convexctrl
