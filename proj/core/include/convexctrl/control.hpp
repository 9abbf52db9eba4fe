#pragma once

// Admissible controls. The compact control set U is realised as a finite
// dictionary of bounded feedback fields c -> R^d; open-loop values are
// constant fields. A schedule is piecewise constant on the intervals of a
// uniform time grid, per-agent or shared across the ensemble.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "convexctrl/geometry.hpp"

namespace convexctrl {

struct TimeGrid {
  double t0 = 0.0;
  double t1 = 1.0;
  int steps = 1;

  double dt() const { return (t1 - t0) / static_cast<double>(steps); }
  double node(int k) const { return t0 + static_cast<double>(k) * dt(); }
  void validate() const {
    if (steps < 1 || !(t1 > t0)) throw std::invalid_argument("TimeGrid: need steps >= 1 and t1 > t0");
  }
  // nearest node index of time t; throws if t is not grid-aligned within tol
  int node_index(double t, double tol = 1e-9) const;
};

struct FeedbackField {
  enum class Kind { constant, goal_seeking };

  Kind kind = Kind::constant;
  Eigen::VectorXd value;   // constant: the control vector
  Eigen::VectorXd goal;    // goal_seeking: target point
  double gain = 1.0;       // goal_seeking: kappa in kappa*(goal - x)
  double u_max = 1.0;      // smooth saturation bound, |u| < u_max

  static FeedbackField constant(Eigen::VectorXd v);
  static FeedbackField goal_seeking(Eigen::VectorXd goal, double gain, double u_max);

  Eigen::VectorXd eval(const StateC& c) const;
  // derivative w.r.t. the position block, d x d (fields do not read labels)
  Eigen::MatrixXd x_jacobian(const StateC& c) const;
  bool equals(const FeedbackField& other, double tol = 0.0) const;
};

// |sat(z)| < u_max, sat(z) = z for small |z|, smooth everywhere
Eigen::VectorXd smooth_saturate(const Eigen::VectorXd& z, double u_max);
Eigen::MatrixXd smooth_saturate_jacobian(const Eigen::VectorXd& z, double u_max);

// One control decision: a field per agent (size N) or one shared field (size 1).
struct ControlValue {
  std::vector<FeedbackField> fields;

  const FeedbackField& at(int agent) const {
    return fields.size() == 1 ? fields.front() : fields[static_cast<std::size_t>(agent)];
  }
  bool shared() const { return fields.size() == 1; }
  static ControlValue shared_field(FeedbackField f) { return ControlValue{{std::move(f)}}; }
};

struct ControlSchedule {
  TimeGrid grid;
  std::vector<ControlValue> values;  // one per interval [t_k, t_{k+1})

  const ControlValue& at_interval(int k) const { return values[static_cast<std::size_t>(k)]; }
  ControlValue& at_interval(int k) { return values[static_cast<std::size_t>(k)]; }
  void validate() const {
    grid.validate();
    if (static_cast<int>(values.size()) != grid.steps)
      throw std::invalid_argument("ControlSchedule: one value per grid interval required");
  }
  static ControlSchedule constant(const TimeGrid& grid, ControlValue v);
};

// The finite realisation of the compact control set U. With per_agent set,
// every agent picks its own atom when maximising the Hamiltonian; otherwise
// one common feedback field is selected per time node.
struct ControlDictionary {
  std::vector<ControlValue> atoms;  // each holds one shared field
  bool per_agent = false;

  int size() const { return static_cast<int>(atoms.size()); }
  void validate() const {
    if (atoms.empty()) throw std::invalid_argument("ControlDictionary: empty dictionary");
    for (const auto& a : atoms)
      if (a.fields.size() != 1)
        throw std::invalid_argument("ControlDictionary: atoms must hold a single field");
  }
};

}  // namespace convexctrl
