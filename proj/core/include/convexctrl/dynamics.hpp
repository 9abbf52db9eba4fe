#pragma once

// Time integration of the state equation. Heun's method with hard membership
// checks: both stage points and the result must lie in C; on violation the
// step is halved locally (up to 20 times) and then fails loudly. No silent
// projection is ever applied.

#include <optional>
#include <string>
#include <vector>

#include "convexctrl/control.hpp"
#include "convexctrl/model.hpp"

namespace convexctrl {

inline constexpr double kMembershipTol = 1e-10;
inline constexpr int kMaxHalvings = 20;

class StepSizeError : public std::runtime_error {
 public:
  explicit StepSizeError(const std::string& what) : std::runtime_error(what) {}
};

struct Trajectory {
  TimeGrid grid;
  std::vector<Ensemble> states;  // one snapshot per node, size steps + 1

  const Ensemble& at_node(int k) const { return states[static_cast<std::size_t>(k)]; }
  const Ensemble& initial() const { return states.front(); }
  const Ensemble& final() const { return states.back(); }
};

struct NeedleSpec {
  double tau = 0.0;       // window end, in (t0, t1]
  double eps = 0.0;       // window width >= 0
  ControlValue omega;     // control applied on [tau - eps, tau]
};

// One Heun step of a single state in the frozen ensemble mu (mu enters as an
// external parameter and is not advanced). Result is guaranteed admissible.
StateC step_invariant(const Model& model, double t, const Ensemble& mu, const StateC& c,
                      const FeedbackField& u, double dt);

// Solves the coupled particle system on the grid; the second Heun stage reads
// the Euler-predicted ensemble, so the scheme is second order in the mean-field
// coupling as well.
Trajectory solve_state(const Model& model, const TimeGrid& grid, const Ensemble& mu0,
                       const ControlSchedule& schedule);

// Integrates passive tracer points through the frozen non-local flow of a
// stored trajectory; with points = trajectory.initial() this reproduces the
// trajectory itself (push-forward representation of the solution).
std::vector<StateC> solve_tracers(const Model& model, const Trajectory& traj,
                                  const ControlSchedule& schedule,
                                  const std::vector<StateC>& points, int until_node = -1);

// Replaces the schedule by omega on [tau - eps, tau]; the window must be
// aligned with grid nodes (refine the grid for sub-dt needles).
ControlSchedule needle_control(const ControlSchedule& schedule, const NeedleSpec& spec);

struct NeedleResponse {
  std::vector<TangentVec> quotient;  // (c_eps(tau) - c(tau)) / eps, per particle
  std::vector<TangentVec> limit;     // A(tau, mu(tau), c, omega) - A(tau, mu(tau), c, u(tau))
  double gap = 0.0;                  // max_i |quotient_i - limit_i|
};

NeedleResponse needle_response(const Model& model, const TimeGrid& grid, const Ensemble& mu0,
                               const ControlSchedule& schedule, const NeedleSpec& spec);

// per-particle velocities against a frozen ensemble
std::vector<TangentVec> ensemble_velocity(const Model& model, double t, const Ensemble& mu,
                                          const ControlValue& u);

}  // namespace convexctrl
