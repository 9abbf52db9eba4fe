#include "convexctrl/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "convexctrl/common.hpp"

namespace convexctrl {

namespace {

std::string describe_violation(const Model& model, const StateC& c, double t) {
  std::ostringstream os;
  os << "state left C at t = " << t << " (";
  if (model.mode() == LabelMode::simplex)
    os << "min lam = " << c.lam.minCoeff() << ", sum error = " << std::abs(c.lam.sum() - 1.0);
  else
    os << "lam range = [" << c.lam.minCoeff() << ", " << c.lam.maxCoeff()
       << "], box = [" << model.box_r() << ", " << model.box_R() << "]";
  os << ")";
  return os.str();
}

void require_admissible(const Model& model, const StateC& c, double t) {
  if (!model.admissible(c, kMembershipTol)) throw StepSizeError(describe_violation(model, c, t));
}

// One Heun step of the whole coupled system; throws StepSizeError on a
// membership violation so the caller can halve.
Ensemble heun_system_step(const Model& model, double t, const Ensemble& mu,
                          const ControlValue& u, double dt) {
  const int n = mu.size();
  std::vector<TangentVec> k1(static_cast<std::size_t>(n), zero_tangent(mu.mode, mu.dim_x(), mu.n_labels()));
  parallel_for(n, [&](int i) { k1[static_cast<std::size_t>(i)] = model.velocity(t, mu, mu[i], u.at(i)); });
  Ensemble predictor = mu;
  for (int i = 0; i < n; ++i) {
    predictor[i] = advance(mu[i], k1[static_cast<std::size_t>(i)], dt);
    require_admissible(model, predictor[i], t + dt);
  }
  std::vector<TangentVec> k2(static_cast<std::size_t>(n), zero_tangent(mu.mode, mu.dim_x(), mu.n_labels()));
  parallel_for(n, [&](int i) {
    k2[static_cast<std::size_t>(i)] = model.velocity(t + dt, predictor, predictor[i], u.at(i));
  });
  Ensemble next = mu;
  for (int i = 0; i < n; ++i) {
    next[i] = advance(mu[i], scale(add(k1[static_cast<std::size_t>(i)], k2[static_cast<std::size_t>(i)]), 0.5), dt);
    require_admissible(model, next[i], t + dt);
  }
  return next;
}

Ensemble system_step_with_halving(const Model& model, double t, const Ensemble& mu,
                                  const ControlValue& u, double dt, int depth) {
  try {
    return heun_system_step(model, t, mu, u, dt);
  } catch (const StepSizeError& err) {
    if (depth >= kMaxHalvings) {
      throw StepSizeError(std::string("invariance violated after maximal halving: ") + err.what());
    }
    const Ensemble half = system_step_with_halving(model, t, mu, u, 0.5 * dt, depth + 1);
    return system_step_with_halving(model, t + 0.5 * dt, half, u, 0.5 * dt, depth + 1);
  }
}

}  // namespace

std::vector<TangentVec> ensemble_velocity(const Model& model, double t, const Ensemble& mu,
                                          const ControlValue& u) {
  std::vector<TangentVec> v(static_cast<std::size_t>(mu.size()),
                            zero_tangent(mu.mode, mu.dim_x(), mu.n_labels()));
  parallel_for(mu.size(), [&](int i) { v[static_cast<std::size_t>(i)] = model.velocity(t, mu, mu[i], u.at(i)); });
  return v;
}

StateC step_invariant(const Model& model, double t, const Ensemble& mu, const StateC& c,
                      const FeedbackField& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_invariant: dt must be positive");
  if (!model.admissible(c, kMembershipTol))
    throw std::invalid_argument("step_invariant: initial state outside C");
  struct Frame { double t, dt; };
  const auto attempt = [&](const StateC& from, double at, double h) -> std::optional<StateC> {
    try {
      const TangentVec k1 = model.velocity(at, mu, from, u);
      const StateC pred = advance(from, k1, h);
      require_admissible(model, pred, at + h);
      const TangentVec k2 = model.velocity(at + h, mu, pred, u);
      const StateC next = advance(from, scale(add(k1, k2), 0.5), h);
      require_admissible(model, next, at + h);
      return next;
    } catch (const StepSizeError&) {
      return std::nullopt;
    }
  };
  // iterative halving; two half steps replace one failed step
  std::vector<Frame> todo{{t, dt}};
  StateC current = c;
  int halvings = 0;
  while (!todo.empty()) {
    const Frame f = todo.back();
    todo.pop_back();
    if (auto next = attempt(current, f.t, f.dt)) {
      current = *next;
      continue;
    }
    ++halvings;
    if (halvings > (1 << kMaxHalvings) || f.dt < dt * std::pow(0.5, kMaxHalvings)) {
      throw StepSizeError("step_invariant: invariance violated after maximal halving at t = " +
                          std::to_string(f.t));
    }
    todo.push_back({f.t + 0.5 * f.dt, 0.5 * f.dt});
    todo.push_back({f.t, 0.5 * f.dt});
  }
  return current;
}

Trajectory solve_state(const Model& model, const TimeGrid& grid, const Ensemble& mu0,
                       const ControlSchedule& schedule) {
  grid.validate();
  schedule.validate();
  if (mu0.size() < 1) throw std::invalid_argument("solve_state: empty initial ensemble");
  for (int i = 0; i < mu0.size(); ++i)
    if (!model.admissible(mu0[i], kMembershipTol))
      throw std::invalid_argument("solve_state: initial ensemble outside C");
  Trajectory traj;
  traj.grid = grid;
  traj.states.reserve(static_cast<std::size_t>(grid.steps) + 1);
  traj.states.push_back(mu0);
  const double dt = grid.dt();
  for (int k = 0; k < grid.steps; ++k) {
    traj.states.push_back(
        system_step_with_halving(model, grid.node(k), traj.states.back(), schedule.at_interval(k), dt, 0));
  }
  return traj;
}

std::vector<StateC> solve_tracers(const Model& model, const Trajectory& traj,
                                  const ControlSchedule& schedule,
                                  const std::vector<StateC>& points, int until_node) {
  const TimeGrid& grid = traj.grid;
  const int last = until_node < 0 ? grid.steps : until_node;
  const double dt = grid.dt();
  std::vector<StateC> current = points;
  for (int k = 0; k < last; ++k) {
    const double t = grid.node(k);
    const ControlValue& u = schedule.at_interval(k);
    if (!u.shared())
      throw std::invalid_argument("solve_tracers: tracer transport needs a shared feedback field");
    const Ensemble& mu_now = traj.at_node(k);
    const Ensemble& mu_next = traj.at_node(k + 1);
    for (auto& c : current) {
      // tracers are passive: the measure is read from the stored trajectory
      const TangentVec k1 = model.velocity(t, mu_now, c, u.at(0));
      const StateC pred = advance(c, k1, dt);
      require_admissible(model, pred, t + dt);
      const TangentVec k2 = model.velocity(t + dt, mu_next, pred, u.at(0));
      c = advance(c, scale(add(k1, k2), 0.5), dt);
      require_admissible(model, c, t + dt);
    }
  }
  return current;
}

ControlSchedule needle_control(const ControlSchedule& schedule, const NeedleSpec& spec) {
  schedule.validate();
  const TimeGrid& grid = schedule.grid;
  if (spec.eps < 0.0) throw std::invalid_argument("needle_control: eps must be >= 0");
  if (spec.eps == 0.0) return schedule;  // empty window
  const double dt = grid.dt();
  if (spec.eps < dt * (1.0 - 1e-9))
    throw std::invalid_argument("needle_control: eps below dt; refine the grid first");
  if (spec.tau - spec.eps < grid.t0 - 1e-12)
    throw std::invalid_argument("needle_control: window extends before t0");
  const int k_end = grid.node_index(spec.tau);
  const int k_begin = grid.node_index(spec.tau - spec.eps);
  if (k_end <= k_begin) throw std::invalid_argument("needle_control: empty aligned window");
  ControlSchedule out = schedule;
  for (int k = k_begin; k < k_end; ++k) out.at_interval(k) = spec.omega;
  return out;
}

NeedleResponse needle_response(const Model& model, const TimeGrid& grid, const Ensemble& mu0,
                               const ControlSchedule& schedule, const NeedleSpec& spec) {
  const Trajectory base = solve_state(model, grid, mu0, schedule);
  const ControlSchedule needled = needle_control(schedule, spec);
  const int k_tau = grid.node_index(spec.tau);
  NeedleResponse resp;
  const Ensemble& mu_tau = base.at_node(k_tau);
  const ControlValue& u_at_tau =
      schedule.at_interval(std::max(0, k_tau - 1));  // control on the window
  for (int i = 0; i < mu_tau.size(); ++i) {
    const TangentVec a_omega = model.velocity(spec.tau, mu_tau, mu_tau[i], spec.omega.at(i));
    const TangentVec a_u = model.velocity(spec.tau, mu_tau, mu_tau[i], u_at_tau.at(i));
    resp.limit.push_back(add(a_omega, scale(a_u, -1.0)));
  }
  if (spec.eps == 0.0) {
    for (int i = 0; i < mu_tau.size(); ++i)
      resp.quotient.push_back(zero_tangent(mu_tau.mode, mu_tau.dim_x(), mu_tau.n_labels()));
  } else {
    const Trajectory pert = solve_state(model, grid, mu0, needled);
    const Ensemble& mu_eps = pert.at_node(k_tau);
    for (int i = 0; i < mu_tau.size(); ++i)
      resp.quotient.push_back(scale(state_difference(mu_eps[i], mu_tau[i]), 1.0 / spec.eps));
  }
  double gap = 0.0;
  for (std::size_t i = 0; i < resp.limit.size(); ++i)
    gap = std::max(gap, tangent_norm(add(resp.quotient[i], scale(resp.limit[i], -1.0))));
  resp.gap = gap;
  return resp;
}

}  // namespace convexctrl
