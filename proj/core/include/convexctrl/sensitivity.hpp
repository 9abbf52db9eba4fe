#pragma once

// Linearisations along a stored trajectory: the flow C-differential (the
// frozen-coefficient linear ODE along one particle's path) and the non-local
// linearised Cauchy problem coupling all particles through grad_mu A. Both
// are stepped with Heun using the coefficients stored at the grid nodes.

#include <vector>

#include "convexctrl/dynamics.hpp"

namespace convexctrl {

struct LinearizedState {
  TimeGrid grid;
  int start_node = 0;  // nodes before start_node hold zeros
  std::vector<std::vector<TangentVec>> nodes;  // [node][particle]

  const std::vector<TangentVec>& at_node(int k) const {
    return nodes[static_cast<std::size_t>(k)];
  }
};

// D_c Phi_(s,t)[f0] along particle `particle_index`: solves
// dz/dt = D_c A (along the stored flow) [z], z(t_s) = f0, ignoring the
// measure coupling (the flow map differential of the frozen non-local field).
std::vector<TangentVec> flow_differential(const Model& model, const Trajectory& traj,
                                          const ControlSchedule& schedule, int particle_index,
                                          const TangentVec& f0, int start_node = 0);

// The coupled linearised system: for every particle i,
//   dv_i/dt = D_cA(c_i)[v_i] + (1/N) sum_j grad_mu A(c_i)(c_j)[v_j],
// v(start_node) = f0. With f0 = 0 this is Proposition-style v(t, c); with f0
// equal to a needle response it is the full first-order perturbation field.
LinearizedState solve_linearized(const Model& model, const Trajectory& traj,
                                 const ControlSchedule& schedule,
                                 const std::vector<TangentVec>& f0, int start_node = 0);

}  // namespace convexctrl
