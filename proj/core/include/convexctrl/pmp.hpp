#pragma once

// The Hamiltonian layer: H(t, nu, u) = <p, A> - L averaged over the ensemble,
// its per-particle gradient rows, backward adjoint solves, the Bolza -> Mayer
// augmentation (auxiliary coordinate c_au appended to the position block),
// pointwise Hamiltonian maximisation over a finite dictionary, and the damped
// forward-backward sweep.

#include <memory>

#include "convexctrl/dynamics.hpp"

namespace convexctrl {

struct CostatePath {
  TimeGrid grid;
  std::vector<std::vector<CostateVec>> nodes;  // [node][particle]

  const std::vector<CostateVec>& at_node(int k) const {
    return nodes[static_cast<std::size_t>(k)];
  }
};

// H(t, nu, u) with nu the empirical measure on (c_i, p_i) pairs
double hamiltonian(const Model& model, double t, const Ensemble& mu,
                   const std::vector<CostateVec>& costates, const ControlValue& u);

struct HamiltonianGradientRow {
  CostateVec costate_row;  // D_c^*A[p_i] + (1/N) sum_j grad_mu^*A(c_j)(c_i)[p_j] - grad_mu L(c_i)
  TangentVec state_row;    // A(t, mu, c_i, u_i)
};

// grad_nu H per particle; the J-rotation (T, e) -> (e, -T) of these rows is
// the extremality system's field.
std::vector<HamiltonianGradientRow> hamiltonian_nu_gradient(const Model& model, double t,
                                                            const Ensemble& mu,
                                                            const std::vector<CostateVec>& costates,
                                                            const ControlValue& u);

// Mayer terminal law: p_i(T) = -grad_mu phi(mu_T)(c_i)
std::vector<CostateVec> mayer_terminal(const Model& model, const Ensemble& mu_final);

// Which ensemble states carry the backward stage coefficients: the forward
// Euler predictor stages (the exact transpose of the forward Heun step, used
// for gradients) or the stored node values.
enum class AdjointStages { forward_stages, node_values };

CostatePath solve_adjoint(const Model& model, const Trajectory& traj,
                          const ControlSchedule& schedule,
                          const std::vector<CostateVec>& terminal,
                          AdjointStages stages = AdjointStages::forward_stages);

// residual(t_k) = max over the dictionary of H(t_k, nu_k, omega) - H at the
// schedule's control, one value per grid node
std::vector<double> maximality_residual(const Model& model, const Trajectory& traj,
                                        const CostatePath& costates,
                                        const ControlSchedule& schedule,
                                        const ControlDictionary& dictionary);

// ---- Bolza -> Mayer augmentation ----------------------------------------
// The augmented state appends the accumulated running cost as one extra
// position coordinate; the augmented velocity's extra row is the running cost
// integrand and the extra column of every differential is zero.

std::unique_ptr<Model> bolza_augment(const Model& base);  // keeps a reference to base

StateC augment_state(const StateC& c);
StateC strip_state(const StateC& c_aug);
Ensemble augment_ensemble(const Ensemble& mu);
Ensemble strip_ensemble(const Ensemble& mu_aug);
CostateVec strip_costate(const CostateVec& p_aug);
double p_au_component(const CostateVec& p_aug);

// total cost int_0^T L dt + phi(mu_T), integrated by the augmented Heun solve
double total_cost(const Model& base, const TimeGrid& grid, const Ensemble& mu0,
                  const ControlSchedule& schedule);

// Exact discrete gradient of total_cost w.r.t. an additive open-loop
// perturbation of each interval's control (per agent, or summed over agents
// for a shared schedule). Matches central finite differences of total_cost to
// solver precision.
struct CostAndGradient {
  double cost = 0.0;
  std::vector<Eigen::MatrixXd> du;  // per interval, d x (N or 1)
};

CostAndGradient cost_with_control_gradient(const Model& base, const TimeGrid& grid,
                                           const Ensemble& mu0, const ControlSchedule& schedule);

// ---- forward-backward sweep ----------------------------------------------

struct SweepReport {
  int iterations = 0;
  std::vector<double> cost_history;      // accepted iterates only
  std::vector<double> residual_history;  // max relative maximality residual
  double damping_used = 1.0;
  bool converged = false;
};

struct SweepResult {
  ControlSchedule schedule;
  Trajectory trajectory;  // base state space
  CostatePath costates;   // base costates (auxiliary component stripped)
  SweepReport report;
};

SweepResult forward_backward_sweep(const Model& base, const TimeGrid& grid, const Ensemble& mu0,
                                   const ControlSchedule& init_schedule,
                                   const ControlDictionary& dictionary, double damping,
                                   int max_iters, double tol);

}  // namespace convexctrl
