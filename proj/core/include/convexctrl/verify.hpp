#pragma once

// The oracle suite: finite-difference validation of every analytic
// differential, conservation monitors, and the particle-count consistency
// study. Reports are reproducible bit-for-bit from their seed.

#include <cstdint>
#include <string>
#include <vector>

#include "convexctrl/pmp.hpp"
#include "convexctrl/sensitivity.hpp"

namespace convexctrl {

class Rng;

struct CheckReport {
  std::string name;
  int trials = 0;
  double worst_rel_error = 0.0;
  std::vector<double> slopes;   // slope estimates where applicable
  std::vector<double> values;   // drift / gap sequences where applicable
  bool pass = false;
  std::uint64_t seed = 0;
  std::vector<std::string> covered;  // differentials exercised by this check

  std::string to_json() const;
};

// random interior states for the model's space
Ensemble random_ensemble(const Model& model, int n_particles, Rng& rng, double position_box = 1.0);
// deterministic low-discrepancy placement; prefixes are nested across N
Ensemble halton_ensemble(const Model& model, int n_particles, double position_box = 1.0);
TangentVec random_tangent(const Model& model, Rng& rng);
FeedbackField random_control_field(const Model& model, Rng& rng, double u_max = 1.0);

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// central differences of the velocity (and running-cost integrand) along
// random tangent directions against the analytic C-differential; pass iff the
// best-step relative error is below 1e-6 on every instance
CheckReport fd_check_cdiff(const Model& model, int trials, std::uint64_t seed);

// single-particle perturbation quotients against grad_mu of the velocity, the
// running cost and the final cost; pass iff the epsilon-slope is >= 0.9
CheckReport fd_check_mugrad(const Model& model, int trials, std::uint64_t seed);

struct PairingScenario {
  double t0 = 0.0;
  double t1 = 1.0;
  double tau = 0.5;
  int n_particles = 8;
  std::uint64_t seed = 42;
  ControlValue control;  // schedule held at this value
  ControlValue omega;    // needle value defining the tangent initial condition
};

// solves v (linearised system seeded by the needle response at tau) and p
// (adjoint) for each dt and reports the relative drift of the summed pairing
// <p(t), v(t)>; drift must shrink at the integrator's order
CheckReport check_conserved_pairing(const Model& model, const PairingScenario& scenario,
                                    const std::vector<double>& dt_list);

// W1 refinement sequence between solutions at N and 2N particles (the coarser
// run's atoms are replicated for the equal-size comparison); expects a
// decreasing sequence
CheckReport particle_convergence_study(const Model& model, const TimeGrid& grid,
                                       const ControlValue& control,
                                       const std::vector<int>& n_list, double position_box = 1.0);

}  // namespace convexctrl
