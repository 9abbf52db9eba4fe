#include "convexctrl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "convexctrl/common.hpp"

namespace convexctrl {

std::string CheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["trials"] = trials;
  j["worst_rel_error"] = worst_rel_error;
  j["slopes"] = slopes;
  j["values"] = values;
  j["pass"] = pass;
  j["seed"] = seed;
  j["covered"] = covered;
  return j.dump(2);
}

Ensemble random_ensemble(const Model& model, int n_particles, Rng& rng, double position_box) {
  Ensemble mu;
  mu.mode = model.mode();
  const int d = model.dim_x();
  const int n = model.n_labels();
  for (int i = 0; i < n_particles; ++i) {
    StateC c;
    c.mode = model.mode();
    c.x.resize(d);
    for (int k = 0; k < d; ++k) c.x[k] = rng.uniform(-position_box, position_box);
    c.lam.resize(n);
    if (model.mode() == LabelMode::simplex) {
      if (n == 2) {
        const double lam = rng.uniform(0.15, 0.85);
        c.lam << lam, 1.0 - lam;
      } else {
        for (int k = 0; k < n; ++k) c.lam[k] = rng.uniform(0.1, 1.0);
        c.lam /= c.lam.sum();
      }
    } else {
      Eigen::VectorXd z(n);
      for (int k = 0; k < n; ++k) z[k] = rng.uniform(-0.5, 0.5);
      z.array() -= z.mean();
      c.lam = Eigen::VectorXd::Ones(n) + 0.8 * z;
    }
    mu.particles.push_back(std::move(c));
  }
  return mu;
}

Ensemble halton_ensemble(const Model& model, int n_particles, double position_box) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  Ensemble mu;
  mu.mode = model.mode();
  const int d = model.dim_x();
  const int n = model.n_labels();
  for (int i = 0; i < n_particles; ++i) {
    StateC c;
    c.mode = model.mode();
    c.x.resize(d);
    for (int k = 0; k < d; ++k)
      c.x[k] = position_box * (2.0 * halton(static_cast<std::uint64_t>(i), primes[k % 10]) - 1.0);
    c.lam.resize(n);
    if (model.mode() == LabelMode::simplex) {
      const double a = halton(static_cast<std::uint64_t>(i), primes[d % 10]);
      if (n == 2) {
        const double lam = 0.15 + 0.7 * a;
        c.lam << lam, 1.0 - lam;
      } else {
        for (int k = 0; k < n; ++k)
          c.lam[k] = 0.1 + halton(static_cast<std::uint64_t>(i), primes[(d + k) % 10]);
        c.lam /= c.lam.sum();
      }
    } else {
      Eigen::VectorXd z(n);
      for (int k = 0; k < n; ++k)
        z[k] = halton(static_cast<std::uint64_t>(i), primes[(d + k) % 10]) - 0.5;
      z.array() -= z.mean();
      c.lam = Eigen::VectorXd::Ones(n) + 0.8 * z;
    }
    mu.particles.push_back(std::move(c));
  }
  return mu;
}

TangentVec random_tangent(const Model& model, Rng& rng) {
  TangentVec v = zero_tangent(model.mode(), model.dim_x(), model.n_labels());
  for (int k = 0; k < v.dim_x(); ++k) v.dx[k] = rng.uniform(-1.0, 1.0);
  for (int k = 0; k < v.n_labels(); ++k) v.dlam[k] = rng.uniform(-1.0, 1.0);
  v.dlam.array() -= v.dlam.mean();
  const double norm = tangent_norm(v);
  if (norm > 1e-12) v = scale(v, 1.0 / norm);
  return v;
}

FeedbackField random_control_field(const Model& model, Rng& rng, double u_max) {
  const int d = model.dim_x();
  if (rng.uniform() < 0.5) {
    Eigen::VectorXd u(d);
    for (int k = 0; k < d; ++k) u[k] = rng.uniform(-0.5, 0.5) * u_max;
    return FeedbackField::constant(std::move(u));
  }
  Eigen::VectorXd goal(d);
  for (int k = 0; k < d; ++k) goal[k] = rng.uniform(-1.0, 1.0);
  return FeedbackField::goal_seeking(std::move(goal), rng.uniform(0.5, 1.5), u_max);
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_loglog_slope: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(std::max(y[i], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

std::vector<double> fd_step_sweep() {
  return {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 3e-7, 1e-7};
}

double shrink_until_admissible(const Model& model, const StateC& c, const TangentVec& w,
                               double h) {
  // keep the direction, shrink the step until both one-sided points stay in C
  for (int k = 0; k < 60; ++k) {
    if (model.admissible(advance(c, w, h), 1e-9) && model.admissible(advance(c, w, -h), 1e-9))
      return h;
    h *= 0.5;
  }
  return h;
}

struct InstanceError {
  double best_rel = std::numeric_limits<double>::infinity();
};

}  // namespace

CheckReport fd_check_cdiff(const Model& model, int trials, std::uint64_t seed) {
  CheckReport report;
  report.name = "fd_check_cdiff";
  report.trials = trials;
  report.seed = seed;
  report.covered = {"DcA"};
  if (model.has_running_cost()) report.covered.push_back("DcL");
  std::vector<double> errors(static_cast<std::size_t>(trials), 0.0);
  parallel_for(trials, [&](int trial) {
    Rng rng(seed + static_cast<std::uint64_t>(trial) * 7919u);
    const Ensemble mu = random_ensemble(model, 8, rng);
    const StateC c = mu[rng.index(mu.size())];
    const FeedbackField u = random_control_field(model, rng);
    const TangentVec w = random_tangent(model, rng);
    const double t = rng.uniform(0.0, 1.0);
    const bool check_cost = model.has_running_cost() && trial % 2 == 1;
    InstanceError inst;
    if (!check_cost) {
      const Eigen::VectorXd predicted = model.c_differential(t, mu, c, u) * stacked(w);
      const double denom = std::max(1.0, predicted.norm());
      for (double h : fd_step_sweep()) {
        h = shrink_until_admissible(model, c, w, h);
        const TangentVec vp = model.velocity(t, mu, advance(c, w, h), u);
        const TangentVec vm = model.velocity(t, mu, advance(c, w, -h), u);
        const Eigen::VectorXd quotient = (stacked(vp) - stacked(vm)) / (2.0 * h);
        inst.best_rel = std::min(inst.best_rel, (quotient - predicted).norm() / denom);
      }
    } else {
      const double predicted = pairing(model.cost_integrand_c_gradient(t, mu, c, u), w);
      const double denom = std::max(1.0, std::abs(predicted));
      for (double h : fd_step_sweep()) {
        h = shrink_until_admissible(model, c, w, h);
        const double lp = model.cost_integrand(t, mu, advance(c, w, h), u);
        const double lm = model.cost_integrand(t, mu, advance(c, w, -h), u);
        inst.best_rel = std::min(inst.best_rel, std::abs((lp - lm) / (2.0 * h) - predicted) / denom);
      }
    }
    errors[static_cast<std::size_t>(trial)] = inst.best_rel;
  });
  report.worst_rel_error = errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end());
  report.pass = report.worst_rel_error < 1e-6;
  return report;
}

CheckReport fd_check_mugrad(const Model& model, int trials, std::uint64_t seed) {
  CheckReport report;
  report.name = "fd_check_mugrad";
  report.trials = trials;
  report.seed = seed;
  report.covered = {"GmuA", "Gmuphi"};
  if (model.has_running_cost()) report.covered.push_back("GmuL");
  std::vector<double> worst_slope(static_cast<std::size_t>(trials), 10.0);
  std::vector<double> best_err(static_cast<std::size_t>(trials), 0.0);
  parallel_for(trials, [&](int trial) {
    Rng rng(seed + 1000003u + static_cast<std::uint64_t>(trial) * 50021u);
    const Ensemble mu = random_ensemble(model, 8, rng);
    const int j = rng.index(mu.size());
    const StateC c = mu[rng.index(mu.size())];
    const FeedbackField u = random_control_field(model, rng);
    const TangentVec w = random_tangent(model, rng);
    const double t = rng.uniform(0.0, 1.0);
    const double inv_n = 1.0 / static_cast<double>(mu.size());
    // target rotates through velocity / running cost / final cost
    const int target = model.has_running_cost() ? trial % 3 : (trial % 3 == 1 ? 0 : trial % 3);
    const ControlValue shared = ControlValue::shared_field(u);

    std::vector<double> eps_used;
    std::vector<double> residuals;
    double base_scale = 1.0;
    for (const double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
      double e = shrink_until_admissible(model, mu[j], w, eps);
      Ensemble mu_eps = mu;
      mu_eps[j] = advance(mu[j], w, e);
      double resid = 0.0;
      if (target == 0) {
        const Eigen::VectorXd predicted =
            inv_n * (model.mu_gradient(t, mu, c, u, j) * stacked(w));
        base_scale = std::max(1.0, predicted.norm() / inv_n);
        const Eigen::VectorXd quotient =
            (stacked(model.velocity(t, mu_eps, c, u)) - stacked(model.velocity(t, mu, c, u))) / e;
        resid = (quotient - predicted).norm();
      } else if (target == 1) {
        const double predicted = inv_n * pairing(running_cost_mu_gradient(model, t, mu, shared, j), w);
        base_scale = std::max(1.0, std::abs(predicted) / inv_n);
        const double quotient =
            (running_cost(model, t, mu_eps, shared) - running_cost(model, t, mu, shared)) / e;
        resid = std::abs(quotient - predicted);
      } else {
        const double predicted = inv_n * pairing(model.final_cost_mu_gradient(mu, j), w);
        base_scale = std::max(1.0, std::abs(predicted) / inv_n);
        const double quotient = (model.final_cost(mu_eps) - model.final_cost(mu)) / e;
        resid = std::abs(quotient - predicted);
      }
      eps_used.push_back(e);
      residuals.push_back(resid);
    }
    best_err[static_cast<std::size_t>(trial)] =
        *std::min_element(residuals.begin(), residuals.end()) / base_scale;
    const double floor = 1e-12 * base_scale;
    if (*std::max_element(residuals.begin(), residuals.end()) < floor) {
      worst_slope[static_cast<std::size_t>(trial)] = 10.0;  // exact to rounding
    } else {
      worst_slope[static_cast<std::size_t>(trial)] = fit_loglog_slope(eps_used, residuals);
    }
  });
  report.worst_rel_error = best_err.empty() ? 0.0 : *std::max_element(best_err.begin(), best_err.end());
  const double min_slope =
      worst_slope.empty() ? 10.0 : *std::min_element(worst_slope.begin(), worst_slope.end());
  report.slopes = {min_slope};
  report.pass = min_slope >= 0.9;
  return report;
}

CheckReport check_conserved_pairing(const Model& model_in, const PairingScenario& scenario,
                                    const std::vector<double>& dt_list) {
  CheckReport report;
  report.name = "check_conserved_pairing";
  report.seed = scenario.seed;
  report.covered = {"DcA", "GmuA", "Gmuphi"};
  if (dt_list.empty()) throw std::invalid_argument("check_conserved_pairing: empty dt list");

  // conservation is a Mayer statement; Bolza models run through augmentation
  std::unique_ptr<Model> aug;
  const Model* model = &model_in;
  if (model_in.has_running_cost()) {
    aug = bolza_augment(model_in);
    model = aug.get();
  }

  Rng rng(scenario.seed);
  Ensemble mu0 = random_ensemble(model_in, scenario.n_particles, rng);
  if (aug) mu0 = augment_ensemble(mu0);

  for (const double dt : dt_list) {
    const int steps = static_cast<int>(std::round((scenario.t1 - scenario.t0) / dt));
    const TimeGrid grid{scenario.t0, scenario.t1, steps};
    const ControlSchedule schedule = ControlSchedule::constant(grid, scenario.control);
    const Trajectory traj = solve_state(*model, grid, mu0, schedule);
    const int k_tau = grid.node_index(scenario.tau);

    // needle response at tau seeds the tangent solve
    const Ensemble& mu_tau = traj.at_node(k_tau);
    std::vector<TangentVec> f0;
    for (int i = 0; i < mu_tau.size(); ++i) {
      const TangentVec a_omega =
          model->velocity(scenario.tau, mu_tau, mu_tau[i], scenario.omega.at(i));
      const TangentVec a_u =
          model->velocity(scenario.tau, mu_tau, mu_tau[i], scenario.control.at(i));
      f0.push_back(add(a_omega, scale(a_u, -1.0)));
    }
    const LinearizedState v = solve_linearized(*model, traj, schedule, f0, k_tau);
    const CostatePath p = solve_adjoint(*model, traj, schedule, mayer_terminal(*model, traj.final()));

    std::vector<double> series;
    for (int k = k_tau; k <= grid.steps; ++k) {
      double s = 0.0;
      for (int i = 0; i < mu_tau.size(); ++i)
        s += pairing(p.at_node(k)[static_cast<std::size_t>(i)],
                     v.at_node(k)[static_cast<std::size_t>(i)]);
      series.push_back(s / static_cast<double>(mu_tau.size()));
    }
    double scale_ref = 0.0;
    for (const double s : series) scale_ref = std::max(scale_ref, std::abs(s));
    if (scale_ref == 0.0) scale_ref = 1.0;
    double drift = 0.0;
    for (const double s : series) drift = std::max(drift, std::abs(s - series.front()));
    report.values.push_back(drift / scale_ref);
  }
  report.trials = static_cast<int>(dt_list.size());
  report.worst_rel_error = report.values.front();
  if (dt_list.size() >= 2) report.slopes = {fit_loglog_slope(dt_list, report.values)};
  report.pass = report.values.front() < 1e-6 &&
                (report.slopes.empty() || report.slopes.front() >= 1.9);
  return report;
}

CheckReport particle_convergence_study(const Model& model, const TimeGrid& grid,
                                       const ControlValue& control,
                                       const std::vector<int>& n_list, double position_box) {
  CheckReport report;
  report.name = "particle_convergence_study";
  report.trials = static_cast<int>(n_list.size());
  report.covered = {"flow"};
  if (n_list.size() < 2) throw std::invalid_argument("particle_convergence_study: need >= 2 sizes");
  for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
    if (n_list[i + 1] <= n_list[i] || n_list[i + 1] % n_list[i] != 0 || n_list[i + 1] > 512)
      throw std::invalid_argument("particle_convergence_study: sizes must grow by integer factors, max 512");

  const ControlSchedule schedule = ControlSchedule::constant(grid, control);
  std::vector<Ensemble> finals;
  for (const int n : n_list) {
    const Ensemble mu0 = halton_ensemble(model, n, position_box);
    finals.push_back(solve_state(model, grid, mu0, schedule).final());
  }
  for (std::size_t i = 0; i + 1 < finals.size(); ++i) {
    const int factor = n_list[i + 1] / n_list[i];
    Ensemble coarse_rep;  // replicate atoms: identical empirical law, matched size
    coarse_rep.mode = finals[i].mode;
    for (const auto& p : finals[i].particles)
      for (int r = 0; r < factor; ++r) coarse_rep.particles.push_back(p);
    report.values.push_back(w1_empirical(coarse_rep, finals[i + 1]));
  }
  bool decreasing = true;
  for (std::size_t i = 0; i + 1 < report.values.size(); ++i)
    decreasing = decreasing && report.values[i + 1] < report.values[i];
  report.pass = decreasing;
  report.worst_rel_error = report.values.back();
  return report;
}

}  // namespace convexctrl
