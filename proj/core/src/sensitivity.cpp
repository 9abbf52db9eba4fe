#include "convexctrl/sensitivity.hpp"

#include "convexctrl/common.hpp"

namespace convexctrl {

namespace {

// materialised coefficients of the coupled linear system at one time node
struct Coefficients {
  std::vector<Eigen::MatrixXd> diag;                  // D_cA(c_i)
  std::vector<std::vector<Eigen::MatrixXd>> coupling; // grad_mu A(c_i)(c_j)
};

Coefficients coefficients_at(const Model& model, double t, const Ensemble& mu,
                             const ControlValue& u, bool with_coupling) {
  const int n = mu.size();
  Coefficients co;
  co.diag.resize(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    co.diag[static_cast<std::size_t>(i)] = model.c_differential(t, mu, mu[i], u.at(i));
  });
  if (with_coupling) {
    co.coupling.assign(static_cast<std::size_t>(n), std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(n)));
    parallel_for(n, [&](int i) {
      for (int j = 0; j < n; ++j)
        co.coupling[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            model.mu_gradient(t, mu, mu[i], u.at(i), j);
    });
  }
  return co;
}

std::vector<TangentVec> apply_generator(const Coefficients& co,
                                        const std::vector<TangentVec>& z) {
  const int n = static_cast<int>(z.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<TangentVec> out(z.size(), zero_tangent(z[0].mode, z[0].dim_x(), z[0].n_labels()));
  for (int i = 0; i < n; ++i) {
    TangentVec acc = apply(co.diag[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(i)]);
    if (!co.coupling.empty()) {
      for (int j = 0; j < n; ++j)
        acc = add(acc, scale(apply(co.coupling[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                                   z[static_cast<std::size_t>(j)]),
                             inv_n));
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

std::vector<TangentVec> heun_linear_step(const Coefficients& now, const Coefficients& next,
                                         const std::vector<TangentVec>& z, double dt) {
  const std::vector<TangentVec> k1 = apply_generator(now, z);
  std::vector<TangentVec> pred(z.size(), k1[0]);
  for (std::size_t i = 0; i < z.size(); ++i) pred[i] = add(z[i], scale(k1[i], dt));
  const std::vector<TangentVec> k2 = apply_generator(next, pred);
  std::vector<TangentVec> out = z;
  for (std::size_t i = 0; i < z.size(); ++i)
    out[i] = add(z[i], scale(add(k1[i], k2[i]), 0.5 * dt));
  return out;
}

LinearizedState solve_linear_system(const Model& model, const Trajectory& traj,
                                    const ControlSchedule& schedule,
                                    const std::vector<TangentVec>& f0, int start_node,
                                    bool with_coupling, int only_particle) {
  const TimeGrid& grid = traj.grid;
  if (start_node < 0 || start_node >= grid.steps)
    throw std::invalid_argument("solve_linearized: start node outside the grid");
  LinearizedState out;
  out.grid = grid;
  out.start_node = start_node;
  const int n = traj.initial().size();
  const std::vector<TangentVec> zeros(
      static_cast<std::size_t>(n),
      zero_tangent(traj.initial().mode, traj.initial().dim_x(), traj.initial().n_labels()));
  out.nodes.assign(static_cast<std::size_t>(grid.steps) + 1, zeros);
  out.nodes[static_cast<std::size_t>(start_node)] = f0;
  const double dt = grid.dt();
  for (int k = start_node; k < grid.steps; ++k) {
    const ControlValue& u = schedule.at_interval(k);
    if (only_particle >= 0) {
      // decoupled mode: only one particle's frozen-coefficient equation
      const int i = only_particle;
      Coefficients now1, next1;
      now1.diag = {model.c_differential(grid.node(k), traj.at_node(k), traj.at_node(k)[i], u.at(i))};
      next1.diag = {
          model.c_differential(grid.node(k + 1), traj.at_node(k + 1), traj.at_node(k + 1)[i], u.at(i))};
      const std::vector<TangentVec> z{
          out.nodes[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]};
      const std::vector<TangentVec> stepped = heun_linear_step(now1, next1, z, dt);
      out.nodes[static_cast<std::size_t>(k) + 1] = zeros;
      out.nodes[static_cast<std::size_t>(k) + 1][static_cast<std::size_t>(i)] = stepped[0];
    } else {
      const Coefficients now = coefficients_at(model, grid.node(k), traj.at_node(k), u, with_coupling);
      const Coefficients next =
          coefficients_at(model, grid.node(k + 1), traj.at_node(k + 1), u, with_coupling);
      out.nodes[static_cast<std::size_t>(k) + 1] =
          heun_linear_step(now, next, out.nodes[static_cast<std::size_t>(k)], dt);
    }
  }
  return out;
}

}  // namespace

std::vector<TangentVec> flow_differential(const Model& model, const Trajectory& traj,
                                          const ControlSchedule& schedule, int particle_index,
                                          const TangentVec& f0, int start_node) {
  const int n = traj.initial().size();
  if (particle_index < 0 || particle_index >= n)
    throw std::invalid_argument("flow_differential: particle index out of range");
  std::vector<TangentVec> init(static_cast<std::size_t>(n),
                               zero_tangent(f0.mode, f0.dim_x(), f0.n_labels()));
  init[static_cast<std::size_t>(particle_index)] = f0;
  const LinearizedState full =
      solve_linear_system(model, traj, schedule, init, start_node, false, particle_index);
  std::vector<TangentVec> path;
  path.reserve(full.nodes.size());
  for (const auto& node : full.nodes)
    path.push_back(node[static_cast<std::size_t>(particle_index)]);
  return path;
}

LinearizedState solve_linearized(const Model& model, const Trajectory& traj,
                                 const ControlSchedule& schedule,
                                 const std::vector<TangentVec>& f0, int start_node) {
  if (static_cast<int>(f0.size()) != traj.initial().size())
    throw std::invalid_argument("solve_linearized: one initial tangent per particle required");
  return solve_linear_system(model, traj, schedule, f0, start_node, true, -1);
}

}  // namespace convexctrl
