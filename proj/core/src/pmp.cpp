#include "convexctrl/pmp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "convexctrl/common.hpp"

namespace convexctrl {

namespace {

// coordinate gradient row of a costate: directional derivative along a
// tangent w equals row * stacked(w)
Eigen::RowVectorXd coordinate_row(const CostateVec& p) {
  const double w = eta_weight(p.mode, p.n_labels());
  Eigen::RowVectorXd row(p.dim_x() + p.n_labels());
  row << p.px.transpose(), w * p.plam.transpose();
  return row;
}

class BolzaAugmented final : public Model {
 public:
  explicit BolzaAugmented(const Model& base)
      : Model(base.mode(), base.dim_x() + 1, base.n_labels()), base_(base) {}

  double box_r() const override { return base_.box_r(); }
  double box_R() const override { return base_.box_R(); }

  TangentVec velocity(double t, const Ensemble& mu, const StateC& c,
                      const FeedbackField& u) const override {
    const Ensemble mu_b = strip_ensemble(mu);
    const StateC c_b = strip_state(c);
    const TangentVec v = base_.velocity(t, mu_b, c_b, u);
    TangentVec out = zero_tangent(mode_, d_, n_);
    out.dx.head(d_ - 1) = v.dx;
    out.dx[d_ - 1] = base_.has_running_cost() ? base_.cost_integrand(t, mu_b, c_b, u) : 0.0;
    out.dlam = v.dlam;
    return out;
  }

  Eigen::MatrixXd c_differential(double t, const Ensemble& mu, const StateC& c,
                                 const FeedbackField& u) const override {
    const Ensemble mu_b = strip_ensemble(mu);
    const StateC c_b = strip_state(c);
    const Eigen::RowVectorXd row =
        base_.has_running_cost()
            ? coordinate_row(base_.cost_integrand_c_gradient(t, mu_b, c_b, u))
            : Eigen::RowVectorXd::Zero(base_.tangent_dim()).eval();
    return embed(base_.c_differential(t, mu_b, c_b, u), row);
  }

  Eigen::MatrixXd mu_gradient(double t, const Ensemble& mu, const StateC& c,
                              const FeedbackField& u, int tilde_index) const override {
    const Ensemble mu_b = strip_ensemble(mu);
    const StateC c_b = strip_state(c);
    const Eigen::RowVectorXd row =
        base_.has_running_cost()
            ? coordinate_row(base_.cost_integrand_mu_gradient(t, mu_b, c_b, u, tilde_index))
            : Eigen::RowVectorXd::Zero(base_.tangent_dim()).eval();
    return embed(base_.mu_gradient(t, mu_b, c_b, u, tilde_index), row);
  }

  Eigen::MatrixXd control_jacobian(double t, const Ensemble& mu, const StateC& c,
                                   const FeedbackField& u) const override {
    const Ensemble mu_b = strip_ensemble(mu);
    const StateC c_b = strip_state(c);
    const Eigen::MatrixXd b = base_.control_jacobian(t, mu_b, c_b, u);
    const int db = d_ - 1;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d_ + n_, db);
    out.topRows(db) = b.topRows(db);
    out.bottomRows(n_) = b.bottomRows(n_);
    if (base_.has_running_cost())
      out.row(db) = base_.cost_integrand_u_gradient(t, mu_b, c_b, u).transpose();
    return out;
  }

  // the augmented problem is a Mayer problem
  bool has_running_cost() const override { return false; }

  double final_cost(const Ensemble& mu) const override {
    double au = 0.0;
    for (int i = 0; i < mu.size(); ++i) au += mu[i].x[d_ - 1];
    return base_.final_cost(strip_ensemble(mu)) + au / static_cast<double>(mu.size());
  }

  CostateVec final_cost_mu_gradient(const Ensemble& mu, int tilde_index) const override {
    const CostateVec g = base_.final_cost_mu_gradient(strip_ensemble(mu), tilde_index);
    Eigen::VectorXd px(d_);
    px.head(d_ - 1) = g.px;
    px[d_ - 1] = 1.0;
    return make_costate(mode_, std::move(px), g.plam);
  }

 private:
  Eigen::MatrixXd embed(const Eigen::MatrixXd& m, const Eigen::RowVectorXd& cost_row) const {
    const int db = d_ - 1;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d_ + n_, d_ + n_);
    out.topLeftCorner(db, db) = m.topLeftCorner(db, db);
    out.topRightCorner(db, n_) = m.topRightCorner(db, n_);
    out.bottomLeftCorner(n_, db) = m.bottomLeftCorner(n_, db);
    out.bottomRightCorner(n_, n_) = m.bottomRightCorner(n_, n_);
    out.block(db, 0, 1, db) = cost_row.head(db);
    out.block(db, db + 1, 1, n_) = cost_row.tail(n_);
    return out;  // the c_au column stays zero
  }

  const Model& base_;
};

}  // namespace

std::unique_ptr<Model> bolza_augment(const Model& base) {
  return std::make_unique<BolzaAugmented>(base);
}

StateC augment_state(const StateC& c) {
  StateC out = c;
  out.x.conservativeResize(c.dim_x() + 1);
  out.x[c.dim_x()] = 0.0;
  return out;
}

StateC strip_state(const StateC& c_aug) {
  StateC out = c_aug;
  out.x = c_aug.x.head(c_aug.dim_x() - 1).eval();
  return out;
}

Ensemble augment_ensemble(const Ensemble& mu) {
  Ensemble out = mu;
  for (auto& p : out.particles) p = augment_state(p);
  return out;
}

Ensemble strip_ensemble(const Ensemble& mu_aug) {
  Ensemble out = mu_aug;
  for (auto& p : out.particles) p = strip_state(p);
  return out;
}

CostateVec strip_costate(const CostateVec& p_aug) {
  return CostateVec{p_aug.mode, p_aug.px.head(p_aug.dim_x() - 1), p_aug.plam};
}

double p_au_component(const CostateVec& p_aug) { return p_aug.px[p_aug.dim_x() - 1]; }

double hamiltonian(const Model& model, double t, const Ensemble& mu,
                   const std::vector<CostateVec>& costates, const ControlValue& u) {
  if (static_cast<int>(costates.size()) != mu.size())
    throw std::invalid_argument("hamiltonian: one costate per particle required");
  double h = 0.0;
  for (int i = 0; i < mu.size(); ++i)
    h += pairing(costates[static_cast<std::size_t>(i)], model.velocity(t, mu, mu[i], u.at(i)));
  return h / static_cast<double>(mu.size()) - running_cost(model, t, mu, u);
}

std::vector<HamiltonianGradientRow> hamiltonian_nu_gradient(const Model& model, double t,
                                                            const Ensemble& mu,
                                                            const std::vector<CostateVec>& costates,
                                                            const ControlValue& u) {
  if (static_cast<int>(costates.size()) != mu.size())
    throw std::invalid_argument("hamiltonian_nu_gradient: misaligned costates");
  const int n = mu.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<HamiltonianGradientRow> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    CostateVec first = apply_adjoint(model.c_differential(t, mu, mu[i], u.at(i)),
                                     costates[static_cast<std::size_t>(i)]);
    for (int j = 0; j < n; ++j) {
      const Eigen::MatrixXd g = model.mu_gradient(t, mu, mu[j], u.at(j), i);
      first = add(first, scale(apply_adjoint(g, costates[static_cast<std::size_t>(j)]), inv_n));
    }
    if (model.has_running_cost())
      first = add(first, scale(running_cost_mu_gradient(model, t, mu, u, i), -1.0));
    rows.push_back(HamiltonianGradientRow{make_costate(first.mode, first.px, first.plam),
                                          model.velocity(t, mu, mu[i], u.at(i))});
  }
  return rows;
}

std::vector<CostateVec> mayer_terminal(const Model& model, const Ensemble& mu_final) {
  std::vector<CostateVec> terminal;
  terminal.reserve(static_cast<std::size_t>(mu_final.size()));
  for (int i = 0; i < mu_final.size(); ++i)
    terminal.push_back(scale(model.final_cost_mu_gradient(mu_final, i), -1.0));
  return terminal;
}

namespace {

// stacked-coordinate adjoint generator at one stage: for each particle j
//   out_j = adj(M_j) p_j + (1/N) sum_i adj(G_{i,j}) p_i - forcing_j
struct AdjointStage {
  std::vector<Eigen::MatrixXd> diag_adj;
  std::vector<std::vector<Eigen::MatrixXd>> coup_adj;  // [i][j]
  std::vector<Eigen::VectorXd> forcing;                // empty if no running cost

  std::vector<Eigen::VectorXd> apply(const std::vector<Eigen::VectorXd>& p) const {
    const int n = static_cast<int>(p.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<Eigen::VectorXd> out(p.size());
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd acc = diag_adj[static_cast<std::size_t>(j)] * p[static_cast<std::size_t>(j)];
      for (int i = 0; i < n; ++i)
        acc += inv_n * (coup_adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                        p[static_cast<std::size_t>(i)]);
      if (!forcing.empty()) acc -= forcing[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(j)] = acc;
    }
    return out;
  }
};

AdjointStage adjoint_stage(const Model& model, double t, const Ensemble& mu,
                           const ControlValue& u) {
  const int n = mu.size();
  const LabelMode mode = model.mode();
  const int d = model.dim_x();
  const int nl = model.n_labels();
  AdjointStage st;
  st.diag_adj.resize(static_cast<std::size_t>(n));
  st.coup_adj.assign(static_cast<std::size_t>(n),
                     std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(n)));
  parallel_for(n, [&](int i) {
    st.diag_adj[static_cast<std::size_t>(i)] =
        adjoint_matrix(model.c_differential(t, mu, mu[i], u.at(i)), mode, d, nl);
    for (int j = 0; j < n; ++j)
      st.coup_adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          adjoint_matrix(model.mu_gradient(t, mu, mu[i], u.at(i), j), mode, d, nl);
  });
  if (model.has_running_cost()) {
    st.forcing.resize(static_cast<std::size_t>(n));
    parallel_for(n, [&](int j) {
      st.forcing[static_cast<std::size_t>(j)] =
          stacked(running_cost_mu_gradient(model, t, mu, u, j));
    });
  }
  return st;
}

Ensemble euler_predictor(const Model& model, double t, const Ensemble& mu, const ControlValue& u,
                         double dt) {
  const std::vector<TangentVec> v = ensemble_velocity(model, t, mu, u);
  Ensemble pred = mu;
  for (int i = 0; i < mu.size(); ++i) pred[i] = advance(mu[i], v[static_cast<std::size_t>(i)], dt);
  return pred;
}

}  // namespace

CostatePath solve_adjoint(const Model& model, const Trajectory& traj,
                          const ControlSchedule& schedule,
                          const std::vector<CostateVec>& terminal, AdjointStages stages) {
  const TimeGrid& grid = traj.grid;
  const int n = traj.initial().size();
  if (static_cast<int>(terminal.size()) != n)
    throw std::invalid_argument("solve_adjoint: one terminal costate per particle required");
  const double dt = grid.dt();
  const LabelMode mode = model.mode();
  const int d = model.dim_x();

  CostatePath path;
  path.grid = grid;
  path.nodes.assign(static_cast<std::size_t>(grid.steps) + 1, {});
  std::vector<Eigen::VectorXd> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    CostateVec canon = make_costate(mode, terminal[static_cast<std::size_t>(i)].px,
                                    terminal[static_cast<std::size_t>(i)].plam);
    p[static_cast<std::size_t>(i)] = stacked(canon);
  }
  const auto store = [&](int k) {
    auto& slot = path.nodes[static_cast<std::size_t>(k)];
    slot.clear();
    slot.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      slot.push_back(costate_from_stacked(mode, d, p[static_cast<std::size_t>(i)]));
  };
  store(grid.steps);

  for (int k = grid.steps - 1; k >= 0; --k) {
    const ControlValue& u = schedule.at_interval(k);
    const double t_lo = grid.node(k);
    const double t_hi = grid.node(k + 1);
    const Ensemble& y_lo = traj.at_node(k);
    const Ensemble hi_state = (stages == AdjointStages::forward_stages)
                                  ? euler_predictor(model, t_lo, y_lo, u, dt)
                                  : traj.at_node(k + 1);
    const AdjointStage hi = adjoint_stage(model, t_hi, hi_state, u);
    const AdjointStage lo = adjoint_stage(model, t_lo, y_lo, u);
    // backward Heun; with forward-stage coefficients this is the exact
    // transpose of the forward step
    const std::vector<Eigen::VectorXd> q = hi.apply(p);
    std::vector<Eigen::VectorXd> phat(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) phat[i] = p[i] + dt * q[i];
    const std::vector<Eigen::VectorXd> r = lo.apply(phat);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] += 0.5 * dt * (q[i] + r[i]);
      // keep the canonical mean-zero label representative
      p[i].tail(model.n_labels()) = canonical_dual(p[i].tail(model.n_labels()).eval());
    }
    store(k);
  }
  return path;
}

namespace {

// per-agent Hamiltonian share of atom `field` at one node
double agent_share(const Model& model, double t, const Ensemble& mu,
                   const std::vector<CostateVec>& p, int i, const FeedbackField& field) {
  double s = pairing(p[static_cast<std::size_t>(i)], model.velocity(t, mu, mu[i], field));
  if (model.has_running_cost()) s -= model.cost_integrand(t, mu, mu[i], field);
  return s / static_cast<double>(mu.size());
}

struct NodeArgmax {
  double current = 0.0;
  double best = 0.0;
  std::vector<int> best_atom;           // per agent; size 1 when shared
  std::vector<double> improvement;      // per agent; size 1 when shared
};

NodeArgmax argmax_at_node(const Model& model, double t, const Ensemble& mu,
                          const std::vector<CostateVec>& p, const ControlValue& current,
                          const ControlDictionary& dict) {
  NodeArgmax out;
  out.current = hamiltonian(model, t, mu, p, current);
  if (!dict.per_agent) {
    int best_a = 0;
    double best_h = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < dict.size(); ++a) {
      const double h = hamiltonian(model, t, mu, p, dict.atoms[static_cast<std::size_t>(a)]);
      if (h > best_h) {  // strict: ties keep the lowest index
        best_h = h;
        best_a = a;
      }
    }
    out.best = best_h;
    out.best_atom = {best_a};
    out.improvement = {best_h - out.current};
    return out;
  }
  const int n = mu.size();
  out.best_atom.resize(static_cast<std::size_t>(n));
  out.improvement.resize(static_cast<std::size_t>(n));
  out.best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cur_i = agent_share(model, t, mu, p, i, current.at(i));
    int best_a = 0;
    double best_s = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < dict.size(); ++a) {
      const double s =
          agent_share(model, t, mu, p, i, dict.atoms[static_cast<std::size_t>(a)].at(0));
      if (s > best_s) {
        best_s = s;
        best_a = a;
      }
    }
    out.best += best_s;
    out.best_atom[static_cast<std::size_t>(i)] = best_a;
    out.improvement[static_cast<std::size_t>(i)] = best_s - cur_i;
  }
  // per-agent shares sum to H
  double rest = out.current;
  for (int i = 0; i < n; ++i) rest -= agent_share(model, t, mu, p, i, current.at(i));
  out.best += rest;
  return out;
}

}  // namespace

std::vector<double> maximality_residual(const Model& model, const Trajectory& traj,
                                        const CostatePath& costates,
                                        const ControlSchedule& schedule,
                                        const ControlDictionary& dictionary) {
  dictionary.validate();
  const TimeGrid& grid = traj.grid;
  std::vector<double> residual(static_cast<std::size_t>(grid.steps) + 1, 0.0);
  for (int k = 0; k <= grid.steps; ++k) {
    const int interval = std::min(k, grid.steps - 1);
    const NodeArgmax am =
        argmax_at_node(model, grid.node(k), traj.at_node(k), costates.at_node(k),
                       schedule.at_interval(interval), dictionary);
    residual[static_cast<std::size_t>(k)] = am.best - am.current;
  }
  return residual;
}

double total_cost(const Model& base, const TimeGrid& grid, const Ensemble& mu0,
                  const ControlSchedule& schedule) {
  const std::unique_ptr<Model> aug = bolza_augment(base);
  const Trajectory traj = solve_state(*aug, grid, augment_ensemble(mu0), schedule);
  return aug->final_cost(traj.final());
}

CostAndGradient cost_with_control_gradient(const Model& base, const TimeGrid& grid,
                                           const Ensemble& mu0, const ControlSchedule& schedule) {
  const std::unique_ptr<Model> aug_holder = bolza_augment(base);
  const Model& model = *aug_holder;
  const Ensemble mu0_aug = augment_ensemble(mu0);
  const Trajectory traj = solve_state(model, grid, mu0_aug, schedule);
  const int n = mu0.size();
  const int m = model.tangent_dim();
  const int d_ctrl = base.dim_x();
  const double dt = grid.dt();
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool shared = schedule.values.front().shared();

  CostAndGradient out;
  out.cost = model.final_cost(traj.final());
  out.du.assign(static_cast<std::size_t>(grid.steps),
                Eigen::MatrixXd::Zero(d_ctrl, shared ? 1 : n));

  // plain-coordinate terminal gradient of the final cost
  std::vector<Eigen::VectorXd> lam(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const CostateVec g = model.final_cost_mu_gradient(traj.final(), i);
    lam[static_cast<std::size_t>(i)] = inv_n * coordinate_row(g).transpose();
  }

  const auto apply_transpose = [&](const std::vector<Eigen::MatrixXd>& diag,
                                   const std::vector<std::vector<Eigen::MatrixXd>>& coup,
                                   const std::vector<Eigen::VectorXd>& v) {
    std::vector<Eigen::VectorXd> outv(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(m));
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd acc = diag[static_cast<std::size_t>(j)].transpose() * v[static_cast<std::size_t>(j)];
      for (int i = 0; i < n; ++i)
        acc += inv_n * (coup[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].transpose() *
                        v[static_cast<std::size_t>(i)]);
      outv[static_cast<std::size_t>(j)] = acc;
    }
    return outv;
  };

  for (int k = grid.steps - 1; k >= 0; --k) {
    const ControlValue& u = schedule.at_interval(k);
    const double t_lo = grid.node(k);
    const double t_hi = grid.node(k + 1);
    const Ensemble& y_lo = traj.at_node(k);
    const Ensemble y_stage = euler_predictor(model, t_lo, y_lo, u, dt);

    std::vector<Eigen::MatrixXd> diag_lo(static_cast<std::size_t>(n)), diag_hi(static_cast<std::size_t>(n));
    std::vector<std::vector<Eigen::MatrixXd>> coup_lo(
        static_cast<std::size_t>(n), std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(n)));
    auto coup_hi = coup_lo;
    parallel_for(n, [&](int i) {
      diag_lo[static_cast<std::size_t>(i)] = model.c_differential(t_lo, y_lo, y_lo[i], u.at(i));
      diag_hi[static_cast<std::size_t>(i)] = model.c_differential(t_hi, y_stage, y_stage[i], u.at(i));
      for (int j = 0; j < n; ++j) {
        coup_lo[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            model.mu_gradient(t_lo, y_lo, y_lo[i], u.at(i), j);
        coup_hi[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            model.mu_gradient(t_hi, y_stage, y_stage[i], u.at(i), j);
      }
    });

    const std::vector<Eigen::VectorXd> q = apply_transpose(diag_hi, coup_hi, lam);
    std::vector<Eigen::VectorXd> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      w[static_cast<std::size_t>(i)] = lam[static_cast<std::size_t>(i)] + dt * q[static_cast<std::size_t>(i)];

    for (int i = 0; i < n; ++i) {
      const Eigen::MatrixXd b_lo = model.control_jacobian(t_lo, y_lo, y_lo[i], u.at(i));
      const Eigen::MatrixXd b_hi = model.control_jacobian(t_hi, y_stage, y_stage[i], u.at(i));
      const Eigen::VectorXd g = 0.5 * dt *
                                (b_lo.transpose() * w[static_cast<std::size_t>(i)] +
                                 b_hi.transpose() * lam[static_cast<std::size_t>(i)]);
      out.du[static_cast<std::size_t>(k)].col(shared ? 0 : i) += g;
    }

    const std::vector<Eigen::VectorXd> r = apply_transpose(diag_lo, coup_lo, w);
    for (int i = 0; i < n; ++i)
      lam[static_cast<std::size_t>(i)] += 0.5 * dt * (q[static_cast<std::size_t>(i)] + r[static_cast<std::size_t>(i)]);
  }
  return out;
}

SweepResult forward_backward_sweep(const Model& base, const TimeGrid& grid, const Ensemble& mu0,
                                   const ControlSchedule& init_schedule,
                                   const ControlDictionary& dictionary, double damping,
                                   int max_iters, double tol) {
  if (!(damping > 0.0 && damping <= 1.0))
    throw std::invalid_argument("forward_backward_sweep: damping must be in (0, 1]");
  if (max_iters < 1) throw std::invalid_argument("forward_backward_sweep: max_iters >= 1 required");
  dictionary.validate();
  init_schedule.validate();

  const std::unique_ptr<Model> aug_holder = bolza_augment(base);
  const Model& model = *aug_holder;
  const Ensemble mu0_aug = augment_ensemble(mu0);
  const int n = mu0.size();

  ControlSchedule schedule = init_schedule;
  Trajectory traj = solve_state(model, grid, mu0_aug, schedule);
  double cost = model.final_cost(traj.final());

  SweepReport report;
  report.damping_used = damping;
  report.cost_history.push_back(cost);

  CostatePath costates;
  bool costates_fresh = false;

  struct SwitchEntry {
    int node;   // interval index
    int agent;  // 0 when shared
    int atom;
    double gain;
  };

  for (int iter = 1; iter <= max_iters; ++iter) {
    report.iterations = iter;
    costates = solve_adjoint(model, traj, schedule, mayer_terminal(model, traj.final()));
    costates_fresh = true;

    std::vector<SwitchEntry> switches;
    double rel_max = 0.0;
    for (int k = 0; k < grid.steps; ++k) {
      const NodeArgmax am = argmax_at_node(model, grid.node(k), traj.at_node(k),
                                           costates.at_node(k), schedule.at_interval(k), dictionary);
      const double scale_k = 1.0 + std::abs(am.current);
      rel_max = std::max(rel_max, (am.best - am.current) / scale_k);
      for (std::size_t s = 0; s < am.improvement.size(); ++s) {
        if (am.improvement[s] > 1e-14 * scale_k) {
          switches.push_back(SwitchEntry{k, static_cast<int>(s),
                                         am.best_atom[s], am.improvement[s]});
        }
      }
    }
    report.residual_history.push_back(rel_max);
    if (rel_max <= tol) {
      report.converged = true;
      break;
    }
    if (switches.empty()) break;  // residual above tol but no discrete improvement available

    std::sort(switches.begin(), switches.end(),
              [](const SwitchEntry& a, const SwitchEntry& b) { return a.gain > b.gain; });

    bool accepted = false;
    int count = static_cast<int>(switches.size());
    while (count >= 1) {
      ControlSchedule candidate = schedule;
      for (int s = 0; s < count; ++s) {
        const SwitchEntry& sw = switches[static_cast<std::size_t>(s)];
        ControlValue& v = candidate.at_interval(sw.node);
        if (!dictionary.per_agent) {
          v = dictionary.atoms[static_cast<std::size_t>(sw.atom)];
        } else {
          if (v.fields.size() == 1 && n > 1)
            v.fields.assign(static_cast<std::size_t>(n), v.fields.front());
          v.fields[static_cast<std::size_t>(sw.agent)] =
              dictionary.atoms[static_cast<std::size_t>(sw.atom)].fields.front();
        }
      }
      Trajectory cand_traj = solve_state(model, grid, mu0_aug, candidate);
      const double cand_cost = model.final_cost(cand_traj.final());
      if (cand_cost <= cost + 1e-12 * (1.0 + std::abs(cost))) {
        schedule = std::move(candidate);
        traj = std::move(cand_traj);
        cost = cand_cost;
        report.cost_history.push_back(cost);
        costates_fresh = false;
        accepted = true;
        break;
      }
      // rejected: damp the update by shrinking the switched-node set
      count = std::min(count - 1, static_cast<int>(std::floor(damping * static_cast<double>(count))));
    }
    if (!accepted) break;  // candidate rejected at minimal step: stalled
  }

  if (!costates_fresh)
    costates = solve_adjoint(model, traj, schedule, mayer_terminal(model, traj.final()));

  SweepResult result;
  result.schedule = schedule;
  result.report = report;
  result.trajectory.grid = grid;
  for (const auto& state : traj.states) result.trajectory.states.push_back(strip_ensemble(state));
  result.costates.grid = grid;
  result.costates.nodes.reserve(costates.nodes.size());
  for (const auto& node : costates.nodes) {
    std::vector<CostateVec> stripped;
    stripped.reserve(node.size());
    for (const auto& p : node) stripped.push_back(strip_costate(p));
    result.costates.nodes.push_back(std::move(stripped));
  }
  return result;
}

}  // namespace convexctrl
