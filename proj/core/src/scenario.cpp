#include "convexctrl/scenario.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace convexctrl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json field_to_json(const FeedbackField& f) {
  json j;
  if (f.kind == FeedbackField::Kind::constant) {
    j["type"] = "constant";
    j["value"] = std::vector<double>(f.value.data(), f.value.data() + f.value.size());
  } else {
    j["type"] = "goal_seeking";
    j["goal"] = std::vector<double>(f.goal.data(), f.goal.data() + f.goal.size());
    j["gain"] = f.gain;
    j["u_max"] = f.u_max;
  }
  return j;
}

FeedbackField field_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "constant") {
    const auto vals = j.at("value").get<std::vector<double>>();
    return FeedbackField::constant(Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                                                     static_cast<int>(vals.size())));
  }
  const auto goal = j.at("goal").get<std::vector<double>>();
  return FeedbackField::goal_seeking(
      Eigen::Map<const Eigen::VectorXd>(goal.data(), static_cast<int>(goal.size())),
      j.at("gain").get<double>(), j.at("u_max").get<double>());
}

std::string plot_script() {
  return R"PY(#!/usr/bin/env python3
# Renders the artifacts written next to this script.
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def read_csv(name):
    rows = []
    path = os.path.join(here, name)
    if not os.path.exists(path):
        return rows
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            rows.append([float(x) for x in line.split(",")])
    return rows


history = read_csv("cost_history.csv")
if history:
    fig, ax = plt.subplots(1, 2, figsize=(10, 4))
    ax[0].plot([r[0] for r in history], [r[1] for r in history], marker="o")
    ax[0].set_xlabel("accepted iteration")
    ax[0].set_ylabel("total cost")
    residuals = read_csv("residual_history.csv")
    if residuals:
        ax[1].semilogy([r[0] for r in residuals], [max(r[1], 1e-18) for r in residuals], marker="o")
        ax[1].set_xlabel("iteration")
        ax[1].set_ylabel("max relative maximality residual")
    fig.tight_layout()
    fig.savefig(os.path.join(here, "optimization.png"), dpi=150)

traj = read_csv("trajectory.csv")
if traj:
    by_particle = {}
    for row in traj:
        by_particle.setdefault(int(row[1]), []).append(row)
    fig, ax = plt.subplots(figsize=(6, 6))
    for pid, rows in sorted(by_particle.items()):
        xs = [r[2] for r in rows]
        ys = [r[3] for r in rows] if len(rows[0]) > 3 else [0.0 for _ in rows]
        ax.plot(xs, ys, lw=0.8)
        ax.plot(xs[-1:], ys[-1:], marker="o", ms=3)
    ax.set_xlabel("x[0]")
    ax.set_ylabel("x[1]" if len(traj[0]) > 3 else "0")
    ax.set_title("particle trails")
    fig.tight_layout()
    fig.savefig(os.path.join(here, "trails.png"), dpi=150)

print("plots written to", here)
)PY";
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, target);
}

std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream os;
  const int d = traj.initial().dim_x();
  const int n = traj.initial().n_labels();
  os << "# t,particle";
  for (int k = 0; k < d; ++k) os << ",x" << k;
  for (int k = 0; k < n; ++k) os << ",lam" << k;
  os << "\n";
  for (int node = 0; node < static_cast<int>(traj.states.size()); ++node) {
    const double t = traj.grid.node(node);
    const Ensemble& mu = traj.at_node(node);
    for (int i = 0; i < mu.size(); ++i) {
      os << fmt17(t) << "," << i;
      for (int k = 0; k < d; ++k) os << "," << fmt17(mu[i].x[k]);
      for (int k = 0; k < n; ++k) os << "," << fmt17(mu[i].lam[k]);
      os << "\n";
    }
  }
  return os.str();
}

std::string costates_csv(const CostatePath& path) {
  std::ostringstream os;
  const auto& first = path.nodes.front().front();
  const int d = first.dim_x();
  const int n = first.n_labels();
  os << "# t,particle";
  for (int k = 0; k < d; ++k) os << ",px" << k;
  for (int k = 0; k < n; ++k) os << ",plam" << k;
  os << "\n";
  for (int node = 0; node < static_cast<int>(path.nodes.size()); ++node) {
    const double t = path.grid.node(node);
    const auto& ps = path.at_node(node);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      os << fmt17(t) << "," << i;
      for (int k = 0; k < d; ++k) os << "," << fmt17(ps[i].px[k]);
      for (int k = 0; k < n; ++k) os << "," << fmt17(ps[i].plam[k]);
      os << "\n";
    }
  }
  return os.str();
}

std::string schedule_to_json(const ControlSchedule& schedule, const ControlDictionary& dictionary) {
  ordered_json j;
  j["grid"] = {{"t0", schedule.grid.t0}, {"t1", schedule.grid.t1}, {"steps", schedule.grid.steps}};
  j["per_agent"] = dictionary.per_agent;
  json atoms = json::array();
  for (const auto& a : dictionary.atoms) atoms.push_back(field_to_json(a.fields.front()));
  j["atoms"] = atoms;
  json assignment = json::array();
  for (const auto& value : schedule.values) {
    json node = json::array();
    for (const auto& f : value.fields) {
      int idx = -1;
      for (int a = 0; a < dictionary.size(); ++a) {
        if (dictionary.atoms[static_cast<std::size_t>(a)].fields.front().equals(f, 0.0)) {
          idx = a;
          break;
        }
      }
      if (idx >= 0)
        node.push_back(idx);
      else
        node.push_back(field_to_json(f));  // not in the dictionary: store explicitly
    }
    assignment.push_back(node);
  }
  j["assignment"] = assignment;
  return j.dump(2);
}

ControlSchedule schedule_from_json(const std::string& text, const Model& model) {
  const json j = json::parse(text);
  ControlSchedule schedule;
  schedule.grid.t0 = j.at("grid").at("t0").get<double>();
  schedule.grid.t1 = j.at("grid").at("t1").get<double>();
  schedule.grid.steps = j.at("grid").at("steps").get<int>();
  std::vector<FeedbackField> atoms;
  for (const auto& a : j.at("atoms")) atoms.push_back(field_from_json(a));
  for (const auto& node : j.at("assignment")) {
    ControlValue v;
    for (const auto& entry : node) {
      if (entry.is_number_integer()) {
        const int idx = entry.get<int>();
        if (idx < 0 || idx >= static_cast<int>(atoms.size()))
          throw std::invalid_argument("schedule: atom index out of range");
        v.fields.push_back(atoms[static_cast<std::size_t>(idx)]);
      } else {
        v.fields.push_back(field_from_json(entry));
      }
    }
    if (v.fields.empty()) throw std::invalid_argument("schedule: empty node assignment");
    schedule.values.push_back(std::move(v));
  }
  schedule.validate();
  for (const auto& value : schedule.values)
    for (const auto& f : value.fields)
      if (f.kind == FeedbackField::Kind::constant && f.value.size() != model.dim_x())
        throw std::invalid_argument("schedule: control dimension does not match the model");
  return schedule;
}

std::string sweep_report_json(const SweepReport& report) {
  ordered_json j;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["damping_used"] = report.damping_used;
  j["cost_history"] = report.cost_history;
  j["residual_history"] = report.residual_history;
  return j.dump(2);
}

namespace {

std::string history_csv(const std::vector<double>& values, const char* header) {
  std::ostringstream os;
  os << "# " << header << "\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    os << i << "," << fmt17(values[i]) << "\n";
  return os.str();
}

int cmd_simulate(const ExperimentConfig& cfg, const Model& model, const Ensemble& mu0,
                 const std::string& out_dir) {
  ControlSchedule schedule;
  const ControlDictionary dict = cfg.make_dictionary(model);
  if (!cfg.schedule_file.empty()) {
    std::ifstream in(cfg.schedule_file);
    if (!in) throw std::runtime_error("cannot open schedule file " + cfg.schedule_file);
    std::ostringstream ss;
    ss << in.rdbuf();
    schedule = schedule_from_json(ss.str(), model);
    if (std::abs(schedule.grid.t0 - cfg.grid.t0) > 1e-12 ||
        std::abs(schedule.grid.t1 - cfg.grid.t1) > 1e-12 || schedule.grid.steps != cfg.grid.steps)
      throw std::invalid_argument("schedule file grid does not match the configured grid");
  } else {
    if (cfg.init_atom < 0 || cfg.init_atom >= dict.size())
      throw std::invalid_argument("control: init_atom out of range");
    schedule = ControlSchedule::constant(cfg.grid, dict.atoms[static_cast<std::size_t>(cfg.init_atom)]);
  }
  const Trajectory traj = solve_state(model, cfg.grid, mu0, schedule);
  write_text_atomic(out_dir + "/trajectory.csv", trajectory_csv(traj));
  write_text_atomic(out_dir + "/schedule.json", schedule_to_json(schedule, dict));
  std::cout << "simulate: " << traj.states.size() << " snapshots, final spread "
            << fmt17(model.final_cost(traj.final())) << "\n";
  return 0;
}

int cmd_optimize(const ExperimentConfig& cfg, const Model& model, const Ensemble& mu0,
                 const std::string& out_dir) {
  const ControlDictionary dict = cfg.make_dictionary(model);
  if (cfg.init_atom < 0 || cfg.init_atom >= dict.size())
    throw std::invalid_argument("control: init_atom out of range");
  const ControlSchedule init =
      ControlSchedule::constant(cfg.grid, dict.atoms[static_cast<std::size_t>(cfg.init_atom)]);
  const SweepResult result = forward_backward_sweep(model, cfg.grid, mu0, init, dict, cfg.damping,
                                                    cfg.max_iters, cfg.solver_tol);
  write_text_atomic(out_dir + "/trajectory.csv", trajectory_csv(result.trajectory));
  write_text_atomic(out_dir + "/costates.csv", costates_csv(result.costates));
  write_text_atomic(out_dir + "/schedule.json", schedule_to_json(result.schedule, dict));
  write_text_atomic(out_dir + "/sweep_report.json", sweep_report_json(result.report));
  write_text_atomic(out_dir + "/cost_history.csv",
                    history_csv(result.report.cost_history, "accepted_iteration,total_cost"));
  write_text_atomic(out_dir + "/residual_history.csv",
                    history_csv(result.report.residual_history, "iteration,max_relative_residual"));
  write_text_atomic(out_dir + "/plot.py", plot_script());
  std::cout << "optimize: " << (result.report.converged ? "converged" : "not converged") << " after "
            << result.report.iterations << " iterations, cost "
            << fmt17(result.report.cost_history.back()) << "\n";
  return result.report.converged ? 0 : 2;
}

int cmd_verify(const ExperimentConfig& cfg, const Model& model, const std::string& out_dir) {
  const ControlDictionary dict = cfg.make_dictionary(model);
  std::vector<CheckReport> reports;
  reports.push_back(fd_check_cdiff(model, cfg.verify_trials, cfg.verify_seed));
  reports.push_back(fd_check_mugrad(model, cfg.verify_trials, cfg.verify_seed + 1));

  PairingScenario scenario;
  scenario.t0 = cfg.grid.t0;
  scenario.t1 = cfg.grid.t1;
  scenario.tau = 0.5 * (cfg.grid.t0 + cfg.grid.t1);
  scenario.seed = cfg.verify_seed + 2;
  scenario.n_particles = std::min(cfg.n_particles, 8);
  scenario.control = dict.atoms.front();
  scenario.omega = dict.size() > 1
                       ? dict.atoms[1]
                       : ControlValue::shared_field(FeedbackField::constant(
                             Eigen::VectorXd::Constant(model.dim_x(), 0.5 * cfg.u_max)));
  reports.push_back(check_conserved_pairing(model, scenario, cfg.dt_list));

  TimeGrid study_grid = cfg.grid;
  study_grid.steps = std::min(cfg.grid.steps, 250);
  reports.push_back(
      particle_convergence_study(model, study_grid, dict.atoms.front(), cfg.n_list, cfg.position_box));

  // the suite must exercise every analytic differential the models ship
  const std::set<std::string> required{"DcA", "GmuA", "Gmuphi"};
  std::set<std::string> covered;
  for (const auto& r : reports)
    for (const auto& c : r.covered) covered.insert(c);
  bool coverage_ok = true;
  for (const auto& need : required) coverage_ok = coverage_ok && covered.count(need) > 0;
  if (model.has_running_cost())
    coverage_ok = coverage_ok && covered.count("DcL") > 0 && covered.count("GmuL") > 0;

  bool all_pass = coverage_ok;
  std::ostringstream all;
  all << "[\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    all_pass = all_pass && r.pass;
    std::printf("%-28s trials=%-4d worst=%-12.3e %s\n", r.name.c_str(), r.trials,
                r.worst_rel_error, r.pass ? "PASS" : "FAIL");
    all << r.to_json() << (i + 1 < reports.size() ? ",\n" : "\n");
  }
  all << "]\n";
  if (!coverage_ok) std::printf("coverage assertion failed\n");
  write_text_atomic(out_dir + "/checks.json", all.str());
  return all_pass ? 0 : 2;
}

int cmd_converge(const ExperimentConfig& cfg, const Model& model, const std::string& out_dir) {
  const ControlDictionary dict = cfg.make_dictionary(model);
  TimeGrid study_grid = cfg.grid;
  study_grid.steps = std::min(cfg.grid.steps, 250);
  const CheckReport report =
      particle_convergence_study(model, study_grid, dict.atoms.front(), cfg.n_list, cfg.position_box);
  write_text_atomic(out_dir + "/convergence.json", report.to_json());
  std::ostringstream csv;
  csv << "# n,w1_refinement_gap\n";
  for (std::size_t i = 0; i + 1 < cfg.n_list.size() && i < report.values.size(); ++i)
    csv << cfg.n_list[i] << "," << fmt17(report.values[i]) << "\n";
  write_text_atomic(out_dir + "/convergence.csv", csv.str());
  std::cout << "converge: " << (report.pass ? "decreasing" : "NOT decreasing") << "\n";
  return report.pass ? 0 : 2;
}

}  // namespace

int run_scenario(const ExperimentConfig& cfg, const std::string& command,
                 const std::string& out_dir_override, std::optional<std::uint64_t> seed_override) {
  try {
    const std::string out_dir =
        out_dir_override.empty() ? cfg.output_directory : out_dir_override;
    const std::unique_ptr<Model> model = cfg.make_model();
    if (command == "verify") return cmd_verify(cfg, *model, out_dir);
    if (command == "converge") return cmd_converge(cfg, *model, out_dir);
    const Ensemble mu0 = cfg.make_ensemble(*model, seed_override);
    if (command == "simulate") return cmd_simulate(cfg, *model, mu0, out_dir);
    if (command == "optimize") return cmd_optimize(cfg, *model, mu0, out_dir);
    std::cerr << "unknown command '" << command << "'\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace convexctrl
