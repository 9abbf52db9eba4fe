#include "convexctrl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "convexctrl/common.hpp"

namespace convexctrl {

using nlohmann::json;

namespace {

// duplicate-key detection via the parser callback; reports the object path
struct DuplicateDetector {
  struct Frame {
    std::set<std::string> keys;
    std::string last_key;
    bool is_object = false;
  };
  std::vector<Frame> stack;
  std::vector<std::string> duplicates;

  std::string path() const {
    std::string p;
    for (const auto& f : stack)
      if (f.is_object && !f.last_key.empty()) p += "/" + f.last_key;
    return p.empty() ? "/" : p;
  }

  bool operator()(int /*depth*/, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        stack.push_back(Frame{{}, "", true});
        break;
      case json::parse_event_t::array_start:
        stack.push_back(Frame{{}, "", false});
        break;
      case json::parse_event_t::object_end:
      case json::parse_event_t::array_end:
        if (!stack.empty()) stack.pop_back();
        break;
      case json::parse_event_t::key: {
        const std::string key = parsed.get<std::string>();
        if (!stack.empty()) {
          if (!stack.back().keys.insert(key).second) {
            std::string at = path();
            duplicates.push_back("duplicate key '" + key + "' in object at " + at);
          }
          stack.back().last_key = key;
        }
        break;
      }
      case json::parse_event_t::value:
        break;
    }
    return true;
  }
};

struct Validator {
  std::vector<std::string>& errors;

  void err(const std::string& where, const std::string& what) {
    errors.push_back(where + ": " + what);
  }

  void check_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key())) err(where, "unknown key '" + it.key() + "'");
  }

  double number(const json& obj, const std::string& where, const std::string& key, double dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_number()) {
      err(where + "/" + key, "expected a number");
      return dflt;
    }
    return obj[key].get<double>();
  }

  int integer(const json& obj, const std::string& where, const std::string& key, int dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_number_integer()) {
      err(where + "/" + key, "expected an integer");
      return dflt;
    }
    return obj[key].get<int>();
  }

  bool boolean(const json& obj, const std::string& where, const std::string& key, bool dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_boolean()) {
      err(where + "/" + key, "expected a boolean");
      return dflt;
    }
    return obj[key].get<bool>();
  }

  std::string text(const json& obj, const std::string& where, const std::string& key,
                   const std::string& dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_string()) {
      err(where + "/" + key, "expected a string");
      return dflt;
    }
    return obj[key].get<std::string>();
  }

  Eigen::VectorXd vector(const json& obj, const std::string& where, const std::string& key,
                         const Eigen::VectorXd& dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_array()) {
      err(where + "/" + key, "expected an array of numbers");
      return dflt;
    }
    Eigen::VectorXd v(obj[key].size());
    int i = 0;
    for (const auto& e : obj[key]) {
      if (!e.is_number()) {
        err(where + "/" + key, "expected an array of numbers");
        return dflt;
      }
      v[i++] = e.get<double>();
    }
    return v;
  }
};

void parse_kernel(Validator& v, const json& obj, const std::string& where, GaussianVecKernel& k) {
  v.check_keys(obj, where, {"amp", "width"});
  k.amp = v.number(obj, where, "amp", k.amp);
  k.width = v.number(obj, where, "width", k.width);
  if (!(k.width > 0.0)) v.err(where, "width must be positive");
}

void parse_model(Validator& v, const json& m, ExperimentConfig& cfg) {
  v.check_keys(m, "/model",
               {"family", "dim_x", "labels", "kernels", "alpha", "g", "g1", "h", "ell", "goal_x",
                "cost", "kernel", "payoff", "entropy_eps", "density_min_r", "density_max_R"});
  cfg.family = v.text(m, "/model", "family", cfg.family);
  if (cfg.family != "leader_follower" && cfg.family != "replicator")
    v.err("/model/family", "must be 'leader_follower' or 'replicator'");

  auto& lf = cfg.leader_follower;
  auto& rep = cfg.replicator;
  lf.d = rep.d = v.integer(m, "/model", "dim_x", lf.d);
  rep.n = v.integer(m, "/model", "labels", rep.n);

  if (m.contains("kernels")) {
    const json& ks = m["kernels"];
    v.check_keys(ks, "/model/kernels", {"ff", "lf", "fl", "ll"});
    if (ks.contains("ff")) parse_kernel(v, ks["ff"], "/model/kernels/ff", lf.k_ff);
    if (ks.contains("lf")) parse_kernel(v, ks["lf"], "/model/kernels/lf", lf.k_lf);
    if (ks.contains("fl")) parse_kernel(v, ks["fl"], "/model/kernels/fl", lf.k_fl);
    if (ks.contains("ll")) parse_kernel(v, ks["ll"], "/model/kernels/ll", lf.k_ll);
  }
  if (m.contains("alpha")) {
    const json& a = m["alpha"];
    v.check_keys(a, "/model/alpha", {"hf_amp", "hf_width", "hl_amp", "hl_width"});
    lf.h_f.amp = v.number(a, "/model/alpha", "hf_amp", lf.h_f.amp);
    lf.h_f.width = v.number(a, "/model/alpha", "hf_width", lf.h_f.width);
    lf.h_l.amp = v.number(a, "/model/alpha", "hl_amp", lf.h_l.amp);
    lf.h_l.width = v.number(a, "/model/alpha", "hl_width", lf.h_l.width);
  }
  if (m.contains("g")) {
    const json& g = m["g"];
    v.check_keys(g, "/model/g", {"threshold", "margin"});
    const double thr = v.number(g, "/model/g", "threshold", 0.5);
    const double margin = v.number(g, "/model/g", "margin", 0.45);
    if (!(margin > 0.0)) v.err("/model/g/margin", "must be positive");
    lf.g = SmoothStep{thr - margin, thr + margin};
  }
  if (m.contains("g1")) {
    const json& g1 = m["g1"];
    v.check_keys(g1, "/model/g1", {"type", "scale"});
    const std::string type = v.text(g1, "/model/g1", "type", "linear");
    if (type != "linear") v.err("/model/g1/type", "only 'linear' is supported");
    lf.g1_scale = v.number(g1, "/model/g1", "scale", lf.g1_scale);
  }
  if (m.contains("h")) {
    const json& h = m["h"];
    v.check_keys(h, "/model/h", {"full_until", "zero_from"});
    lf.h_full_until = v.number(h, "/model/h", "full_until", lf.h_full_until);
    lf.h_zero_from = v.number(h, "/model/h", "zero_from", lf.h_zero_from);
  }
  if (m.contains("ell")) {
    const json& e = m["ell"];
    v.check_keys(e, "/model/ell", {"follower", "leader"});
    const auto choice = [&](const std::string& s, EllChoice dflt) {
      if (s == "g") return EllChoice::follower_fraction;
      if (s == "one_minus_g") return EllChoice::leader_fraction;
      if (s == "one") return EllChoice::one;
      v.err("/model/ell", "choices are 'g', 'one_minus_g', 'one'");
      return dflt;
    };
    if (e.contains("follower"))
      lf.ell_f = choice(v.text(e, "/model/ell", "follower", "g"), lf.ell_f);
    if (e.contains("leader"))
      lf.ell_l = choice(v.text(e, "/model/ell", "leader", "one_minus_g"), lf.ell_l);
  }
  if (m.contains("cost")) {
    const json& c = m["cost"];
    v.check_keys(c, "/model/cost",
                 {"mayer_only", "track_weight", "cohesion_weight", "control_weight",
                  "control_exponent", "final_weight"});
    lf.mayer_only = v.boolean(c, "/model/cost", "mayer_only", lf.mayer_only);
    lf.track_weight = rep.track_weight =
        v.number(c, "/model/cost", "track_weight", lf.track_weight);
    lf.cohesion_weight = v.number(c, "/model/cost", "cohesion_weight", lf.cohesion_weight);
    lf.control_weight = rep.control_weight =
        v.number(c, "/model/cost", "control_weight", lf.control_weight);
    lf.control_exponent = v.number(c, "/model/cost", "control_exponent", lf.control_exponent);
    lf.final_weight = rep.final_weight = v.number(c, "/model/cost", "final_weight", lf.final_weight);
  }
  const Eigen::VectorXd goal = v.vector(m, "/model", "goal_x", Eigen::VectorXd());
  if (goal.size() > 0) {
    lf.goal = goal;
    rep.goal = goal;
  }
  if (m.contains("kernel")) parse_kernel(v, m["kernel"], "/model/kernel", rep.kernel);
  if (m.contains("payoff")) {
    const json& p = m["payoff"];
    v.check_keys(p, "/model/payoff", {"base", "slope", "width"});
    rep.payoff_base = v.number(p, "/model/payoff", "base", rep.payoff_base);
    rep.payoff_slope = v.number(p, "/model/payoff", "slope", rep.payoff_slope);
    rep.payoff_width = v.number(p, "/model/payoff", "width", rep.payoff_width);
  }
  rep.entropy_eps = v.number(m, "/model", "entropy_eps", rep.entropy_eps);
  rep.box_r = v.number(m, "/model", "density_min_r", rep.box_r);
  rep.box_R = v.number(m, "/model", "density_max_R", rep.box_R);
}

void parse_sections(Validator& v, const json& root, ExperimentConfig& cfg) {
  v.check_keys(root, "/",
               {"model", "grid", "ensemble", "control", "solver", "verify", "output"});
  if (root.contains("model")) parse_model(v, root["model"], cfg);

  if (root.contains("grid")) {
    const json& g = root["grid"];
    v.check_keys(g, "/grid", {"t0", "t1", "steps"});
    cfg.grid.t0 = v.number(g, "/grid", "t0", cfg.grid.t0);
    cfg.grid.t1 = v.number(g, "/grid", "t1", cfg.grid.t1);
    cfg.grid.steps = v.integer(g, "/grid", "steps", cfg.grid.steps);
    if (cfg.grid.steps < 1) v.err("/grid/steps", "must be >= 1");
    if (!(cfg.grid.t1 > cfg.grid.t0)) v.err("/grid", "t1 must exceed t0");
  }

  if (root.contains("ensemble")) {
    const json& e = root["ensemble"];
    v.check_keys(e, "/ensemble", {"count", "seed", "position_box", "placement", "particles"});
    cfg.n_particles = v.integer(e, "/ensemble", "count", cfg.n_particles);
    if (cfg.n_particles < 1) v.err("/ensemble/count", "must be >= 1");
    if (e.contains("seed")) {
      if (!e["seed"].is_number_unsigned() && !e["seed"].is_number_integer())
        v.err("/ensemble/seed", "expected an integer");
      else
        cfg.ensemble_seed = e["seed"].get<std::uint64_t>();
    }
    cfg.position_box = v.number(e, "/ensemble", "position_box", cfg.position_box);
    cfg.placement = v.text(e, "/ensemble", "placement", cfg.placement);
    if (cfg.placement != "random" && cfg.placement != "halton")
      v.err("/ensemble/placement", "must be 'random' or 'halton'");
    if (e.contains("particles")) {
      if (!e["particles"].is_array()) {
        v.err("/ensemble/particles", "expected an array");
      } else {
        int idx = 0;
        for (const auto& p : e["particles"]) {
          const std::string where = "/ensemble/particles[" + std::to_string(idx++) + "]";
          v.check_keys(p, where, {"x", "lam"});
          StateC s;
          s.x = v.vector(p, where, "x", Eigen::VectorXd());
          s.lam = v.vector(p, where, "lam", Eigen::VectorXd());
          cfg.explicit_particles.push_back(std::move(s));
        }
      }
    }
  }

  if (root.contains("control")) {
    const json& c = root["control"];
    v.check_keys(c, "/control", {"u_max", "per_agent", "dictionary", "init_atom", "schedule_file"});
    cfg.u_max = v.number(c, "/control", "u_max", cfg.u_max);
    if (!(cfg.u_max > 0.0)) v.err("/control/u_max", "must be positive");
    cfg.per_agent = v.boolean(c, "/control", "per_agent", cfg.per_agent);
    cfg.init_atom = v.integer(c, "/control", "init_atom", cfg.init_atom);
    cfg.schedule_file = v.text(c, "/control", "schedule_file", cfg.schedule_file);
    if (c.contains("dictionary")) {
      if (!c["dictionary"].is_array()) {
        v.err("/control/dictionary", "expected an array");
      } else {
        cfg.dictionary.clear();
        int idx = 0;
        for (const auto& a : c["dictionary"]) {
          const std::string where = "/control/dictionary[" + std::to_string(idx++) + "]";
          v.check_keys(a, where, {"type", "value", "gain", "goal"});
          DictionaryAtomSpec spec;
          spec.type = v.text(a, where, "type", "constant");
          if (spec.type != "constant" && spec.type != "goal_seeking" && spec.type != "zero")
            v.err(where + "/type", "must be 'constant', 'goal_seeking' or 'zero'");
          spec.value = v.vector(a, where, "value", Eigen::VectorXd());
          spec.gain = v.number(a, where, "gain", 1.0);
          spec.goal = v.vector(a, where, "goal", Eigen::VectorXd());
          cfg.dictionary.push_back(std::move(spec));
        }
      }
    }
  }

  if (root.contains("solver")) {
    const json& s = root["solver"];
    v.check_keys(s, "/solver", {"damping", "max_iters", "tol"});
    cfg.damping = v.number(s, "/solver", "damping", cfg.damping);
    if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) v.err("/solver/damping", "must lie in (0, 1]");
    cfg.max_iters = v.integer(s, "/solver", "max_iters", cfg.max_iters);
    if (cfg.max_iters < 1) v.err("/solver/max_iters", "must be >= 1");
    cfg.solver_tol = v.number(s, "/solver", "tol", cfg.solver_tol);
    if (!(cfg.solver_tol > 0.0)) v.err("/solver/tol", "must be positive");
  }

  if (root.contains("verify")) {
    const json& vf = root["verify"];
    v.check_keys(vf, "/verify", {"trials", "seed", "dt_list", "n_list"});
    cfg.verify_trials = v.integer(vf, "/verify", "trials", cfg.verify_trials);
    if (cfg.verify_trials < 1) v.err("/verify/trials", "must be >= 1");
    if (vf.contains("seed")) cfg.verify_seed = vf["seed"].get<std::uint64_t>();
    if (vf.contains("dt_list")) {
      cfg.dt_list.clear();
      for (const auto& e : vf["dt_list"]) cfg.dt_list.push_back(e.get<double>());
    }
    if (vf.contains("n_list")) {
      cfg.n_list.clear();
      for (const auto& e : vf["n_list"]) cfg.n_list.push_back(e.get<int>());
    }
  }

  if (root.contains("output")) {
    const json& o = root["output"];
    v.check_keys(o, "/output", {"directory", "formats"});
    cfg.output_directory = v.text(o, "/output", "directory", cfg.output_directory);
    if (o.contains("formats")) {
      cfg.formats.clear();
      for (const auto& f : o["formats"]) cfg.formats.push_back(f.get<std::string>());
    }
  }
}

}  // namespace

ParseResult parse_config_text(const std::string& text, const std::string& origin) {
  ParseResult result;
  DuplicateDetector detector;
  json root;
  try {
    root = json::parse(text, std::ref(detector));
  } catch (const json::parse_error& e) {
    result.errors.push_back(origin + ": " + e.what());
    return result;
  }
  for (const auto& d : detector.duplicates) result.errors.push_back(origin + ": " + d);
  if (!root.is_object()) {
    result.errors.push_back(origin + ": top level must be an object");
    return result;
  }
  ExperimentConfig cfg;
  Validator v{result.errors};
  try {
    parse_sections(v, root, cfg);
  } catch (const std::exception& e) {
    result.errors.push_back(origin + ": " + e.what());
  }
  if (result.errors.empty()) {
    // model invariants (e.g. the g1 endpoint constraints) count as schema errors
    try {
      cfg.make_model();
    } catch (const std::exception& e) {
      result.errors.push_back(std::string("/model: ") + e.what());
    }
  }
  if (result.errors.empty()) result.config = std::move(cfg);
  return result;
}

ParseResult parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ParseResult r;
    r.errors.push_back(path + ": cannot open file");
    return r;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::unique_ptr<Model> ExperimentConfig::make_model() const {
  if (family == "replicator") {
    ReplicatorParams p = replicator;
    if (p.goal.size() == 0) p.goal = Eigen::VectorXd::Zero(p.d);
    return std::make_unique<ReplicatorModel>(std::move(p));
  }
  LeaderFollowerParams p = leader_follower;
  if (p.goal.size() == 0) p.goal = Eigen::VectorXd::Zero(p.d);
  return std::make_unique<LeaderFollowerModel>(std::move(p));
}

Ensemble ExperimentConfig::make_ensemble(const Model& model,
                                         std::optional<std::uint64_t> seed_override) const {
  if (!explicit_particles.empty()) {
    Ensemble mu;
    mu.mode = model.mode();
    for (const auto& p : explicit_particles) {
      StateC c = p;
      c.mode = model.mode();
      if (!model.admissible(c, 1e-9))
        throw std::invalid_argument("ensemble: explicit particle outside the state space");
      mu.particles.push_back(std::move(c));
    }
    return mu;
  }
  if (placement == "halton") return halton_ensemble(model, n_particles, position_box);
  Rng rng(seed_override.value_or(ensemble_seed));
  return random_ensemble(model, n_particles, rng, position_box);
}

ControlDictionary ExperimentConfig::make_dictionary(const Model& model) const {
  ControlDictionary dict;
  dict.per_agent = per_agent;
  const int d = model.dim_x();
  if (dictionary.empty()) {
    dict.atoms.push_back(ControlValue::shared_field(FeedbackField::constant(Eigen::VectorXd::Zero(d))));
  } else {
    for (const auto& spec : dictionary) {
      if (spec.type == "zero") {
        dict.atoms.push_back(
            ControlValue::shared_field(FeedbackField::constant(Eigen::VectorXd::Zero(d))));
      } else if (spec.type == "constant") {
        Eigen::VectorXd value = spec.value;
        if (value.size() != d)
          throw std::invalid_argument("dictionary: constant atom needs a d-dimensional value");
        if (value.norm() > u_max + 1e-12)
          throw std::invalid_argument("dictionary: constant atom exceeds u_max");
        dict.atoms.push_back(ControlValue::shared_field(FeedbackField::constant(std::move(value))));
      } else {
        Eigen::VectorXd goal = spec.goal;
        if (goal.size() == 0) {
          if (family == "replicator")
            goal = replicator.goal.size() ? replicator.goal : Eigen::VectorXd::Zero(d);
          else
            goal = leader_follower.goal.size() ? leader_follower.goal : Eigen::VectorXd::Zero(d);
        }
        if (goal.size() != d)
          throw std::invalid_argument("dictionary: goal_seeking atom needs a d-dimensional goal");
        dict.atoms.push_back(
            ControlValue::shared_field(FeedbackField::goal_seeking(std::move(goal), spec.gain, u_max)));
      }
    }
  }
  dict.validate();
  return dict;
}

}  // namespace convexctrl
