#pragma once

// The two model families behind one interface: leader-follower dynamics with
// label switching on C = R^d x Lambda_2, and entropy-regularised replicator
// dynamics on C = R^d x {densities in [r, R]}. A model supplies its velocity
// field A(t, mu, c, u), the C-differential D_cA, the local Wasserstein
// differential grad_mu A(c_tilde), running/final costs and their gradients.
// All differentials are materialised as (d+n) x (d+n) matrices acting on
// stacked tangent coordinates [dx; dlam].

#include <Eigen/Dense>
#include <memory>

#include "convexctrl/control.hpp"
#include "convexctrl/geometry.hpp"

namespace convexctrl {

// cubic smoothstep ramp: 0 below lo, 1 above hi, 3t^2 - 2t^3 in between
struct SmoothStep {
  double lo = 0.0;
  double hi = 1.0;

  double value(double s) const;
  double deriv(double s) const;
};

// z -> amp * z * exp(-|z|^2 / (2 width^2)), the interaction kernel shape
struct GaussianVecKernel {
  double amp = 0.0;
  double width = 1.0;

  Eigen::VectorXd eval(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const;
};

// z -> amp * exp(-|z|^2 / (2 width^2)) >= 0, the switching-rate localiser
struct GaussianBump {
  double amp = 0.0;
  double width = 1.0;

  double eval(const Eigen::VectorXd& z) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& z) const;
};

class Model {
 public:
  virtual ~Model() = default;

  LabelMode mode() const { return mode_; }
  int dim_x() const { return d_; }
  int n_labels() const { return n_; }
  int tangent_dim() const { return d_ + n_; }

  // box bounds for density mode; ignored for simplex
  virtual double box_r() const { return 0.0; }
  virtual double box_R() const { return std::numeric_limits<double>::infinity(); }

  bool admissible(const StateC& c, double tol) const {
    return c.mode == mode_ && c.dim_x() == d_ && c.n_labels() == n_ &&
           in_state_space(c, tol, box_r(), box_R());
  }

  virtual TangentVec velocity(double t, const Ensemble& mu, const StateC& c,
                              const FeedbackField& u) const = 0;
  virtual Eigen::MatrixXd c_differential(double t, const Ensemble& mu, const StateC& c,
                                         const FeedbackField& u) const = 0;
  // grad_mu A(t, mu, c, u)(c_tilde) for c_tilde = mu[tilde_index]
  virtual Eigen::MatrixXd mu_gradient(double t, const Ensemble& mu, const StateC& c,
                                      const FeedbackField& u, int tilde_index) const = 0;
  // dA/du, (d+n) x d
  virtual Eigen::MatrixXd control_jacobian(double t, const Ensemble& mu, const StateC& c,
                                           const FeedbackField& u) const = 0;

  virtual bool has_running_cost() const { return false; }
  // l(t, mu, c, u(c)); L(t, mu, u) is its mu-average
  virtual double cost_integrand(double t, const Ensemble& mu, const StateC& c,
                                const FeedbackField& u) const;
  virtual CostateVec cost_integrand_c_gradient(double t, const Ensemble& mu, const StateC& c,
                                               const FeedbackField& u) const;
  virtual CostateVec cost_integrand_mu_gradient(double t, const Ensemble& mu, const StateC& c,
                                                const FeedbackField& u, int tilde_index) const;
  virtual Eigen::VectorXd cost_integrand_u_gradient(double t, const Ensemble& mu, const StateC& c,
                                                    const FeedbackField& u) const;

  virtual double final_cost(const Ensemble& mu) const;
  virtual CostateVec final_cost_mu_gradient(const Ensemble& mu, int tilde_index) const;

 protected:
  Model(LabelMode mode, int d, int n) : mode_(mode), d_(d), n_(n) {}
  void check_state(const StateC& c) const;

  LabelMode mode_;
  int d_ = 0;
  int n_ = 0;
};

// L(t, mu, u) = (1/N) sum_i l(t, mu, c_i, u_i)
double running_cost(const Model& model, double t, const Ensemble& mu, const ControlValue& u);

// full measure gradient of L at particle `tilde_index`:
// D_c l(c~) + (1/N) sum_j grad_mu l(c_j)(c~)
CostateVec running_cost_mu_gradient(const Model& model, double t, const Ensemble& mu,
                                    const ControlValue& u, int tilde_index);

// how ell_F / ell_L weigh a neighbour's label in the switching rates
enum class EllChoice { follower_fraction, leader_fraction, one };

struct LeaderFollowerParams {
  int d = 2;
  GaussianVecKernel k_ff{0.4, 1.0};
  GaussianVecKernel k_lf{0.3, 1.0};
  GaussianVecKernel k_fl{0.3, 1.0};
  GaussianVecKernel k_ll{0.2, 1.0};
  GaussianBump h_f{0.6, 1.0};  // alpha_F localiser
  GaussianBump h_l{0.5, 1.2};  // alpha_L localiser
  SmoothStep g{0.05, 0.95};    // follower classifier, threshold 0.5 margin 0.45
  double g1_scale = 1.0;       // g1(lambda) = g1_scale * lambda; must map 0->0, 1->1
  double h_full_until = 0.3;   // control gain h == 1 below
  double h_zero_from = 0.8;    // h == 0 above; smooth in between
  EllChoice ell_f = EllChoice::follower_fraction;
  EllChoice ell_l = EllChoice::leader_fraction;
  Eigen::VectorXd goal;        // x_bar
  bool mayer_only = false;       // drop the running cost entirely
  double track_weight = 1.0;     // |x - x_bar|^2 term of l
  double cohesion_weight = 0.5;  // theta(lambda) |x - m_F|^2 term
  double control_weight = 0.1;   // |u|^p term
  double control_exponent = 2.0;
  double final_weight = 1.0;     // phi(mu) = final_weight * mean |x - x_bar|^2

  void validate() const;
};

class LeaderFollowerModel final : public Model {
 public:
  explicit LeaderFollowerModel(LeaderFollowerParams params);

  const LeaderFollowerParams& params() const { return p_; }

  TangentVec velocity(double t, const Ensemble& mu, const StateC& c,
                      const FeedbackField& u) const override;
  Eigen::MatrixXd c_differential(double t, const Ensemble& mu, const StateC& c,
                                 const FeedbackField& u) const override;
  Eigen::MatrixXd mu_gradient(double t, const Ensemble& mu, const StateC& c,
                              const FeedbackField& u, int tilde_index) const override;
  Eigen::MatrixXd control_jacobian(double t, const Ensemble& mu, const StateC& c,
                                   const FeedbackField& u) const override;

  bool has_running_cost() const override;
  double cost_integrand(double t, const Ensemble& mu, const StateC& c,
                        const FeedbackField& u) const override;
  CostateVec cost_integrand_c_gradient(double t, const Ensemble& mu, const StateC& c,
                                       const FeedbackField& u) const override;
  CostateVec cost_integrand_mu_gradient(double t, const Ensemble& mu, const StateC& c,
                                        const FeedbackField& u, int tilde_index) const override;
  Eigen::VectorXd cost_integrand_u_gradient(double t, const Ensemble& mu, const StateC& c,
                                            const FeedbackField& u) const override;
  double final_cost(const Ensemble& mu) const override;
  CostateVec final_cost_mu_gradient(const Ensemble& mu, int tilde_index) const override;

  // scalar ingredients, exposed for tests
  double g(double lam) const { return p_.g.value(lam); }
  double g1(double lam) const { return p_.g1_scale * lam; }
  double theta(double lam) const { return 1.0 - p_.g.value(lam); }
  double h_gain(double lam) const;
  double h_gain_deriv(double lam) const;
  double ell(EllChoice which, double lam) const;
  double ell_deriv(EllChoice which, double lam) const;

  // g-weighted follower barycenter, integral of x' d mu^F
  Eigen::VectorXd follower_barycenter(const Ensemble& mu) const;

 private:
  struct Fields;  // per-(mu, x) convolution bundle
  Fields fields_at(const Ensemble& mu, const StateC& c, bool with_jacobians) const;

  LeaderFollowerParams p_;
};

struct ReplicatorParams {
  int d = 1;
  int n = 8;                       // strategy grid size on V = [0, 1]
  GaussianVecKernel kernel{0.3, 1.0};
  double payoff_base = 0.5;        // J(x, v, x') = (base + slope v) exp(-|x-x'|^2 / 2 w^2)
  double payoff_slope = 0.5;
  double payoff_width = 1.0;
  double entropy_eps = 0.1;
  double box_r = 0.2;
  double box_R = 3.0;
  Eigen::VectorXd goal;
  double track_weight = 1.0;
  double control_weight = 0.1;
  double final_weight = 1.0;

  void validate() const;
};

class ReplicatorModel final : public Model {
 public:
  explicit ReplicatorModel(ReplicatorParams params);

  const ReplicatorParams& params() const { return p_; }
  double box_r() const override { return p_.box_r; }
  double box_R() const override { return p_.box_R; }

  // grid point v_k in [0, 1]
  double grid_point(int k) const;

  TangentVec velocity(double t, const Ensemble& mu, const StateC& c,
                      const FeedbackField& u) const override;
  Eigen::MatrixXd c_differential(double t, const Ensemble& mu, const StateC& c,
                                 const FeedbackField& u) const override;
  Eigen::MatrixXd mu_gradient(double t, const Ensemble& mu, const StateC& c,
                              const FeedbackField& u, int tilde_index) const override;
  Eigen::MatrixXd control_jacobian(double t, const Ensemble& mu, const StateC& c,
                                   const FeedbackField& u) const override;

  bool has_running_cost() const override;
  double cost_integrand(double t, const Ensemble& mu, const StateC& c,
                        const FeedbackField& u) const override;
  CostateVec cost_integrand_c_gradient(double t, const Ensemble& mu, const StateC& c,
                                       const FeedbackField& u) const override;
  Eigen::VectorXd cost_integrand_u_gradient(double t, const Ensemble& mu, const StateC& c,
                                            const FeedbackField& u) const override;
  double final_cost(const Ensemble& mu) const override;
  CostateVec final_cost_mu_gradient(const Ensemble& mu, int tilde_index) const override;

  // ((eta-mean of l log l) - log l) * l; eta-mean of the output is zero
  Eigen::VectorXd entropy_operator(const Eigen::VectorXd& lam) const;
  Eigen::MatrixXd entropy_operator_differential(const Eigen::VectorXd& lam) const;

  double payoff(const Eigen::VectorXd& x, double v, const Eigen::VectorXd& xp) const;
  Eigen::VectorXd payoff_grad_x(const Eigen::VectorXd& x, double v, const Eigen::VectorXd& xp) const;
  Eigen::VectorXd payoff_grad_xp(const Eigen::VectorXd& x, double v, const Eigen::VectorXd& xp) const;

 private:
  ReplicatorParams p_;
};

}  // namespace convexctrl
