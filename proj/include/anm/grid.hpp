#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace anm {

using Complex = std::complex<double>;

enum class BusKind { slack, pq, topological };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double v_min = 0.95;  // per-unit
  double v_max = 1.05;
  std::vector<int> attached_devices;
};

// Pi-model link: two transformation ratios, a branch admittance and two
// shunt admittances, all per-unit, plus a current magnitude limit.
struct Link {
  int from_bus = 0;
  int to_bus = 0;
  Complex t_mn{1.0, 0.0};
  Complex t_nm{1.0, 0.0};
  Complex y_branch{0.0, 0.0};
  Complex y_shunt_m{0.0, 0.0};
  Complex y_shunt_n{0.0, 0.0};
  double i_max = 1.0;  // per-unit
};

// Off-diagonal (m,n): -(t_mn)* t_nm Y_br for existing links; diagonal (m,m):
// sum over incident links of |t_mk|^2 (Y_sh + Y_br). Rejects duplicate links
// between the same ordered pair.
Eigen::MatrixXcd build_admittance_matrix(const std::vector<Link>& links, int n_buses);

// Immutable after construction; safe to share across concurrent solves.
struct NetworkModel {
  std::vector<Bus> buses;
  std::vector<Link> links;
  Eigen::MatrixXcd y_matrix;
  double base_mva = 10.0;
  double base_kv = 15.0;
  int slack_bus = 0;

  static NetworkModel build(std::vector<Bus> buses, std::vector<Link> links,
                            double base_mva = 10.0, double base_kv = 15.0);

  int n_buses() const { return static_cast<int>(buses.size()); }
};

struct PowerFlowSolution {
  Eigen::VectorXcd v;            // complex voltage per bus
  Eigen::VectorXcd s_injected;   // complex power per bus (slack included)
  std::vector<double> branch_currents;  // |I| per link
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // max mismatch magnitude
  std::string diagnostic;
};

struct PowerFlowOptions {
  double tolerance = 1e-8;
  int max_iterations = 50;
};

// Newton-Raphson in polar coordinates from a flat start. p/q are per-unit
// injections per bus (the slack entry is ignored; the slack absorbs the
// balance). Non-convergence and singular Jacobians yield converged=false.
PowerFlowSolution solve_power_flow(const NetworkModel& network,
                                   const Eigen::VectorXd& p_injections,
                                   const Eigen::VectorXd& q_injections,
                                   Complex slack_voltage,
                                   const PowerFlowOptions& options = {});

// Same solve, warm-started from a previous voltage profile.
PowerFlowSolution solve_power_flow_from(const NetworkModel& network,
                                        const Eigen::VectorXd& p_injections,
                                        const Eigen::VectorXd& q_injections,
                                        Complex slack_voltage,
                                        const Eigen::VectorXcd& v_start,
                                        const PowerFlowOptions& options = {});

// |(|t_mn|^2 V_m - (t_mn)* t_nm V_n) Y_br|
double branch_current_magnitude(const Link& link, Complex v_m, Complex v_n);

struct LimitViolation {
  enum Kind { over_voltage, under_voltage, over_current } kind;
  int index;      // bus index for voltage, link index for current
  double margin;  // signed per-unit excess beyond the limit
};

std::vector<LimitViolation> check_limits(const NetworkModel& network,
                                         const PowerFlowSolution& solution);

// Adjoint sensitivities of voltage/current magnitudes with respect to bus
// power injections, evaluated at a converged solution. Factorizes the polar
// Newton Jacobian once; each adjoint() call costs one triangular solve.
class PfSensitivity {
 public:
  PfSensitivity(const NetworkModel& network, const PowerFlowSolution& solution);

  bool valid() const { return valid_; }

  // Gradient of  sum_n wv[n] * |V_n|  +  sum_l wi[l] * |I_l|  with respect
  // to per-bus active and reactive injections (slack entries are zero).
  void adjoint(const Eigen::VectorXd& w_vmag, const Eigen::VectorXd& w_imag,
               Eigen::VectorXd& d_p, Eigen::VectorXd& d_q) const;

 private:
  const NetworkModel& network_;
  Eigen::VectorXd vm_, va_;  // magnitudes and angles at the solution
  std::vector<int> bus_to_idx_;  // -1 for slack
  std::vector<int> idx_to_bus_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;  // of J^T
  bool valid_ = false;
};

}  // namespace anm
