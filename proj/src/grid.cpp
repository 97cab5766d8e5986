#include "anm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

namespace anm {

Eigen::MatrixXcd build_admittance_matrix(const std::vector<Link>& links, int n_buses) {
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n_buses, n_buses);
  std::set<std::pair<int, int>> seen;
  for (const Link& l : links) {
    if (l.from_bus < 0 || l.from_bus >= n_buses || l.to_bus < 0 || l.to_bus >= n_buses)
      throw std::invalid_argument("link endpoint out of range");
    if (!seen.insert({l.from_bus, l.to_bus}).second)
      throw std::invalid_argument("duplicate link between the same ordered pair");
    const int m = l.from_bus;
    const int n = l.to_bus;
    y(m, n) += -std::conj(l.t_mn) * l.t_nm * l.y_branch;
    y(n, m) += -std::conj(l.t_nm) * l.t_mn * l.y_branch;
    y(m, m) += std::norm(l.t_mn) * (l.y_shunt_m + l.y_branch);
    y(n, n) += std::norm(l.t_nm) * (l.y_shunt_n + l.y_branch);
  }
  return y;
}

NetworkModel NetworkModel::build(std::vector<Bus> buses, std::vector<Link> links,
                                 double base_mva, double base_kv) {
  NetworkModel net;
  net.buses = std::move(buses);
  net.links = std::move(links);
  net.base_mva = base_mva;
  net.base_kv = base_kv;
  int slack_count = 0;
  for (int i = 0; i < net.n_buses(); ++i) {
    const Bus& b = net.buses[i];
    if (b.kind == BusKind::slack) {
      net.slack_bus = i;
      ++slack_count;
    }
    if (!(b.v_min > 0.0 && b.v_min < b.v_max))
      throw std::invalid_argument("bus voltage limits must satisfy 0 < v_min < v_max");
    if (b.kind == BusKind::topological && !b.attached_devices.empty())
      throw std::invalid_argument("topological bus with attached devices");
  }
  if (slack_count != 1) throw std::invalid_argument("network needs exactly one slack bus");
  net.y_matrix = build_admittance_matrix(net.links, net.n_buses());
  return net;
}

double branch_current_magnitude(const Link& link, Complex v_m, Complex v_n) {
  const Complex i = (std::norm(link.t_mn) * v_m - std::conj(link.t_mn) * link.t_nm * v_n) *
                    link.y_branch;
  return std::abs(i);
}

namespace {

struct PolarState {
  Eigen::VectorXd vm, va;  // full bus vectors
};

void calc_injections(const Eigen::MatrixXcd& y, const PolarState& st,
                     Eigen::VectorXd& p, Eigen::VectorXd& q) {
  const int n = static_cast<int>(st.vm.size());
  p.setZero(n);
  q.setZero(n);
  for (int i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (int j = 0; j < n; ++j) {
      const Complex yij = y(i, j);
      if (yij == Complex(0.0, 0.0) && i != j) continue;
      const double g = yij.real(), b = yij.imag();
      const double th = st.va[i] - st.va[j];
      const double c = std::cos(th), s = std::sin(th);
      pi += st.vm[j] * (g * c + b * s);
      qi += st.vm[j] * (g * s - b * c);
    }
    p[i] = st.vm[i] * pi;
    q[i] = st.vm[i] * qi;
  }
}

// Jacobian of calculated (P, Q) at non-slack buses w.r.t. (theta, V) at
// non-slack buses. Row/col order: [P block; Q block] x [theta block; V block].
Eigen::MatrixXd build_jacobian(const Eigen::MatrixXcd& y, const PolarState& st,
                               const Eigen::VectorXd& p_calc, const Eigen::VectorXd& q_calc,
                               const std::vector<int>& idx_to_bus,
                               const std::vector<int>& bus_to_idx) {
  const int m = static_cast<int>(idx_to_bus.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (int r = 0; r < m; ++r) {
    const int i = idx_to_bus[r];
    const double vi = st.vm[i];
    for (int c = 0; c < m; ++c) {
      const int j = idx_to_bus[c];
      const Complex yij = y(i, j);
      const double g = yij.real(), b = yij.imag();
      if (i == j) {
        const double gii = g, bii = b;
        jac(r, c) = -q_calc[i] - bii * vi * vi;                    // dP/dtheta
        jac(r, m + c) = p_calc[i] / vi + gii * vi;                 // dP/dV
        jac(m + r, c) = p_calc[i] - gii * vi * vi;                 // dQ/dtheta
        jac(m + r, m + c) = q_calc[i] / vi - bii * vi;             // dQ/dV
      } else {
        const double th = st.va[i] - st.va[j];
        const double cth = std::cos(th), sth = std::sin(th);
        const double vj = st.vm[j];
        jac(r, c) = vi * vj * (g * sth - b * cth);
        jac(r, m + c) = vi * (g * cth + b * sth);
        jac(m + r, c) = -vi * vj * (g * cth + b * sth);
        jac(m + r, m + c) = vi * (g * sth - b * cth);
      }
    }
  }
  return jac;
}

void nonslack_index(const NetworkModel& net, std::vector<int>& bus_to_idx,
                    std::vector<int>& idx_to_bus) {
  bus_to_idx.assign(net.n_buses(), -1);
  idx_to_bus.clear();
  for (int i = 0; i < net.n_buses(); ++i) {
    if (i == net.slack_bus) continue;
    bus_to_idx[i] = static_cast<int>(idx_to_bus.size());
    idx_to_bus.push_back(i);
  }
}

PowerFlowSolution finish(const NetworkModel& net, const PolarState& st, bool converged,
                         int iters, double residual, std::string diag) {
  PowerFlowSolution sol;
  const int n = net.n_buses();
  sol.v.resize(n);
  for (int i = 0; i < n; ++i)
    sol.v[i] = std::polar(st.vm[i], st.va[i]);
  const Eigen::VectorXcd inj = net.y_matrix * sol.v;
  sol.s_injected.resize(n);
  for (int i = 0; i < n; ++i)
    sol.s_injected[i] = sol.v[i] * std::conj(inj[i]);
  sol.branch_currents.resize(net.links.size());
  for (std::size_t l = 0; l < net.links.size(); ++l)
    sol.branch_currents[l] = branch_current_magnitude(
        net.links[l], sol.v[net.links[l].from_bus], sol.v[net.links[l].to_bus]);
  sol.converged = converged;
  sol.iterations = iters;
  sol.residual = residual;
  sol.diagnostic = std::move(diag);
  return sol;
}

}  // namespace

PowerFlowSolution solve_power_flow_from(const NetworkModel& net,
                                        const Eigen::VectorXd& p_spec,
                                        const Eigen::VectorXd& q_spec,
                                        Complex slack_voltage,
                                        const Eigen::VectorXcd& v_start,
                                        const PowerFlowOptions& opt) {
  const int n = net.n_buses();
  if (std::abs(slack_voltage) <= 0.0)
    throw std::invalid_argument("slack voltage magnitude must be positive");
  std::vector<int> bus_to_idx, idx_to_bus;
  nonslack_index(net, bus_to_idx, idx_to_bus);
  const int m = static_cast<int>(idx_to_bus.size());

  PolarState st;
  st.vm.resize(n);
  st.va.resize(n);
  for (int i = 0; i < n; ++i) {
    st.vm[i] = std::abs(v_start[i]);
    st.va[i] = std::arg(v_start[i]);
  }
  st.vm[net.slack_bus] = std::abs(slack_voltage);
  st.va[net.slack_bus] = std::arg(slack_voltage);

  Eigen::VectorXd p_calc, q_calc;
  double residual = 0.0;
  for (int iter = 0; iter <= opt.max_iterations; ++iter) {
    calc_injections(net.y_matrix, st, p_calc, q_calc);
    Eigen::VectorXd mism(2 * m);
    for (int r = 0; r < m; ++r) {
      const int i = idx_to_bus[r];
      mism[r] = p_spec[i] - p_calc[i];
      mism[m + r] = q_spec[i] - q_calc[i];
    }
    residual = m > 0 ? mism.cwiseAbs().maxCoeff() : 0.0;
    if (residual <= opt.tolerance)
      return finish(net, st, true, iter, residual, {});
    if (iter == opt.max_iterations) break;

    const Eigen::MatrixXd jac =
        build_jacobian(net.y_matrix, st, p_calc, q_calc, idx_to_bus, bus_to_idx);
    const Eigen::VectorXd dx = jac.partialPivLu().solve(mism);
    if (!dx.allFinite())
      return finish(net, st, false, iter, residual, "singular Jacobian");
    for (int r = 0; r < m; ++r) {
      const int i = idx_to_bus[r];
      st.va[i] += dx[r];
      st.vm[i] += dx[m + r];
      if (st.vm[i] < 1e-6)
        return finish(net, st, false, iter, residual, "voltage collapse");
    }
  }
  return finish(net, st, false, opt.max_iterations, residual,
                "no convergence after max iterations");
}

PowerFlowSolution solve_power_flow(const NetworkModel& net, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& q, Complex slack_voltage,
                                   const PowerFlowOptions& opt) {
  Eigen::VectorXcd flat = Eigen::VectorXcd::Constant(net.n_buses(), Complex(1.0, 0.0));
  return solve_power_flow_from(net, p, q, slack_voltage, flat, opt);
}

std::vector<LimitViolation> check_limits(const NetworkModel& net,
                                         const PowerFlowSolution& sol) {
  std::vector<LimitViolation> out;
  for (int i = 0; i < net.n_buses(); ++i) {
    const double vm = std::abs(sol.v[i]);
    if (vm > net.buses[i].v_max)
      out.push_back({LimitViolation::over_voltage, i, vm - net.buses[i].v_max});
    else if (vm < net.buses[i].v_min)
      out.push_back({LimitViolation::under_voltage, i, net.buses[i].v_min - vm});
  }
  for (std::size_t l = 0; l < net.links.size(); ++l) {
    if (sol.branch_currents[l] > net.links[l].i_max)
      out.push_back({LimitViolation::over_current, static_cast<int>(l),
                     sol.branch_currents[l] - net.links[l].i_max});
  }
  return out;
}

PfSensitivity::PfSensitivity(const NetworkModel& network, const PowerFlowSolution& solution)
    : network_(network) {
  const int n = network.n_buses();
  vm_.resize(n);
  va_.resize(n);
  for (int i = 0; i < n; ++i) {
    vm_[i] = std::abs(solution.v[i]);
    va_[i] = std::arg(solution.v[i]);
  }
  nonslack_index(network, bus_to_idx_, idx_to_bus_);
  PolarState st{vm_, va_};
  Eigen::VectorXd p_calc, q_calc;
  calc_injections(network.y_matrix, st, p_calc, q_calc);
  const Eigen::MatrixXd jac =
      build_jacobian(network.y_matrix, st, p_calc, q_calc, idx_to_bus_, bus_to_idx_);
  lu_.compute(jac.transpose());
  valid_ = solution.converged;
}

void PfSensitivity::adjoint(const Eigen::VectorXd& w_vmag, const Eigen::VectorXd& w_imag,
                            Eigen::VectorXd& d_p, Eigen::VectorXd& d_q) const {
  const int n = network_.n_buses();
  const int m = static_cast<int>(idx_to_bus_.size());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * m);

  // d/dx of sum wv |V_n|: |V_n| is the polar V variable itself.
  for (int r = 0; r < m; ++r)
    rhs[m + r] += w_vmag[idx_to_bus_[r]];

  // d/dx of sum wi |I_l|.
  for (std::size_t l = 0; l < network_.links.size(); ++l) {
    const double w = w_imag[static_cast<int>(l)];
    if (w == 0.0) continue;
    const Link& lk = network_.links[l];
    const Complex a = Complex(std::norm(lk.t_mn), 0.0) * lk.y_branch;
    const Complex b = std::conj(lk.t_mn) * lk.t_nm * lk.y_branch;
    const Complex vmc = std::polar(vm_[lk.from_bus], va_[lk.from_bus]);
    const Complex vnc = std::polar(vm_[lk.to_bus], va_[lk.to_bus]);
    const Complex cur = a * vmc - b * vnc;
    const double mag = std::abs(cur);
    if (mag < 1e-12) continue;
    const Complex u = std::conj(cur) / mag;
    const Complex im(0.0, 1.0);
    const int rm = bus_to_idx_[lk.from_bus];
    const int rn = bus_to_idx_[lk.to_bus];
    if (rm >= 0) {
      rhs[rm] += w * (u * (a * im * vmc)).real();
      rhs[m + rm] += w * (u * (a * std::polar(1.0, va_[lk.from_bus]))).real();
    }
    if (rn >= 0) {
      rhs[rn] += w * (u * (-b * im * vnc)).real();
      rhs[m + rn] += w * (u * (-b * std::polar(1.0, va_[lk.to_bus]))).real();
    }
  }

  const Eigen::VectorXd psi = lu_.solve(rhs);
  d_p.setZero(n);
  d_q.setZero(n);
  for (int r = 0; r < m; ++r) {
    d_p[idx_to_bus_[r]] = psi[r];
    d_q[idx_to_bus_[r]] = psi[m + r];
  }
}

}  // namespace anm
