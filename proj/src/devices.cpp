#include "anm/devices.hpp"

#include <algorithm>
#include <cmath>

namespace anm {

double wind_power(const WindParams& params, double speed) {
  const auto& curve = params.power_curve;
  if (curve.empty()) return 0.0;
  if (speed <= curve.front().first) return std::clamp(curve.front().second, 0.0, params.capacity_mw);
  if (speed >= curve.back().first) return std::clamp(curve.back().second, 0.0, params.capacity_mw);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (speed <= curve[i].first) {
      const double x0 = curve[i - 1].first, x1 = curve[i].first;
      const double y0 = curve[i - 1].second, y1 = curve[i].second;
      const double y = y0 + (y1 - y0) * (speed - x0) / (x1 - x0);
      return std::clamp(y, 0.0, params.capacity_mw);
    }
  }
  return 0.0;
}

double pv_power(const PvParams& params, double irradiance) {
  return params.efficiency * params.surface_m2 * irradiance * 1e-6;
}

double modulation_signal(const FlexParams& params, int t_d) {
  if (t_d < 1 || t_d > params.duration) return 0.0;
  const double td = params.duration;
  const double arg = 1.8 * M_PI * (t_d - 0.5 * (td + 1.0)) / (td - 1.0);
  const double base = params.amplitude_mw * std::sin(arg);
  // Withdrawals are negative, so a consumption decrease is a positive offset.
  return params.direction == FlexDirection::down_then_up ? -base : base;
}

WindParams default_wind_curve(double capacity_mw) {
  WindParams p;
  p.capacity_mw = capacity_mw;
  const double c = capacity_mw;
  p.power_curve = {
      {0.0, 0.0},  {3.5, 0.0},      {5.0, 0.08 * c}, {7.0, 0.28 * c},
      {9.0, 0.55 * c}, {11.0, 0.82 * c}, {13.0, c},   {24.999, c},
      {25.0, 0.0}, {40.0, 0.0},
  };
  return p;
}

std::pair<double, double> injections_at_bus(const Bus& bus,
                                            const std::vector<Device>& devices,
                                            const std::vector<double>& p_device,
                                            const std::vector<double>& caps,
                                            const std::vector<double>& flex_offset) {
  double p = 0.0, q = 0.0;
  for (int dev_id : bus.attached_devices) {
    const Device& d = devices[dev_id];
    const double pd = p_device[dev_id];
    if (d.is_generator()) {
      const double cap = caps[dev_id];
      const double eff = std::min(cap, pd);
      p += eff;
      // min(tan_phi * cap, Q_g) with Q_g = tan_phi * P_g; requires
      // tan_phi >= 0 for generators (checked at instance load).
      q += d.tan_phi * eff;
    } else if (d.kind == DeviceKind::flexible_load) {
      const double dp = flex_offset[dev_id];
      p += pd + dp;
      q += d.tan_phi * pd + d.tan_phi * dp;
    } else {
      p += pd;
      q += d.tan_phi * pd;
    }
  }
  return {p, q};
}

}  // namespace anm
