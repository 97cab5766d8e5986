#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "anm/grid.hpp"

namespace anm {

inline constexpr double kNoCap = std::numeric_limits<double>::infinity();

enum class DeviceKind { aggregate_load, flexible_load, wind_generator, pv_generator };

// Monotone-by-segments power curve given as (wind speed m/s, output MW)
// breakpoints; zero below cut-in and at/above cut-out.
struct WindParams {
  std::vector<std::pair<double, double>> power_curve;
  double capacity_mw = 0.0;
};

struct PvParams {
  double efficiency = 0.2;
  double surface_m2 = 0.0;
};

enum class FlexDirection { down_then_up, up_then_down };

struct FlexParams {
  int duration = 9;           // T_d, periods
  double amplitude_mw = 0.0;  // Delta_d
  FlexDirection direction = FlexDirection::down_then_up;
  double activation_cost = 0.0;  // C_flex, proportional to amplitude
};

struct Device {
  int id = 0;
  int bus_id = 0;
  DeviceKind kind = DeviceKind::aggregate_load;
  double tan_phi = 0.0;
  double load_scale = 1.0;  // scaling of the shared load process (loads only)
  WindParams wind;
  PvParams pv;
  FlexParams flex;

  bool is_generator() const {
    return kind == DeviceKind::wind_generator || kind == DeviceKind::pv_generator;
  }
  bool is_load() const { return !is_generator(); }
};

// Piecewise-linear interpolation of the breakpoint table, clamped to
// [0, capacity].
double wind_power(const WindParams& params, double speed_m_s);

// efficiency * surface * irradiance, converted W -> MW.
double pv_power(const PvParams& params, double irradiance_w_m2);

// +/- Delta_d * sin(1.8 pi (t_d - 0.5(T_d+1)) / (T_d - 1)); the sign is
// chosen so the first half of a down_then_up service decreases consumption
// (loads inject negative power, so the offset is positive first).
// Returns 0 for t_d outside {1..T_d}.
double modulation_signal(const FlexParams& params, int t_d);

// Default breakpoint table: cut-in 3.5 m/s, rated 13 m/s, cut-out 25 m/s.
WindParams default_wind_curve(double capacity_mw);

// Per-bus injections per the operational model: generators contribute
// min(cap, P) and min(tan_phi * cap, Q); flexible loads add their
// modulation offset with reactive part tan_phi * dP.
// p_device / caps / flex_offset are indexed by device id (MW).
std::pair<double, double> injections_at_bus(const Bus& bus,
                                            const std::vector<Device>& devices,
                                            const std::vector<double>& p_device,
                                            const std::vector<double>& caps,
                                            const std::vector<double>& flex_offset);

}  // namespace anm
