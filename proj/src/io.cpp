#include "anm/io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace anm {

namespace {

json complex_to_json(Complex c) { return json::array({c.real(), c.imag()}); }
Complex complex_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

void require_schema(const json& j, const std::string& expected) {
  const std::string got = j.value("schema", "");
  if (got != expected)
    throw std::runtime_error("unsupported schema '" + got + "', expected '" + expected + "'");
}

std::string kind_name(DeviceKind k) {
  switch (k) {
    case DeviceKind::aggregate_load: return "aggregate_load";
    case DeviceKind::flexible_load: return "flexible_load";
    case DeviceKind::wind_generator: return "wind_generator";
    case DeviceKind::pv_generator: return "pv_generator";
  }
  throw std::logic_error("unknown device kind");
}

DeviceKind kind_from_name(const std::string& s) {
  if (s == "aggregate_load") return DeviceKind::aggregate_load;
  if (s == "flexible_load") return DeviceKind::flexible_load;
  if (s == "wind_generator") return DeviceKind::wind_generator;
  if (s == "pv_generator") return DeviceKind::pv_generator;
  throw std::runtime_error("unknown device kind '" + s + "'");
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return j;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json model_to_json(const GmmMarkovModel& m) {
  json j;
  j["schema"] = "anm-gmm/1";
  j["lags"] = m.lags;
  j["n_components"] = m.n_components;
  j["clamp_lo"] = m.clamp_lo;
  j["clamp_hi"] = m.clamp_hi;
  j["jitter_applied"] = m.jitter_applied;
  j["quarter_profile"] = json::array();
  for (int q = 0; q < m.quarter_profile.size(); ++q)
    j["quarter_profile"].push_back(m.quarter_profile[q]);
  j["components"] = json::array();
  for (const GmmComponent& c : m.components) {
    json jc;
    jc["weight"] = c.weight;
    jc["mean"] = json::array();
    for (int i = 0; i < c.mean.size(); ++i) jc["mean"].push_back(c.mean[i]);
    jc["cov"] = json::array();  // row-major
    for (int r = 0; r < c.cov.rows(); ++r) {
      json row = json::array();
      for (int col = 0; col < c.cov.cols(); ++col) row.push_back(c.cov(r, col));
      jc["cov"].push_back(row);
    }
    j["components"].push_back(std::move(jc));
  }
  return j;
}

GmmMarkovModel model_from_json(const json& j) {
  require_schema(j, "anm-gmm/1");
  GmmMarkovModel m;
  m.lags = j.at("lags").get<int>();
  m.n_components = j.at("n_components").get<int>();
  m.clamp_lo = j.at("clamp_lo").get<double>();
  m.clamp_hi = j.at("clamp_hi").get<double>();
  m.jitter_applied = j.value("jitter_applied", false);
  const auto& qp = j.at("quarter_profile");
  m.quarter_profile.resize(static_cast<int>(qp.size()));
  for (int q = 0; q < m.quarter_profile.size(); ++q) m.quarter_profile[q] = qp[q].get<double>();
  if (m.lags < 1 || m.n_components < 1)
    throw std::runtime_error("model lags/components must be positive");
  for (const auto& jc : j.at("components")) {
    GmmComponent c;
    c.weight = jc.at("weight").get<double>();
    const auto& mean = jc.at("mean");
    const int d = static_cast<int>(mean.size());
    if (d != m.lags + 1) throw std::runtime_error("model component dimension mismatch");
    c.mean.resize(d);
    for (int i = 0; i < d; ++i) c.mean[i] = mean[i].get<double>();
    const auto& cov = jc.at("cov");
    if (static_cast<int>(cov.size()) != d) throw std::runtime_error("covariance shape mismatch");
    c.cov.resize(d, d);
    for (int r = 0; r < d; ++r) {
      if (static_cast<int>(cov[r].size()) != d)
        throw std::runtime_error("covariance shape mismatch");
      for (int col = 0; col < d; ++col) c.cov(r, col) = cov[r][col].get<double>();
    }
    m.components.push_back(std::move(c));
  }
  if (static_cast<int>(m.components.size()) != m.n_components)
    throw std::runtime_error("component count mismatch");
  return m;
}

void save_model(const GmmMarkovModel& model, const std::filesystem::path& path) {
  write_text_atomic(path, model_to_json(model).dump(2) + "\n");
}

GmmMarkovModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

json instance_to_json(const AnmSystem& sys) {
  json j;
  j["schema"] = "anm-instance/1";
  j["base_mva"] = sys.network.base_mva;
  j["base_kv"] = sys.network.base_kv;
  j["slack_voltage"] = complex_to_json(sys.slack_voltage);
  j["prices"] = json::array();
  for (double c : sys.prices.curtailment) j["prices"].push_back(c);

  j["buses"] = json::array();
  for (const Bus& b : sys.network.buses) {
    json jb;
    jb["id"] = b.id;
    jb["kind"] = b.kind == BusKind::slack ? "slack"
                 : b.kind == BusKind::pq  ? "pq"
                                          : "topological";
    jb["v_min"] = b.v_min;
    jb["v_max"] = b.v_max;
    j["buses"].push_back(std::move(jb));
  }
  j["links"] = json::array();
  for (const Link& l : sys.network.links) {
    json jl;
    jl["from"] = l.from_bus;
    jl["to"] = l.to_bus;
    jl["t_mn"] = complex_to_json(l.t_mn);
    jl["t_nm"] = complex_to_json(l.t_nm);
    jl["y_branch"] = complex_to_json(l.y_branch);
    jl["y_shunt_m"] = complex_to_json(l.y_shunt_m);
    jl["y_shunt_n"] = complex_to_json(l.y_shunt_n);
    jl["i_max"] = l.i_max;
    j["links"].push_back(std::move(jl));
  }
  j["devices"] = json::array();
  for (const Device& d : sys.devices) {
    json jd;
    jd["id"] = d.id;
    jd["bus"] = d.bus_id;
    jd["kind"] = kind_name(d.kind);
    jd["tan_phi"] = d.tan_phi;
    if (d.is_load()) jd["load_scale"] = d.load_scale;
    if (d.kind == DeviceKind::wind_generator) {
      jd["wind"]["capacity_mw"] = d.wind.capacity_mw;
      jd["wind"]["power_curve"] = json::array();
      for (const auto& [s, p] : d.wind.power_curve)
        jd["wind"]["power_curve"].push_back(json::array({s, p}));
    }
    if (d.kind == DeviceKind::pv_generator) {
      jd["pv"]["efficiency"] = d.pv.efficiency;
      jd["pv"]["surface_m2"] = d.pv.surface_m2;
    }
    if (d.kind == DeviceKind::flexible_load) {
      jd["flex"]["duration"] = d.flex.duration;
      jd["flex"]["amplitude_mw"] = d.flex.amplitude_mw;
      jd["flex"]["direction"] =
          d.flex.direction == FlexDirection::down_then_up ? "down_then_up" : "up_then_down";
      jd["flex"]["activation_cost"] = d.flex.activation_cost;
    }
    j["devices"].push_back(std::move(jd));
  }
  return j;
}

AnmSystem instance_from_json(const json& j) {
  require_schema(j, "anm-instance/1");
  AnmSystem sys;
  std::vector<Bus> buses;
  for (const auto& jb : j.at("buses")) {
    Bus b;
    b.id = jb.at("id").get<int>();
    const std::string k = jb.at("kind").get<std::string>();
    if (k == "slack")
      b.kind = BusKind::slack;
    else if (k == "pq")
      b.kind = BusKind::pq;
    else if (k == "topological")
      b.kind = BusKind::topological;
    else
      throw std::runtime_error("unknown bus kind '" + k + "'");
    b.v_min = jb.at("v_min").get<double>();
    b.v_max = jb.at("v_max").get<double>();
    buses.push_back(std::move(b));
  }
  std::vector<Link> links;
  for (const auto& jl : j.at("links")) {
    Link l;
    l.from_bus = jl.at("from").get<int>();
    l.to_bus = jl.at("to").get<int>();
    l.t_mn = complex_from_json(jl.at("t_mn"));
    l.t_nm = complex_from_json(jl.at("t_nm"));
    l.y_branch = complex_from_json(jl.at("y_branch"));
    l.y_shunt_m = complex_from_json(jl.at("y_shunt_m"));
    l.y_shunt_n = complex_from_json(jl.at("y_shunt_n"));
    l.i_max = jl.at("i_max").get<double>();
    links.push_back(std::move(l));
  }

  for (const auto& jd : j.at("devices")) {
    Device d;
    d.id = jd.at("id").get<int>();
    d.bus_id = jd.at("bus").get<int>();
    d.kind = kind_from_name(jd.at("kind").get<std::string>());
    d.tan_phi = jd.at("tan_phi").get<double>();
    d.load_scale = jd.value("load_scale", 1.0);
    if (d.kind == DeviceKind::wind_generator) {
      const auto& jw = jd.at("wind");
      d.wind.capacity_mw = jw.at("capacity_mw").get<double>();
      for (const auto& bp : jw.at("power_curve"))
        d.wind.power_curve.emplace_back(bp.at(0).get<double>(), bp.at(1).get<double>());
    }
    if (d.kind == DeviceKind::pv_generator) {
      d.pv.efficiency = jd.at("pv").at("efficiency").get<double>();
      d.pv.surface_m2 = jd.at("pv").at("surface_m2").get<double>();
    }
    if (d.kind == DeviceKind::flexible_load) {
      const auto& jf = jd.at("flex");
      d.flex.duration = jf.at("duration").get<int>();
      d.flex.amplitude_mw = jf.at("amplitude_mw").get<double>();
      const std::string dir = jf.at("direction").get<std::string>();
      if (dir == "down_then_up")
        d.flex.direction = FlexDirection::down_then_up;
      else if (dir == "up_then_down")
        d.flex.direction = FlexDirection::up_then_down;
      else
        throw std::runtime_error("unknown flex direction '" + dir + "'");
      d.flex.activation_cost = jf.at("activation_cost").get<double>();
    }
    if (static_cast<int>(sys.devices.size()) != d.id)
      throw std::runtime_error("device ids must be dense and ordered");
    sys.devices.push_back(std::move(d));
  }
  for (const Device& d : sys.devices) {
    if (d.bus_id < 0 || d.bus_id >= static_cast<int>(buses.size()))
      throw std::runtime_error("device attached to unknown bus");
    buses[d.bus_id].attached_devices.push_back(d.id);
  }
  sys.network = NetworkModel::build(std::move(buses), std::move(links),
                                    j.at("base_mva").get<double>(),
                                    j.at("base_kv").get<double>());
  sys.slack_voltage = complex_from_json(j.at("slack_voltage"));
  const auto& prices = j.at("prices");
  if (prices.size() != 96) throw std::runtime_error("price profile must have 96 entries");
  for (int q = 0; q < 96; ++q) sys.prices.curtailment[q] = prices[q].get<double>();
  sys.finalize();
  return sys;
}

void save_instance(const AnmSystem& sys, const std::filesystem::path& path) {
  write_text_atomic(path, instance_to_json(sys).dump(2) + "\n");
}

AnmSystem load_instance(const std::filesystem::path& path) {
  return instance_from_json(read_json_file(path));
}

json state_to_json(const SystemState& s) {
  json j;
  j["schema"] = "anm-state/1";
  j["load_p"] = s.load_p;
  j["irradiance"] = s.irradiance;
  j["wind_speed"] = s.wind_speed;
  j["gen_cap"] = json::array();
  for (double c : s.gen_cap)
    j["gen_cap"].push_back(std::isfinite(c) ? json(c) : json());  // null = no cap
  j["flex_countdown"] = s.flex_countdown;
  j["load_hist"] = s.load_hist;
  j["ir_hist"] = s.ir_hist;
  j["wind_hist"] = s.wind_hist;
  j["quarter"] = s.quarter;
  return j;
}

SystemState state_from_json(const json& j) {
  require_schema(j, "anm-state/1");
  SystemState s;
  s.load_p = j.at("load_p").get<std::vector<double>>();
  s.irradiance = j.at("irradiance").get<double>();
  s.wind_speed = j.at("wind_speed").get<double>();
  for (const auto& c : j.at("gen_cap"))
    s.gen_cap.push_back(c.is_null() ? kNoCap : c.get<double>());
  s.flex_countdown = j.at("flex_countdown").get<std::vector<int>>();
  s.load_hist = j.at("load_hist").get<std::vector<std::vector<double>>>();
  s.ir_hist = j.at("ir_hist").get<std::vector<double>>();
  s.wind_hist = j.at("wind_hist").get<std::vector<double>>();
  s.quarter = j.at("quarter").get<int>();
  if (s.quarter < 1 || s.quarter > 96) throw std::runtime_error("quarter must be in 1..96");
  return s;
}

void attach_models(AnmSystem& sys, const std::filesystem::path& load_model,
                   const std::filesystem::path& wind_model,
                   const std::filesystem::path& ir_model) {
  sys.load_model = anm::load_model(load_model);
  sys.wind_model = anm::load_model(wind_model);
  sys.ir_model = anm::load_model(ir_model);
}

}  // namespace anm
