#pragma once

// Voltage-support game on a radial distribution feeder: linearized DistFlow
// sensitivities, EV charger agents, and the cost
//   J_i(x_i, s) = -col(pi, 0)'x_i + ||s - sigma_ref||_H^2 + ||x_i||_lwm^2.
//
// Decision variables x_i = (p_i, q_i) are in per-unit of power_base_kva, so the
// sensitivities stay O(1). Prices are converted to currency per p.u.-hour.

#include "trades/game.hpp"
#include "trades/projection.hpp"

#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace trades::grid {

struct RadialNetwork {
  std::vector<Index> parent;  // parent[0] = -1 (substation)
  Vec line_r;                 // impedance of the line into bus k (p.u.); entry 0 unused
  Vec line_x;
  Vec baseline_kw;            // peak baseline active load per bus

  Index buses() const { return static_cast<Index>(parent.size()); }

  void validate() const {
    const Index n = buses();
    if (n < 2) throw std::invalid_argument("RadialNetwork: need at least two buses");
    if (line_r.size() != n || line_x.size() != n || baseline_kw.size() != n)
      throw DimensionMismatch("RadialNetwork line data", n, line_r.size());
    if (parent[0] != -1) throw std::invalid_argument("RadialNetwork: bus 0 must be the root");
    for (Index k = 1; k < n; ++k) {
      // parents precede children, so the pointers form a tree rooted at 0
      if (parent[k] < 0 || parent[k] >= k) throw std::invalid_argument("RadialNetwork: parent must precede bus");
      if (!(line_r[k] > 0.0) || !(line_x[k] > 0.0)) throw std::invalid_argument("RadialNetwork: r, x must be positive");
      if (baseline_kw[k] < 0.0) throw std::invalid_argument("RadialNetwork: negative baseline load");
    }
  }
};

struct NetworkGenOptions {
  double impedance_min = 0.001;
  double impedance_max = 0.05;
  double load_min_kw = 10.0;
  double load_max_kw = 120.0;
};

/// Random tree: bus k attaches to a uniformly chosen bus in [0, k). Line r and x
/// are log-uniform on [impedance_min, impedance_max].
inline RadialNetwork build_radial_network(Index buses, std::uint64_t seed, const NetworkGenOptions& opts = {}) {
  if (buses < 2) throw std::invalid_argument("build_radial_network: need at least two buses");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> log_imp(std::log(opts.impedance_min), std::log(opts.impedance_max));
  std::uniform_real_distribution<double> load(opts.load_min_kw, opts.load_max_kw);
  RadialNetwork net;
  net.parent.assign(static_cast<std::size_t>(buses), -1);
  net.line_r = Vec::Zero(buses);
  net.line_x = Vec::Zero(buses);
  net.baseline_kw = Vec::Zero(buses);
  for (Index k = 1; k < buses; ++k) {
    net.parent[k] = std::uniform_int_distribution<Index>(0, k - 1)(rng);
    net.line_r[k] = std::exp(log_imp(rng));
    net.line_x[k] = std::exp(log_imp(rng));
    net.baseline_kw[k] = load(rng);
  }
  return net;
}

/// CSV with header "bus, parent, r, x, baseline_p"; bus 0 is the root (parent -1).
inline RadialNetwork read_network_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("network csv: missing header");
  struct Row {
    Index bus, parent;
    double r, x, p;
  };
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ss(line);
    Row row{};
    if (!(ss >> row.bus >> row.parent >> row.r >> row.x >> row.p)) throw Error("network csv: malformed row '" + line + "'");
    rows.push_back(row);
  }
  const auto n = static_cast<Index>(rows.size());
  RadialNetwork net;
  net.parent.assign(rows.size(), -1);
  net.line_r = Vec::Zero(n);
  net.line_x = Vec::Zero(n);
  net.baseline_kw = Vec::Zero(n);
  std::vector<char> seen(rows.size(), 0);
  for (const auto& row : rows) {
    if (row.bus < 0 || row.bus >= n || seen[row.bus]) throw Error("network csv: bus ids must be 0..N-1, unique");
    seen[row.bus] = 1;
    net.parent[row.bus] = row.parent;
    net.line_r[row.bus] = row.bus == 0 ? 0.0 : row.r;
    net.line_x[row.bus] = row.bus == 0 ? 0.0 : row.x;
    net.baseline_kw[row.bus] = row.p;
  }
  net.validate();
  return net;
}

inline void write_network_csv(std::ostream& os, const RadialNetwork& net) {
  os << "bus, parent, r, x, baseline_p\n" << std::setprecision(17);
  for (Index k = 0; k < net.buses(); ++k)
    os << k << ", " << net.parent[k] << ", " << net.line_r[k] << ", " << net.line_x[k] << ", " << net.baseline_kw[k]
       << '\n';
}

/// Nodal baseline load over the horizon, in p.u. (rows = buses, cols = slots).
struct LoadProfile {
  RowMat p;
  RowMat q;
};

/// Evening-peaking daily shape applied to each bus' peak load; q = q_ratio * p.
inline LoadProfile baseline_load(const RadialNetwork& net, Index horizon, double power_base_kva, double q_ratio = 0.3) {
  LoadProfile load{RowMat(net.buses(), horizon), RowMat(net.buses(), horizon)};
  for (Index t = 0; t < horizon; ++t) {
    const double h = 24.0 * static_cast<double>(t) / static_cast<double>(horizon);
    const double shape = 0.6 + 0.4 * std::exp(-std::pow((h - 19.0) / 3.0, 2)) + 0.2 * std::exp(-std::pow((h - 8.0) / 2.0, 2));
    load.p.col(t) = net.baseline_kw * (shape / power_base_kva);
  }
  load.q = q_ratio * load.p;
  return load;
}

struct DistFlowModel {
  Mat R;   // N_b x N_b
  Mat X;
  Vec v0;  // bus-major: index b * T + t
  Index horizon = 0;

  Index buses() const { return R.rows(); }
  Index aggregate_dim() const { return buses() * horizon; }
};

/// Entry (i, j) = 2 * sum of line impedances on the common root path of i and j.
inline Mat common_path_matrix(const RadialNetwork& net, const Vec& line) {
  const Index n = net.buses();
  std::vector<std::vector<char>> on_path(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(n), 0));
  for (Index b = 0; b < n; ++b)
    for (Index k = b; k > 0; k = net.parent[k]) on_path[b][k] = 1;
  Mat m = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Index k = 1; k < n; ++k)
        if (on_path[i][k] && on_path[j][k]) s += line[k];
      m(i, j) = 2.0 * s;
    }
  return m;
}

inline DistFlowModel distflow_sensitivities(const RadialNetwork& net, const LoadProfile& load) {
  net.validate();
  if (load.p.rows() != net.buses() || load.q.rows() != net.buses() || load.p.cols() != load.q.cols())
    throw DimensionMismatch("distflow_sensitivities load rows", net.buses(), load.p.rows());
  DistFlowModel m;
  m.R = common_path_matrix(net, net.line_r);
  m.X = common_path_matrix(net, net.line_x);
  m.horizon = load.p.cols();
  const RowMat dv = -(m.R * load.p + m.X * load.q);
  m.v0 = Vec::Ones(m.aggregate_dim());
  for (Index b = 0; b < m.buses(); ++b)
    for (Index t = 0; t < m.horizon; ++t) m.v0[b * m.horizon + t] += dv(b, t);
  return m;
}

struct EvAgentSpec {
  Index bus = 1;
  std::vector<int> plugged;  // per slot, 0/1
  double charge_kwh = 0.0;
  double s_max_kva = 7.0;

  int plugged_slots() const {
    int s = 0;
    for (int a : plugged) s += a;
    return s;
  }
};

struct AgentGenOptions {
  double s_max_kva = 7.0;
  double charge_max_kwh = 40.0;
  int arrival_min_hour = 17;
  int arrival_max_hour = 22;
  int stay_min_hours = 6;
  int stay_max_hours = 12;
};

/// Buses drawn proportionally to baseline load; overnight plug-in windows that
/// wrap around the horizon; charge ~ U(0, charge_max) clipped to what the
/// inverter can deliver while plugged.
inline std::vector<EvAgentSpec> gen_agents(std::size_t count, const RadialNetwork& net, Index horizon,
                                           std::uint64_t seed, const AgentGenOptions& opts = {}) {
  if (horizon < 1) throw std::invalid_argument("gen_agents: empty horizon");
  const std::vector<double> weights(net.baseline_kw.data(), net.baseline_kw.data() + net.buses());
  if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0)
    throw std::invalid_argument("gen_agents: baseline load is zero everywhere");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<Index> bus_dist(weights.begin(), weights.end());
  std::uniform_int_distribution<int> arrival(opts.arrival_min_hour, opts.arrival_max_hour);
  std::uniform_int_distribution<int> stay(opts.stay_min_hours, opts.stay_max_hours);
  std::uniform_real_distribution<double> charge(0.0, opts.charge_max_kwh);
  const double slots_per_hour = static_cast<double>(horizon) / 24.0;

  std::vector<EvAgentSpec> agents;
  agents.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    EvAgentSpec a;
    a.bus = bus_dist(rng);
    a.s_max_kva = opts.s_max_kva;
    a.plugged.assign(static_cast<std::size_t>(horizon), 0);
    const auto start = static_cast<Index>(std::floor(arrival(rng) * slots_per_hour));
    const auto len = std::max<Index>(1, static_cast<Index>(std::lround(stay(rng) * slots_per_hour)));
    for (Index k = 0; k < std::min(len, horizon); ++k) a.plugged[(start + k) % horizon] = 1;
    // slot length is one hour of the 24 h day
    const double deliverable = a.s_max_kva * a.plugged_slots() * (24.0 / static_cast<double>(horizon));
    a.charge_kwh = std::min(charge(rng), deliverable);
    agents.push_back(std::move(a));
  }
  return agents;
}

/// CSV "bus, charge_kwh, s_max_kva, plugged" with plugged as a 0/1 string.
inline void write_agents_csv(std::ostream& os, const std::vector<EvAgentSpec>& agents) {
  os << "bus, charge_kwh, s_max_kva, plugged\n" << std::setprecision(17);
  for (const auto& a : agents) {
    os << a.bus << ", " << a.charge_kwh << ", " << a.s_max_kva << ", ";
    for (int v : a.plugged) os << v;
    os << '\n';
  }
}

inline std::vector<EvAgentSpec> read_agents_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("agents csv: missing header");
  std::vector<EvAgentSpec> agents;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ss(line);
    EvAgentSpec a;
    std::string bits;
    if (!(ss >> a.bus >> a.charge_kwh >> a.s_max_kva >> bits)) throw Error("agents csv: malformed row");
    for (char c : bits) {
      if (c != '0' && c != '1') throw Error("agents csv: plugged profile must be 0/1");
      a.plugged.push_back(c - '0');
    }
    agents.push_back(std::move(a));
  }
  return agents;
}

/// Day-ahead style price curve (currency/kWh): two superposed daily harmonics
/// with seeded jitter on phases and amplitudes.
inline Vec price_curve(Index horizon, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double a1 = 0.05 * (1.0 + 0.2 * jitter(rng));
  const double a2 = 0.04 * (1.0 + 0.2 * jitter(rng));
  const double p1 = 7.0 + jitter(rng);
  const double p2 = 3.0 + jitter(rng);
  constexpr double kTwoPi = 6.283185307179586;
  Vec price(horizon);
  for (Index t = 0; t < horizon; ++t) {
    const double h = 24.0 * static_cast<double>(t) / static_cast<double>(horizon);
    price[t] = 0.10 + a1 * std::sin(kTwoPi * (h - p1) / 24.0) + a2 * std::sin(2.0 * kTwoPi * (h - p2) / 24.0);
  }
  return price;
}

/// CSV "hour, price".
inline Vec read_price_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("price csv: missing header");
  std::vector<std::pair<long, double>> rows;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ss(line);
    long hour = 0;
    double price = 0.0;
    if (!(ss >> hour >> price)) throw Error("price csv: malformed row");
    rows.emplace_back(hour, price);
  }
  Vec out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].first != static_cast<long>(k)) throw Error("price csv: hours must be 0..T-1 in order");
    out[static_cast<Index>(k)] = rows[k].second;
  }
  return out;
}

struct VoltageGameConfig {
  Vec price;         // T, currency per kWh
  Mat H;             // d x d, positive definite
  Mat local_weight;  // 2T x 2T, positive definite
  Vec sigma_ref;     // d
  double power_base_kva = 1000.0;
  bool reactive_always_on = true;

  void validate(Index horizon, Index aggregate_dim) const {
    if (price.size() != horizon) throw DimensionMismatch("VoltageGameConfig price", horizon, price.size());
    if (H.rows() != aggregate_dim || H.cols() != aggregate_dim)
      throw DimensionMismatch("VoltageGameConfig H", aggregate_dim, H.rows());
    if (local_weight.rows() != 2 * horizon || local_weight.cols() != 2 * horizon)
      throw DimensionMismatch("VoltageGameConfig local weight", 2 * horizon, local_weight.rows());
    if (sigma_ref.size() != aggregate_dim) throw DimensionMismatch("VoltageGameConfig sigma_ref", aggregate_dim, sigma_ref.size());
    if (!(power_base_kva > 0.0)) throw std::invalid_argument("VoltageGameConfig: power base must be positive");
    auto pd = [](const Mat& m) {
      if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) return false;
      Eigen::LLT<Mat> llt(m);
      return llt.info() == Eigen::Success;
    };
    if (!pd(H)) throw std::invalid_argument("indefinite penalty: H must be symmetric positive definite");
    if (!pd(local_weight)) throw std::invalid_argument("indefinite local weight: lwm must be symmetric positive definite");
  }
};

/// H = I_d, lwm = diag(1, 10) (x) I_T, sigma_ref = 1 - v0 (deviation from 1 p.u.).
inline VoltageGameConfig default_voltage_config(const DistFlowModel& model, Vec price, double power_base_kva = 1000.0) {
  const Index T = model.horizon;
  const Index d = model.aggregate_dim();
  VoltageGameConfig cfg;
  cfg.price = std::move(price);
  cfg.H = Mat::Identity(d, d);
  cfg.local_weight = Mat::Zero(2 * T, 2 * T);
  cfg.local_weight.diagonal().head(T).setConstant(1.0);
  cfg.local_weight.diagonal().tail(T).setConstant(10.0);
  cfg.sigma_ref = Vec::Ones(d) - model.v0;
  cfg.power_base_kva = power_base_kva;
  return cfg;
}

namespace detail {

/// Contribution of one agent to the bus voltages: ([rho xi] (x) I_T) x_i, scaled.
struct BusSensitivity {
  Vec rho;
  Vec xi;
  Index horizon;

  Vec apply(const Vec& x, double scale) const {
    const Index T = horizon;
    Vec out(rho.size() * T);
    Eigen::Map<Mat> v(out.data(), T, rho.size());  // (t, b) = out[b T + t]
    v.noalias() = scale * (x.head(T) * rho.transpose() + x.tail(T) * xi.transpose());
    return out;
  }

  Vec apply_transpose(const Vec& w, double scale) const {
    const Index T = horizon;
    Eigen::Map<const Mat> wm(w.data(), T, rho.size());
    Vec out(2 * T);
    out.head(T).noalias() = scale * (wm * rho);
    out.tail(T).noalias() = scale * (wm * xi);
    return out;
  }

  Mat dense(double scale) const {
    const Index T = horizon;
    Mat m = Mat::Zero(rho.size() * T, 2 * T);
    for (Index b = 0; b < rho.size(); ++b) {
      m.block(b * T, 0, T, T).diagonal().setConstant(scale * rho[b]);
      m.block(b * T, T, T, T).diagonal().setConstant(scale * xi[b]);
    }
    return m;
  }
};

}  // namespace detail

/// phi_i(x_i) = N [rho_i xi_i] (x) I_T x_i, where rho_i, xi_i are the sensitivity columns of the agent's bus.
inline AggregationRule voltage_rule(const DistFlowModel& model, Index bus, std::size_t agents) {
  auto sens = std::make_shared<const detail::BusSensitivity>(
      detail::BusSensitivity{model.R.col(bus), model.X.col(bus), model.horizon});
  const double n = static_cast<double>(agents);
  AggregationRule rule;
  rule.dim_in = 2 * model.horizon;
  rule.dim_out = model.aggregate_dim();
  rule.eval = [sens, n](const Vec& x) { return sens->apply(x, n); };
  rule.jacobian = [sens, n](const Vec&) { return sens->dense(n); };
  rule.jacobian_transpose_times = [sens, n](const Vec&, const Vec& w) { return sens->apply_transpose(w, n); };
  rule.lipschitz_bound = n * std::sqrt(sens->rho.squaredNorm() + sens->xi.squaredNorm());
  return rule;
}

inline GameDefinition build_voltage_game(const DistFlowModel& model, const std::vector<EvAgentSpec>& agents,
                                         const VoltageGameConfig& cfg) {
  const Index T = model.horizon;
  const Index d = model.aggregate_dim();
  cfg.validate(T, d);
  if (agents.empty()) throw std::invalid_argument("build_voltage_game: no agents");
  const auto N = agents.size();

  Vec linear = Vec::Zero(2 * T);
  linear.head(T) = -cfg.price * cfg.power_base_kva;  // -col(pi, 0) in currency per p.u.-hour
  auto lin = std::make_shared<const Vec>(linear);
  auto lwm = std::make_shared<const Mat>(cfg.local_weight);
  auto sigma_ref = std::make_shared<const Vec>(cfg.sigma_ref);
  const bool h_diag = (cfg.H - Mat(cfg.H.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  auto H = std::make_shared<const Mat>(cfg.H);
  auto h_diagonal = std::make_shared<const Vec>(cfg.H.diagonal());

  std::vector<Agent> out;
  out.reserve(N);
  for (const auto& a : agents) {
    if (a.bus < 0 || a.bus >= model.buses()) throw std::invalid_argument("build_voltage_game: agent bus out of range");
    if (static_cast<Index>(a.plugged.size()) != T) throw DimensionMismatch("agent plugged profile", T, a.plugged.size());
    CostOracle cost;
    cost.grad1 = [lin, lwm](const Vec& x, const Vec&) -> Vec { return *lin + 2.0 * (*lwm * x); };
    if (h_diag) {
      cost.grad2 = [h_diagonal, sigma_ref](const Vec&, const Vec& s) -> Vec {
        return 2.0 * h_diagonal->cwiseProduct(s - *sigma_ref);
      };
    } else {
      cost.grad2 = [H, sigma_ref](const Vec&, const Vec& s) -> Vec { return 2.0 * (*H * (s - *sigma_ref)); };
    }
    cost.value = [lin, lwm, H, sigma_ref](const Vec& x, const Vec& s) {
      const Vec e = s - *sigma_ref;
      return lin->dot(x) + e.dot(*H * e) + x.dot(*lwm * x);
    };
    const double scale = 24.0 / static_cast<double>(T);  // kWh per kW-slot
    out.push_back(Agent{std::move(cost), voltage_rule(model, a.bus, N),
                        build_ev_projector(a.plugged, a.charge_kwh / (cfg.power_base_kva * scale),
                                           a.s_max_kva / cfg.power_base_kva, cfg.reactive_always_on)});
  }
  GameDefinition game(std::move(out), d);

  // F(x) = 2 blkdiag(lwm) x + 2 B'H(B x - sigma_ref) - col(pi, 0), with B = [B_1 ... B_N] and
  // B_i = [rho_i xi_i] (x) I_T, so that sigma(x) = B x.
  const Index n = static_cast<Index>(N) * 2 * T;
  Mat B(d, n);
  for (std::size_t i = 0; i < N; ++i) {
    const detail::BusSensitivity sens{model.R.col(agents[i].bus), model.X.col(agents[i].bus), T};
    B.middleCols(static_cast<Index>(i) * 2 * T, 2 * T) = sens.dense(1.0);
  }
  const Mat HB = cfg.H * B;
  AffineCertificate cert;
  cert.A = 2.0 * B.transpose() * HB;
  Vec hs = 2.0 * (B.transpose() * (cfg.H * cfg.sigma_ref));
  cert.b = Vec(n);
  for (std::size_t i = 0; i < N; ++i) {
    const Index off = static_cast<Index>(i) * 2 * T;
    cert.A.block(off, off, 2 * T, 2 * T) += 2.0 * cfg.local_weight;
    cert.b.segment(off, 2 * T) = linear - hs.segment(off, 2 * T);
  }
  game.set_affine(std::move(cert));
  return game;
}

struct VoltageEvaluation {
  Vec v;      // bus-major voltages, p.u.
  Vec sigma;  // v - v0
  double deviation = 0.0;  // ||sigma - sigma_ref||_H^2
};

/// v = v0 + sum_i ([rho_i xi_i] (x) I_T) x_i
inline VoltageEvaluation evaluate_voltages(const DistFlowModel& model, const std::vector<EvAgentSpec>& agents,
                                           const VoltageGameConfig& cfg, const StrategyProfile& x) {
  if (x.num_agents() != agents.size())
    throw DimensionMismatch("evaluate_voltages agents", static_cast<Index>(agents.size()), static_cast<Index>(x.num_agents()));
  VoltageEvaluation ev;
  ev.sigma = Vec::Zero(model.aggregate_dim());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (x.dim(i) != 2 * model.horizon) throw DimensionMismatch("evaluate_voltages x_i", 2 * model.horizon, x.dim(i));
    const detail::BusSensitivity sens{model.R.col(agents[i].bus), model.X.col(agents[i].bus), model.horizon};
    ev.sigma += sens.apply(x.agent(i), 1.0);
  }
  ev.v = model.v0 + ev.sigma;
  const Vec e = ev.sigma - cfg.sigma_ref;
  ev.deviation = e.dot(cfg.H * e);
  return ev;
}

}  // namespace trades::grid
