#include "fasep/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_map>

namespace fasep {

WeakAsymParams weak_asym_params(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("weak_asym_params: epsilon must lie in (0,1)");
  WeakAsymParams w;
  w.epsilon = epsilon;
  w.p = 0.5 * std::exp(epsilon);
  w.q = 0.5 * std::exp(-epsilon);
  w.lambda = -epsilon;
  const double em1 = std::expm1(-epsilon);
  w.nu = 0.5 * std::exp(epsilon) * em1 * em1;
  w.mu = std::exp(-epsilon);
  w.diffusion = 0.5;
  return w;
}

WeakAsymParams params_from_rates(double p, double q) {
  if (!(p > 0.0 && q > 0.0 && q <= p)) throw std::invalid_argument("params_from_rates: need 0 < q <= p");
  WeakAsymParams w;
  w.p = p;
  w.q = q;
  w.lambda = 0.5 * std::log(q / p);
  w.epsilon = -w.lambda;
  const double d = std::sqrt(p) - std::sqrt(q);
  w.nu = d * d;
  w.mu = std::sqrt(q / p);
  w.diffusion = std::sqrt(p * q);
  return w;
}

int certified_margin(double t_end) {
  if (t_end < 0) throw std::invalid_argument("certified_margin: negative time");
  return static_cast<int>(std::ceil(1.5 * t_end + 12.0 * std::sqrt(t_end) + 64.0));
}

std::vector<Transition> enabled_transitions_fasep(const FasepConfig& cfg, const WeakAsymParams& params) {
  const auto cert = validate_regular(cfg);
  if (!cert.regular) throw NotRegular("enabled_transitions_fasep: configuration is not regular");
  std::vector<Transition> out;
  for (int x = cert.L; x < cert.R; ++x) {
    if (cfg.eta(x) != 1) continue;
    if (cfg.eta(x - 1) == 1 && cfg.eta(x + 1) == 0) out.push_back({TransitionKind::fasep_right, x, params.p});
    if (cfg.eta(x + 1) == 1 && cfg.eta(x - 1) == 0) out.push_back({TransitionKind::fasep_left, x, params.q});
  }
  return out;
}

std::vector<Transition> enabled_transitions_asep(const HalfLineConfig& cfg, const WeakAsymParams& params) {
  std::vector<Transition> out;
  if (cfg.sigma(1) == 0) out.push_back({TransitionKind::asep_inject, 1, params.p});
  for (int x = 1; x <= cfg.n_trunc(); ++x) {
    const int a = cfg.sigma(x), b = cfg.sigma(x + 1);
    if (a == 1 && b == 0) out.push_back({TransitionKind::asep_right, x, params.p});
    if (a == 0 && b == 1) out.push_back({TransitionKind::asep_left, x, params.q});
  }
  return out;
}

FasepConfig apply_transition(const FasepConfig& cfg, const Transition& tr) {
  FasepConfig out = cfg;
  const int x = tr.site;
  const int to = tr.kind == TransitionKind::fasep_right ? x + 1 : x - 1;
  if (tr.kind != TransitionKind::fasep_right && tr.kind != TransitionKind::fasep_left)
    throw std::invalid_argument("apply_transition: not a FASEP transition");
  if (!cfg.in_window(x) || !cfg.in_window(to)) throw WindowTooSmall("FASEP move leaves the stored window");
  if (cfg.eta(x) != 1 || cfg.eta(to) != 0) throw std::invalid_argument("apply_transition: move not enabled");
  out.set(x, 0);
  out.set(to, 1);
  return out;
}

HalfLineConfig apply_transition(const HalfLineConfig& cfg, const Transition& tr) {
  HalfLineConfig out = cfg;
  switch (tr.kind) {
    case TransitionKind::asep_inject:
      if (cfg.sigma(1) != 0) throw std::invalid_argument("apply_transition: injection blocked");
      if (cfg.n_trunc() < 2) throw TruncationBreach("injection into a lattice of size < 2");
      out.set(1, 1);
      ++out.injections;
      return out;
    case TransitionKind::asep_right:
      if (cfg.sigma(tr.site) != 1 || cfg.sigma(tr.site + 1) != 0)
        throw std::invalid_argument("apply_transition: move not enabled");
      if (tr.site + 1 >= cfg.n_trunc()) throw TruncationBreach("particle reached the truncation bound");
      out.set(tr.site, 0);
      out.set(tr.site + 1, 1);
      return out;
    case TransitionKind::asep_left:
      if (cfg.sigma(tr.site) != 0 || cfg.sigma(tr.site + 1) != 1)
        throw std::invalid_argument("apply_transition: move not enabled");
      out.set(tr.site + 1, 0);
      out.set(tr.site, 1);
      return out;
    default:
      throw std::invalid_argument("apply_transition: not an ASEP transition");
  }
}

void IndexedSet::insert(int id) {
  auto& p = pos_[static_cast<std::size_t>(id)];
  if (p >= 0) return;
  p = static_cast<int>(items_.size());
  items_.push_back(id);
}

void IndexedSet::erase(int id) {
  auto& p = pos_[static_cast<std::size_t>(id)];
  if (p < 0) return;
  const int last = items_.back();
  items_[static_cast<std::size_t>(p)] = last;
  pos_[static_cast<std::size_t>(last)] = p;
  items_.pop_back();
  p = -1;
}

namespace {

// Splits one uniform draw in (0, total] into a pick from the p-set or q-set.
template <class F>
void pick(double u, double p, double q, const IndexedSet& right, const IndexedSet& left, F&& fire) {
  const double total = p * right.size() + q * left.size();
  const double x = u * total;
  const double pr = p * right.size();
  if (x <= pr && right.size() > 0) {
    const int i = std::min(right.size() - 1, static_cast<int>(x / p));
    fire(true, right.at(i));
  } else {
    const int i = std::min(left.size() - 1, static_cast<int>((x - pr) / q));
    fire(false, left.at(std::max(i, 0)));
  }
}

}  // namespace

HalfLineSimulator::HalfLineSimulator(HalfLineConfig init, const WeakAsymParams& params, Rng& rng, int safety_margin)
    : cfg_(std::move(init)), p_(params.p), q_(params.q), rng_(&rng), safety_margin_(safety_margin) {
  const int n = cfg_.n_trunc();
  if (n < 2) throw std::invalid_argument("HalfLineSimulator: n_trunc must be at least 2");
  if (cfg_.rightmost() >= n - safety_margin_) throw TruncationBreach("initial state already touches n_trunc");
  right_.resize(n + 1);
  left_.resize(n + 1);
  for (int b = 0; b <= n; ++b) refresh_bond(b);
  draw_pending();
}

void HalfLineSimulator::refresh_bond(int b) {
  const int n = cfg_.n_trunc();
  if (b < 0 || b > n) return;
  if (b == 0) {
    right_.set(0, cfg_.sigma(1) == 0);
    return;
  }
  const int a = cfg_.occ[static_cast<std::size_t>(b - 1)];
  const int c = b < n ? cfg_.occ[static_cast<std::size_t>(b)] : 0;
  right_.set(b, a == 1 && c == 0);
  left_.set(b, a == 0 && c == 1);
}

void HalfLineSimulator::draw_pending() {
  const double total = total_rate();
  pending_ = total > 0 ? time_ + rng_->exponential(total) : std::numeric_limits<double>::infinity();
}

bool HalfLineSimulator::step(double t_stop) {
  if (pending_ > t_stop) {
    time_ = std::max(time_, t_stop);
    return false;
  }
  time_ = pending_;
  pick(rng_->uniform(), p_, q_, right_, left_, [&](bool is_right, int b) {
    if (is_right) {
      if (b == 0) {
        cfg_.occ[0] = 1;
        ++cfg_.injections;
        last_ = {time_, TransitionKind::asep_inject, 1};
        refresh_bond(0);
        refresh_bond(1);
        return;
      }
      if (b + 1 >= cfg_.n_trunc() - safety_margin_)
        throw TruncationBreach("particle reached n_trunc - safety_margin at t=" + std::to_string(time_));
      cfg_.occ[static_cast<std::size_t>(b - 1)] = 0;
      cfg_.occ[static_cast<std::size_t>(b)] = 1;
      last_ = {time_, TransitionKind::asep_right, b};
    } else {
      cfg_.occ[static_cast<std::size_t>(b)] = 0;
      cfg_.occ[static_cast<std::size_t>(b - 1)] = 1;
      last_ = {time_, TransitionKind::asep_left, b};
    }
    refresh_bond(b - 1);
    refresh_bond(b);
    refresh_bond(b + 1);
  });
  draw_pending();
  return true;
}

FasepSimulator::FasepSimulator(FasepConfig init, const WeakAsymParams& params, Rng& rng)
    : cfg_(std::move(init)), p_(params.p), q_(params.q), rng_(&rng) {
  if (!validate_regular(cfg_).regular) throw NotRegular("FasepSimulator: initial configuration is not regular");
  check_edges();
  const int w = static_cast<int>(cfg_.occ.size());
  right_.resize(w);
  left_.resize(w);
  for (int x = cfg_.lo; x <= cfg_.hi(); ++x) refresh_site(x);
  draw_pending();
}

void FasepSimulator::check_edges() const {
  const auto& o = cfg_.occ;
  if (o.size() < 4 || o[0] != 1 || o[1] != 1 || o.back() != 0)
    throw WindowTooSmall("FASEP active region reached the window edge");
}

void FasepSimulator::refresh_site(int x) {
  if (x <= cfg_.lo || x >= cfg_.hi()) return;
  const std::size_t i = static_cast<std::size_t>(x - cfg_.lo);
  const int a = cfg_.occ[i - 1], b = cfg_.occ[i], c = cfg_.occ[i + 1];
  right_.set(static_cast<int>(i), a == 1 && b == 1 && c == 0);
  left_.set(static_cast<int>(i), c == 1 && b == 1 && a == 0);
}

void FasepSimulator::draw_pending() {
  const double total = total_rate();
  pending_ = total > 0 ? time_ + rng_->exponential(total) : std::numeric_limits<double>::infinity();
}

bool FasepSimulator::step(double t_stop) {
  if (pending_ > t_stop) {
    time_ = std::max(time_, t_stop);
    return false;
  }
  time_ = pending_;
  pick(rng_->uniform(), p_, q_, right_, left_, [&](bool is_right, int i) {
    const int x = cfg_.lo + i;
    const std::size_t k = static_cast<std::size_t>(i);
    cfg_.occ[k] = 0;
    if (is_right) {
      cfg_.occ[k + 1] = 1;
      last_ = {time_, TransitionKind::fasep_right, x};
      for (int y = x - 1; y <= x + 2; ++y) refresh_site(y);
    } else {
      cfg_.occ[k - 1] = 1;
      last_ = {time_, TransitionKind::fasep_left, x};
      for (int y = x - 2; y <= x + 1; ++y) refresh_site(y);
    }
  });
  check_edges();
  draw_pending();
  return true;
}

namespace {

template <class Sim>
void drive(Sim& sim, Trajectory& traj, const RecordSpec& record, double t_end,
           const std::function<LatticeConfig()>& snapshot) {
  const bool log = record.mode == RecordMode::full_log;
  auto advance = [&](double stop) {
    while (sim.step(stop))
      if (log) traj.events.push_back(sim.last_event());
  };
  if (record.mode == RecordMode::snapshots) {
    for (double tau : record.snapshot_times) {
      if (tau > t_end) break;
      advance(tau);
      traj.snapshots.emplace_back(tau, snapshot());
    }
  }
  advance(t_end);
}

}  // namespace

Trajectory simulate_ctmc(const LatticeConfig& init, const WeakAsymParams& params, double t_end, std::uint64_t seed,
                         std::uint64_t stream, const RecordSpec& record) {
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("simulate_ctmc: invalid t_end");
  Trajectory traj;
  traj.initial = init;
  traj.t_end = t_end;
  traj.seed = seed;
  traj.stream = stream;
  traj.params = params;
  Rng rng(seed, stream);
  if (const auto* h = std::get_if<HalfLineConfig>(&init)) {
    HalfLineSimulator sim(*h, params, rng);
    drive(sim, traj, record, t_end, [&] { return LatticeConfig(sim.state()); });
    traj.terminal = sim.state();
  } else {
    FasepSimulator sim(std::get<FasepConfig>(init), params, rng);
    drive(sim, traj, record, t_end, [&] { return LatticeConfig(sim.state()); });
    traj.terminal = sim.state();
  }
  return traj;
}

LatticeConfig replay(const LatticeConfig& initial, const std::vector<Event>& events) {
  LatticeConfig state = initial;
  for (const auto& e : events) {
    const Transition tr{e.kind, e.site, 0.0};
    std::visit([&](auto& s) { s = apply_transition(s, tr); }, state);
  }
  return state;
}

double generator_at(const FasepConfig& s, const std::function<double(const FasepConfig&)>& f,
                    const WeakAsymParams& params) {
  const double fs = f(s);
  double acc = 0.0;
  for (const auto& tr : enabled_transitions_fasep(s, params)) acc += tr.rate * (f(apply_transition(s, tr)) - fs);
  return acc;
}

double generator_at(const HalfLineConfig& s, const std::function<double(const HalfLineConfig&)>& f,
                    const WeakAsymParams& params) {
  const double fs = f(s);
  double acc = 0.0;
  for (const auto& tr : enabled_transitions_asep(s, params)) acc += tr.rate * (f(apply_transition(s, tr)) - fs);
  return acc;
}

std::vector<double> generator_apply_exact(const JumpTable& jumps, const std::vector<double>& f) {
  if (jumps.size() != f.size()) throw std::invalid_argument("generator_apply_exact: size mismatch");
  std::vector<double> out(f.size(), 0.0);
  for (std::size_t i = 0; i < jumps.size(); ++i)
    for (const auto& [rate, j] : jumps[i]) out[i] += rate * (f[j] - f[i]);
  return out;
}

namespace {

template <class Cfg>
JumpTable build_jumps(const std::vector<Cfg>& states, const WeakAsymParams& params) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < states.size(); ++i) index.emplace(to_literal(states[i]), i);
  JumpTable jumps(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::vector<Transition> trs;
    if constexpr (std::is_same_v<Cfg, FasepConfig>) trs = enabled_transitions_fasep(states[i], params);
    else trs = enabled_transitions_asep(states[i], params);
    for (const auto& tr : trs) {
      std::string key;
      try {
        key = to_literal(apply_transition(states[i], tr));
      } catch (const std::runtime_error&) {
        throw StateSpaceNotClosed("successor leaves the stored range from " + to_literal(states[i]));
      }
      auto it = index.find(key);
      if (it == index.end()) throw StateSpaceNotClosed("successor " + key + " not in state space");
      jumps[i].emplace_back(tr.rate, it->second);
    }
  }
  return jumps;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

}  // namespace

JumpTable jump_table(const std::vector<FasepConfig>& states, const WeakAsymParams& params) {
  return build_jumps(states, params);
}

JumpTable jump_table(const std::vector<HalfLineConfig>& states, const WeakAsymParams& params) {
  return build_jumps(states, params);
}

void write_log_binary(std::ostream& os, const std::vector<Event>& events) {
  for (const auto& e : events) {
    std::uint64_t bits;
    std::memcpy(&bits, &e.time, 8);
    put_u64(os, bits);
    os.put(static_cast<char>(e.kind));
    const auto s = static_cast<std::uint32_t>(e.site);
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((s >> (8 * i)) & 0xffu));
  }
}

std::vector<Event> read_log_binary(std::istream& is) {
  std::vector<Event> out;
  unsigned char rec[13];
  while (is.read(reinterpret_cast<char*>(rec), 13)) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(rec[i]) << (8 * i);
    Event e;
    std::memcpy(&e.time, &bits, 8);
    if (rec[8] > 4) throw std::runtime_error("read_log_binary: bad transition code");
    e.kind = static_cast<TransitionKind>(rec[8]);
    std::uint32_t s = 0;
    for (int i = 0; i < 4; ++i) s |= static_cast<std::uint32_t>(rec[9 + i]) << (8 * i);
    e.site = static_cast<std::int32_t>(s);
    out.push_back(e);
  }
  if (is.gcount() != 0) throw std::runtime_error("read_log_binary: truncated record");
  return out;
}

void write_log_csv(std::ostream& os, const std::vector<Event>& events) {
  os << "time,code,site\n";
  os.precision(17);
  for (const auto& e : events) os << e.time << ',' << static_cast<int>(e.kind) << ',' << e.site << '\n';
}

}  // namespace fasep
