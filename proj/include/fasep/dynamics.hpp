#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fasep/config.hpp"
#include "fasep/rng.hpp"

namespace fasep {

struct WeakAsymParams {
  double epsilon = 0.0;
  double p = 0.5;
  double q = 0.5;
  double lambda = 0.0;
  double nu = 0.0;
  double mu = 1.0;
  double diffusion = 0.5;
};

// p = e^eps / 2, q = e^-eps / 2 and the Hopf-Cole scalars derived from them.
WeakAsymParams weak_asym_params(double epsilon);
// Same derived scalars for arbitrary rates 0 < q <= p.
WeakAsymParams params_from_rates(double p, double q);

struct TruncationBreach : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateSpaceNotClosed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TransitionKind : std::uint8_t {
  fasep_right = 0,  // particle at site -> site + 1
  fasep_left = 1,   // particle at site -> site - 1
  asep_right = 2,   // particle at site -> site + 1
  asep_left = 3,    // particle at site + 1 -> site
  asep_inject = 4,  // reservoir -> site 1 (site field is 1)
};

struct Transition {
  TransitionKind kind = TransitionKind::asep_inject;
  int site = 0;
  double rate = 0.0;
  bool operator==(const Transition&) const = default;
};

std::vector<Transition> enabled_transitions_fasep(const FasepConfig& cfg, const WeakAsymParams& params);
std::vector<Transition> enabled_transitions_asep(const HalfLineConfig& cfg, const WeakAsymParams& params);

// Throw WindowTooSmall / TruncationBreach when the move leaves the stored range.
FasepConfig apply_transition(const FasepConfig& cfg, const Transition& tr);
HalfLineConfig apply_transition(const HalfLineConfig& cfg, const Transition& tr);

struct Event {
  double time = 0.0;
  TransitionKind kind = TransitionKind::asep_inject;
  int site = 0;
  bool operator==(const Event&) const = default;
};

enum class RecordMode { terminal, snapshots, full_log };

struct RecordSpec {
  RecordMode mode = RecordMode::terminal;
  std::vector<double> snapshot_times;  // ascending
};

struct Trajectory {
  LatticeConfig initial;
  LatticeConfig terminal;
  double t_end = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  WeakAsymParams params;
  std::vector<Event> events;
  std::vector<std::pair<double, LatticeConfig>> snapshots;
};

// Truncation margin beyond the initially occupied region for a run of length t.
int certified_margin(double t_end);

// Swap-with-last index set over integer ids in [0, capacity).
class IndexedSet {
 public:
  explicit IndexedSet(int capacity = 0) : pos_(static_cast<std::size_t>(capacity), -1) {}
  void resize(int capacity) {
    pos_.assign(static_cast<std::size_t>(capacity), -1);
    items_.clear();
  }
  bool contains(int id) const { return pos_[static_cast<std::size_t>(id)] >= 0; }
  void insert(int id);
  void erase(int id);
  void set(int id, bool on) { on ? insert(id) : erase(id); }
  int size() const { return static_cast<int>(items_.size()); }
  int at(int i) const { return items_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<int> items_;
  std::vector<int> pos_;
};

// Exact Gillespie sampler for the half-line ASEP with injection. Active bonds
// are kept in two index sets (rate p and rate q) updated locally per event.
class HalfLineSimulator {
 public:
  HalfLineSimulator(HalfLineConfig init, const WeakAsymParams& params, Rng& rng, int safety_margin = 0);

  // Performs the next event if it occurs at or before t_stop; otherwise the
  // clock advances to t_stop and the pending event is kept.
  bool step(double t_stop);
  void run_until(double t_stop) {
    while (step(t_stop)) {
    }
  }

  double time() const { return time_; }
  const HalfLineConfig& state() const { return cfg_; }
  const Event& last_event() const { return last_; }
  double total_rate() const { return p_ * right_.size() + q_ * left_.size(); }
  double next_event_time() const { return pending_; }

 private:
  void refresh_bond(int b);
  void draw_pending();

  HalfLineConfig cfg_;
  double p_, q_;
  Rng* rng_;
  int safety_margin_;
  double time_ = 0.0;
  double pending_ = 0.0;
  IndexedSet right_;  // bond 0 = injection, bond b >= 1 = (b, b+1)
  IndexedSet left_;
  Event last_;
};

// Exact Gillespie sampler for the FASEP on a pre-sized window. Throws
// WindowTooSmall as soon as the active region touches the window edge.
class FasepSimulator {
 public:
  FasepSimulator(FasepConfig init, const WeakAsymParams& params, Rng& rng);

  bool step(double t_stop);
  void run_until(double t_stop) {
    while (step(t_stop)) {
    }
  }

  double time() const { return time_; }
  const FasepConfig& state() const { return cfg_; }
  const Event& last_event() const { return last_; }
  double total_rate() const { return p_ * right_.size() + q_ * left_.size(); }

 private:
  void refresh_site(int x);
  void check_edges() const;
  void draw_pending();

  FasepConfig cfg_;
  double p_, q_;
  Rng* rng_;
  double time_ = 0.0;
  double pending_ = 0.0;
  IndexedSet right_;  // ids are x - lo
  IndexedSet left_;
  Event last_;
};

Trajectory simulate_ctmc(const LatticeConfig& init, const WeakAsymParams& params, double t_end,
                         std::uint64_t seed, std::uint64_t stream = 0, const RecordSpec& record = {});

// Re-applies a logged event sequence to the initial state.
LatticeConfig replay(const LatticeConfig& initial, const std::vector<Event>& events);

// (Lf)(s) = sum over enabled transitions of rate * (f(s') - f(s)).
double generator_at(const FasepConfig& s, const std::function<double(const FasepConfig&)>& f,
                    const WeakAsymParams& params);
double generator_at(const HalfLineConfig& s, const std::function<double(const HalfLineConfig&)>& f,
                    const WeakAsymParams& params);

// Generator action on a finite state space given as explicit jump lists.
// jumps[i] holds (rate, j) pairs; returns (Lf)(i) for every state.
using JumpTable = std::vector<std::vector<std::pair<double, std::size_t>>>;
std::vector<double> generator_apply_exact(const JumpTable& jumps, const std::vector<double>& f);
// Builds the jump table; throws StateSpaceNotClosed if a successor is missing.
JumpTable jump_table(const std::vector<FasepConfig>& states, const WeakAsymParams& params);
JumpTable jump_table(const std::vector<HalfLineConfig>& states, const WeakAsymParams& params);

// Event logs: 13-byte little-endian records (f64 time, u8 code, i32 site).
void write_log_binary(std::ostream& os, const std::vector<Event>& events);
std::vector<Event> read_log_binary(std::istream& is);
void write_log_csv(std::ostream& os, const std::vector<Event>& events);

}  // namespace fasep
