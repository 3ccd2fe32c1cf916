#pragma once

// Dominated coupling from the past. On [−T, 0] a lower process started empty
// and an upper process started from the dominating process bound every
// solution; the pair is found by monotone iteration sweeps and a common value
// at time 0 is an exact draw from the stationary law.

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbd/core.hpp"
#include "sbd/engine.hpp"
#include "sbd/models.hpp"
#include "sbd/noise.hpp"

namespace sbd {

class ConvergenceFailure : public std::runtime_error {
 public:
  ConvergenceFailure(const std::string& what, std::vector<std::string> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  /// One line per sweep: accepted counts of the lower and upper iterates.
  const std::vector<std::string>& trace() const noexcept { return trace_; }

 private:
  std::vector<std::string> trace_;
};

struct SandwichOptions {
  int max_sweeps = 64;
  /// Time −anchor where the dominating process is drawn from its stationary
  /// law. Values below T are raised to T. Keeping one anchor across a doubling
  /// schedule makes the runs for different T views of the same process.
  double anchor = 0.0;
};

struct SandwichState {
  Configuration lower;
  Configuration upper;
  double T = 0.0;
  bool coalesced = false;
  int sweeps = 0;
  std::size_t candidates = 0;
  std::map<std::int64_t, std::uint64_t> slab_hashes;  // every slab read, by index
};

/// The converged pair as full paths on [−T, 0], for inspection.
struct SandwichPaths {
  Trajectory lower;
  Trajectory upper;
  TimedConfiguration upper_initial;  // dominating process at −T
  int sweeps = 0;
};

/// Dominating process at −T: the stationary tail drawn at −anchor, run with
/// every noise atom accepted up to −T. Clocks are residual at −T.
TimedConfiguration dominating_state(const NoiseStream& stream, double T, double anchor,
                                    double death_rate);

SandwichState sandwich_run(const RateModel& model, const SpaceSpec& space, double T,
                           const NoiseStream& stream, const SandwichOptions& options = {});

SandwichPaths sandwich_paths(const RateModel& model, const SpaceSpec& space, double T,
                             const NoiseStream& stream, const SandwichOptions& options = {});

/// The same pair obtained by a single forward pass in which each candidate
/// reads the current lower and upper states. Agrees with the sweep limit.
SandwichPaths sandwich_forward(const RateModel& model, const SpaceSpec& space, double T,
                               const NoiseStream& stream, const SandwichOptions& options = {});

enum class SampleStatus { Coalesced, NotCoalesced };

struct SandwichRecord {
  double T = 0.0;
  bool coalesced = false;
  int sweeps = 0;
  std::map<std::int64_t, std::uint64_t> slab_hashes;
};

struct PerfectSample {
  Configuration configuration;
  double T_used = 0.0;
  SampleStatus status = SampleStatus::NotCoalesced;
  std::vector<SandwichRecord> runs;
};

/// Runs the sandwich for T = T0, 2T0, 4T0, … (the last step clipped to T_max)
/// on one noise stream and one dominating process anchored at T_max.
PerfectSample perfect_sample(const RateModel& model, const SpaceSpec& space,
                             std::uint64_t master_seed, double T0, double T_max,
                             int max_sweeps = 64, double slab_length = 1.0);

/// Forward run on [−horizon, 0] from the empty configuration.
Configuration minimal_stationary_sample(const RateModel& model, const SpaceSpec& space,
                                        std::uint64_t seed, double horizon);

/// Forward run on [−horizon, 0] from the dominating process at −horizon. A
/// common `anchor` ≥ horizon across calls makes the result pathwise
/// nonincreasing in horizon. An anchor below horizon is raised to horizon.
Configuration maximal_stationary_sample(const RateModel& model, const SpaceSpec& space,
                                        std::uint64_t seed, double horizon, double anchor = 0.0);

struct DecayCurve {
  std::vector<double> times;
  std::vector<double> distance;  // sup over the x-grid of the replicate mean
  double fitted_rate = 0.0;      // least-squares slope of log(distance)
  bool raw_mass = false;         // kernel is identically zero: plain |η¹ − η²|
};

/// Coupled runs from η¹ ⊆ η² on common noise. Distance at t is
/// sup_x c(x)·E∫a(x, y)|η¹_t − η²_t|(dy), estimated over `replicates` runs.
DecayCurve coupling_decay_curve(const RateModel& model, const SpaceSpec& space,
                                const Configuration& eta1, const Configuration& eta2,
                                double horizon, int replicates, std::uint64_t seed,
                                int time_points = 51);

}  // namespace sbd
