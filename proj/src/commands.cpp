#include "sbd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sbd/analysis.hpp"
#include "sbd/cftp.hpp"
#include "sbd/engine.hpp"
#include "sbd/io.hpp"
#include "sbd/models.hpp"
#include "sbd/noise.hpp"

namespace sbd {
namespace {

using nlohmann::json;

void write_config(const RunConfig& config, const std::filesystem::path& out) {
  write_file(out / "config.json", to_json(config).dump(2) + "\n");
}

std::string rep_dir(std::size_t i) { return fmt::format("rep_{:04d}", i); }

const char* status_name(SampleStatus s) {
  return s == SampleStatus::Coalesced ? "coalesced" : "not_coalesced";
}

std::vector<PerfectSample> perfect_samples(const RunConfig& c, std::size_t n, std::uint64_t master) {
  const RateModel model = c.model();
  std::vector<PerfectSample> out(n);
  parallel_for(n, c.threads, [&](std::size_t i) {
    out[i] = perfect_sample(model, c.space, replicate_seed(master, i), c.cftp.T0, c.cftp.T_max,
                            c.cftp.max_sweeps, c.slab_length);
  });
  return out;
}

std::vector<Configuration> forward_samples(const RunConfig& c, std::size_t n, std::uint64_t master,
                                           double horizon) {
  const RateModel model = c.model();
  std::vector<Configuration> out(n);
  parallel_for(n, c.threads, [&](std::size_t i) {
    const std::uint64_t seed = replicate_seed(master, i);
    const NoiseStream stream = NoiseStream::for_model(seed, model, c.space, c.slab_length);
    const TimedConfiguration init = initial_clocks(initial_configuration(c, seed), seed);
    out[i] = simulate(model, c.space, init, horizon, stream).final.configuration();
  });
  return out;
}

int cmd_simulate(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const RateModel model = c.model();
  const auto n = static_cast<std::size_t>(c.replicates);
  std::vector<Trajectory> runs(n);
  std::vector<std::vector<NoisePoint>> noise(n);
  parallel_for(n, c.threads, [&](std::size_t i) {
    const std::uint64_t seed = replicate_seed(c.seed, i);
    const NoiseStream stream = NoiseStream::for_model(seed, model, c.space, c.slab_length);
    const TimedConfiguration init = initial_clocks(initial_configuration(c, seed), seed);
    runs[i] = simulate(model, c.space, init, c.simulate.horizon, stream);
    if (c.simulate.write_noise && c.simulate.horizon > 0.0) {
      for (std::int64_t k = 0; k <= slab_index(c.simulate.horizon, c.slab_length); ++k) {
        for (const NoisePoint& p : stream.slab(k)) {
          if (p.s < c.simulate.horizon) noise[i].push_back(p);
        }
      }
    }
  });

  std::string summary = "replicate,seed,births,deaths,final_count\n";
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& t = runs[i];
    const auto dir = out / rep_dir(i);
    write_file(dir / "events.csv", events_csv(t, c.space.d));
    for (std::size_t k = 0; k < c.simulate.snapshot_times.size(); ++k) {
      const double time = c.simulate.snapshot_times[k];
      write_file(dir / fmt::format("snapshot_{:03d}.json", k),
                 snapshot_json(time, snapshot(t, time).configuration()).dump() + "\n");
    }
    write_file(dir / "snapshot_final.json", snapshot_json(t.end_time(), t.final.configuration()).dump() + "\n");
    if (c.simulate.write_noise) write_file(dir / "noise.csv", noise_csv(noise[i], c.space.d));
    const auto births = std::count_if(t.events.begin(), t.events.end(),
                                      [](const Event& e) { return e.kind == EventKind::Birth; });
    summary += fmt::format("{},{},{},{},{}\n", i, replicate_seed(c.seed, i), births,
                           t.events.size() - static_cast<std::size_t>(births), t.final.size());
  }
  write_file(out / "summary.csv", summary);
  log << fmt::format("simulated {} replicate(s) to horizon {}\n", n, c.simulate.horizon);
  return kExitOk;
}

int cmd_perfect_sample(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const auto n = static_cast<std::size_t>(c.replicates);
  const auto samples = perfect_samples(c, n, c.seed);
  std::string csv = "replicate,seed,T_used,status,count\n";
  std::size_t coalesced = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const PerfectSample& s = samples[i];
    json snap = snapshot_json(0.0, s.configuration);
    snap["status"] = status_name(s.status);
    snap["T_used"] = s.T_used;
    write_file(out / fmt::format("sample_{:04d}.json", i), snap.dump() + "\n");
    csv += fmt::format("{},{},{},{},{}\n", i, replicate_seed(c.seed, i), s.T_used, status_name(s.status),
                       s.configuration.size());
    coalesced += s.status == SampleStatus::Coalesced ? 1 : 0;
  }
  write_file(out / "coalescence.csv", csv);
  log << fmt::format("{} of {} sample(s) coalesced\n", coalesced, n);
  return kExitOk;
}

int cmd_oracle(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const RateModel model = c.model();
  const OracleModel oracle = oracle_from_model(model, c.space, c.oracle.cells, c.oracle.caps);
  const OracleSolution sol = oracle_stationary(oracle);
  write_file(out / "stationary.csv", table_csv(sol.table));
  json report = {{"states", oracle.state_count()},
                 {"truncation_defect", sol.truncation_defect},
                 {"balance_residual", sol.balance_residual},
                 {"mean_count", sol.table.mean_total()}};
  if (model.has_energy()) {
    const DistributionTable gibbs = gibbs_table(oracle.masses, oracle.caps, oracle_energy(model, c.space, c.oracle.cells));
    write_file(out / "gibbs.csv", table_csv(gibbs));
    report["tv_stationary_gibbs"] = tv_distance(sol.table, gibbs);
    log << fmt::format("TV(stationary, gibbs) = {}\n", tv_distance(sol.table, gibbs));
  } else {
    report["tv_stationary_gibbs"] = nullptr;
  }
  write_file(out / "report.json", report.dump(2) + "\n");
  log << fmt::format("oracle: {} states, truncation defect {}, balance residual {}\n", oracle.state_count(),
                     sol.truncation_defect, sol.balance_residual);
  return kExitOk;
}

int cmd_stats(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const auto n = static_cast<std::size_t>(c.replicates);
  std::vector<Configuration> samples;
  std::size_t not_coalesced = 0;
  if (c.stats.source == SampleSource::Perfect) {
    for (auto& s : perfect_samples(c, n, c.seed)) {
      if (s.status == SampleStatus::Coalesced) {
        samples.push_back(std::move(s.configuration));
      } else {
        ++not_coalesced;
      }
    }
  } else {
    samples = forward_samples(c, n, c.seed, c.stats.horizon);
  }
  json summary = {{"samples", samples.size()}, {"not_coalesced", not_coalesced}};
  if (!samples.empty()) {
    write_file(out / "counts.csv", table_csv(empirical_count_table(samples)));
    std::vector<double> counts;
    for (const auto& s : samples) counts.push_back(static_cast<double>(s.size()));
    const Estimate m = mean_estimate(counts);
    summary["mean_count"] = m.value;
    summary["mean_count_se"] = m.std_error;
    if (c.space.periodic()) {
      const RipleyResult k = ripley_k(samples, c.space, c.stats.radii);
      std::string csv = "r,K\n";
      for (const auto& row : k.rows) csv += fmt::format("{},{}\n", row.r, k.defined() ? row.k : NAN);
      write_file(out / "ripley.csv", csv);
      summary["ripley_defined"] = k.defined();
      std::string blocks = "m,block_volume,variance,poisson_reference\n";
      for (const auto& row : block_average_diagnostic(samples, c.space, c.stats.block_counts)) {
        blocks += fmt::format("{},{},{},{}\n", row.m, row.block_volume, row.variance, row.poisson_reference);
      }
      write_file(out / "blocks.csv", blocks);
    }
  }
  write_file(out / "summary.json", summary.dump(2) + "\n");
  log << fmt::format("stats over {} sample(s)\n", samples.size());
  return kExitOk;
}

int cmd_contraction(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const ContractionEstimate m = contraction_constant(c.model(), c.space);
  json report = {{"value", m.value},
                 {"error", m.error},
                 {"resolution", m.resolution},
                 {"translation_shortcut", m.translation_shortcut},
                 {"uniqueness_applies", m.uniqueness_applies()}};
  write_file(out / "contraction.json", report.dump(2) + "\n");
  log << fmt::format("M = {:.9g} ± {:.3g}\n", m.value, m.error);
  return kExitOk;
}

// ---- validate ----

struct Check {
  std::string name;
  bool passed = false;
  json detail;
};

bool funnel_holds(const Trajectory& lower, const Trajectory& mid, const Trajectory& upper) {
  std::set<double> times{lower.start_time, lower.end_time()};
  for (const auto* t : {&lower, &mid, &upper}) {
    for (const Event& e : t->events) times.insert(e.time);
  }
  for (double t : times) {
    const Configuration lo = snapshot(lower, t).configuration();
    const Configuration m = snapshot(mid, t).configuration();
    const Configuration up = snapshot(upper, t).configuration();
    if (!is_submultiset(lo, m) || !is_submultiset(m, up)) return false;
  }
  return true;
}

std::vector<Check> validation_suite(const RunConfig& c) {
  const RateModel model = c.model();
  const SpaceSpec& space = c.space;
  std::vector<Check> checks;
  const std::uint64_t base = derive_key(c.seed, StreamTag::Test, 0x76616c);

  {
    const RunConfig again = config_from_json(to_json(c));
    checks.push_back({"config_round_trip", to_json(again) == to_json(c), json::object()});
  }
  {
    const ContractionEstimate m = contraction_constant(model, space);
    checks.push_back({"contraction_constant", std::isfinite(m.value) && m.value >= 0.0,
                      {{"value", m.value}, {"error", m.error}, {"uniqueness_applies", m.uniqueness_applies()}}});
  }
  if (model.has_energy()) {
    CounterRng rng(derive_key(base, StreamTag::Test, 1));
    double worst = 0.0;
    bool ok = true;
    for (int i = 0; i < 1000; ++i) {
      Configuration eta;
      const auto size = static_cast<int>(rng.uniform() * 8.0);
      for (int j = 0; j < size; ++j) eta.add(uniform_point(space, rng));
      const BalanceCheck b = detailed_balance_check(model, space, uniform_point(space, rng), eta);
      worst = std::max(worst, std::abs(b.residual) - b.tolerance);
      ok = ok && std::abs(b.residual) <= b.tolerance;
    }
    checks.push_back({"detailed_balance", ok, {{"cases", 1000}, {"worst_excess", worst}}});
  }
  {
    bool same = true;
    bool funnel = true;
    int sweeps = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      const NoiseStream stream = NoiseStream::for_model(derive_key(base, StreamTag::Test, 10 + s), model, space, c.slab_length);
      const double T = 4.0 * c.cftp.T0;
      const SandwichPaths it = sandwich_paths(model, space, T, stream, {c.cftp.max_sweeps, T});
      const SandwichPaths fw = sandwich_forward(model, space, T, stream, {c.cftp.max_sweeps, T});
      sweeps = std::max(sweeps, it.sweeps);
      same = same && it.lower.final.configuration() == fw.lower.final.configuration() &&
             it.upper.final.configuration() == fw.upper.final.configuration();

      CounterRng pick(derive_key(base, StreamTag::Test, 20 + s));
      for (int trial = 0; trial < 5; ++trial) {
        TimedConfiguration mid;
        for (const auto& e : it.upper_initial) {
          if (pick.uniform() < 0.5) mid.insert(e);
        }
        const Trajectory run = simulate(model, space, mid, T, stream, -T);
        funnel = funnel && funnel_holds(it.lower, run, it.upper);
      }
    }
    checks.push_back({"sandwich_fixed_point", same, {{"runs", 5}, {"max_sweeps_used", sweeps}}});
    checks.push_back({"sandwich_funnel", funnel, {{"runs", 25}}});
  }
  {
    bool consistent = true;
    std::size_t compared = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const PerfectSample ps = perfect_sample(model, space, derive_key(base, StreamTag::Test, 40 + s), c.cftp.T0,
                                              std::max(c.cftp.T_max, 8.0 * c.cftp.T0), c.cftp.max_sweeps, c.slab_length);
      std::map<std::int64_t, std::uint64_t> seen;
      for (const auto& run : ps.runs) {
        for (const auto& [k, h] : run.slab_hashes) {
          const auto [it, inserted] = seen.emplace(k, h);
          if (!inserted) {
            ++compared;
            consistent = consistent && it->second == h;
          }
        }
      }
    }
    checks.push_back({"noise_reuse", consistent, {{"slab_comparisons", compared}}});
  }
  if (model.nondecreasing()) {
    bool ok = true;
    std::size_t events = 0;
    try {
      const std::uint64_t seed = derive_key(base, StreamTag::Test, 60);
      const NoiseStream stream = NoiseStream::for_model(seed, model, space, c.slab_length);
      const TimedConfiguration upper = dominating_state(stream, 0.0, 0.0, model.death_constant());
      const CoupledTrajectories run = coupled_simulate(model, space, TimedConfiguration{}, upper, c.validate.horizon, stream);
      events = run.lower.events.size() + run.upper.events.size();
    } catch (const ContainmentViolation&) {
      ok = false;
    }
    checks.push_back({"attractive_containment", ok, {{"events", events}}});
  }
  {
    const std::uint64_t seed = derive_key(base, StreamTag::Test, 70);
    const NoiseStream stream = NoiseStream::for_model(seed, model, space, c.slab_length);
    const double rate = std::max(envelope_bound(model, space) * space.beta_total(), 1e-9);
    const double horizon = std::min(std::max(2000.0 / rate, 50.0), 1e5);
    const Trajectory t = simulate(model, space, TimedConfiguration{}, horizon, stream);
    const KsResult ks = lifetime_ks_test(t, horizon - 40.0 / model.death_constant());
    const bool ok = ks.status == TestStatus::Inconclusive || ks.p_value > 0.01;
    checks.push_back({"lifetime_ks", ok,
                      {{"n", ks.n}, {"statistic", ks.statistic}, {"p_value", ks.p_value},
                       {"conclusive", ks.status == TestStatus::Conclusive}}});
  }
  {
    const auto n = static_cast<std::size_t>(c.validate.replicates);
    const auto perfect = perfect_samples(c, n, derive_key(base, StreamTag::Test, 80));
    std::vector<int> a;
    std::vector<Configuration> coalesced;
    for (const auto& s : perfect) {
      if (s.status == SampleStatus::Coalesced) {
        a.push_back(static_cast<int>(s.configuration.size()));
        coalesced.push_back(s.configuration);
      }
    }
    RunConfig fc = c;
    fc.simulate.initial = InitialSpec{};
    const auto forward = forward_samples(fc, n, derive_key(base, StreamTag::Test, 81), c.validate.horizon);
    std::vector<int> b;
    for (const auto& s : forward) b.push_back(static_cast<int>(s.size()));
    if (a.empty()) {
      checks.push_back({"perfect_vs_forward", false, {{"coalesced", 0}}});
    } else {
      const ChiSquareResult chi = chi_square_two_sample(a, b);
      checks.push_back({"perfect_vs_forward", chi.p_value > 0.01,
                        {{"coalesced", a.size()}, {"statistic", chi.statistic}, {"dof", chi.dof}, {"p_value", chi.p_value}}});

      std::vector<double> center(static_cast<std::size_t>(space.d));
      for (int i = 0; i < space.d; ++i) center[static_cast<std::size_t>(i)] = 0.5 * space.lengths[static_cast<std::size_t>(i)];
      const double width = 0.1 * space.min_length();
      const TestFunction g = [&](const Point& x) {
        const Displacement dx = space.displacement(Point(std::span<const double>(center)), x);
        double r2 = 0.0;
        for (int i = 0; i < space.d; ++i) r2 += dx[static_cast<std::size_t>(i)] * dx[static_cast<std::size_t>(i)];
        return 0.7 * std::exp(-r2 / (width * width));
      };
      const Estimate res = stationarity_residual(model, space, coalesced, g);
      const bool ok = std::abs(res.value) <= 4.0 * res.std_error + 1e-12;
      checks.push_back({"stationarity_residual", ok,
                        {{"estimate", res.value}, {"std_error", res.std_error}, {"threshold_se", 4.0}}});
    }
  }
  {
    Box region;
    for (int i = 0; i < space.d; ++i) {
      region.lo.push_back(0.0);
      region.hi.push_back(0.5 * space.lengths[static_cast<std::size_t>(i)]);
    }
    bool ok = true;
    json detail = json::array();
    for (auto h : {MeckeFunctional::Indicator, MeckeFunctional::EmptyIndicator}) {
      const MeckeResult m = mecke_test(space, 1.0, h, region, 4000, derive_key(base, StreamTag::Test, 90));
      ok = ok && m.discrepancy <= 3.0;
      detail.push_back({{"lhs", m.lhs}, {"rhs", m.rhs}, {"std_error", m.std_error}});
    }
    checks.push_back({"mecke_identity", ok, detail});
  }
  return checks;
}

int cmd_validate(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const auto checks = validation_suite(c);
  json report = {{"checks", json::array()}};
  bool all = true;
  for (const auto& ch : checks) {
    report["checks"].push_back({{"name", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
    log << fmt::format("{:<24} {}\n", ch.name, ch.passed ? "PASS" : "FAIL");
    all = all && ch.passed;
  }
  report["passed"] = all;
  write_file(out / "report.json", report.dump(2) + "\n");
  return all ? kExitOk : kExitValidation;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "perfect-sample", "oracle", "validate", "stats", "contraction"};
  return names;
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t i) {
  return derive_key(master, StreamTag::Replicate, static_cast<std::uint64_t>(i));
}

Configuration initial_configuration(const RunConfig& c, std::uint64_t seed) {
  switch (c.simulate.initial.kind) {
    case InitialKind::Empty:
      return {};
    case InitialKind::Poisson:
      return poisson_configuration(c.space, c.simulate.initial.intensity, seed);
    case InitialKind::Points: {
      Configuration eta;
      for (const auto& p : c.simulate.initial.points) eta.add(Point(std::span<const double>(p)));
      return eta;
    }
  }
  return {};
}

int run_command(const std::string& command, const RunConfig& config, const std::filesystem::path& out,
                std::ostream& log) {
  using Fn = int (*)(const RunConfig&, const std::filesystem::path&, std::ostream&);
  static const std::map<std::string, Fn> table{{"simulate", cmd_simulate},     {"perfect-sample", cmd_perfect_sample},
                                               {"oracle", cmd_oracle},         {"validate", cmd_validate},
                                               {"stats", cmd_stats},           {"contraction", cmd_contraction}};
  const auto it = table.find(command);
  if (it == table.end()) throw ConfigError("command", "unknown command '" + command + "'");
  validate_config(config);
  std::filesystem::create_directories(out);
  write_config(config, out);
  return it->second(config, out, log);
}

}  // namespace sbd
