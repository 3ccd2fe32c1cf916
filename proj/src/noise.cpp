#include "sbd/noise.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

namespace sbd {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t derive_key(std::uint64_t seed, StreamTag tag, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t base = mix64(seed ^ (kGolden * static_cast<std::uint64_t>(tag)));
  return mix64(mix64(base + a) ^ mix64(b + kGolden));
}

double CounterRng::exponential() { return -std::log(uniform()); }

std::uint64_t CounterRng::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(*this);
}

std::int64_t slab_index(double t, double slab_length) {
  return static_cast<std::int64_t>(std::floor(t / slab_length));
}

Point uniform_point(const SpaceSpec& space, CounterRng& rng) {
  std::array<double, kMaxDim> c{};
  for (int k = 0; k < space.d; ++k) {
    const double len = space.lengths[static_cast<std::size_t>(k)];
    double v = rng.uniform() * len;
    if (v >= len) v = std::nextafter(len, 0.0);
    c[static_cast<std::size_t>(k)] = v;
  }
  return Point(std::span<const double>(c.data(), static_cast<std::size_t>(space.d)));
}

NoiseStream::NoiseStream(std::uint64_t master_seed, SpaceSpec space, EnvelopeFn envelope,
                         double envelope_max, double slab_length)
    : seed_(master_seed),
      space_(std::move(space)),
      envelope_(std::move(envelope)),
      envelope_max_(envelope_max),
      slab_length_(slab_length) {
  space_.validate();
  if (!(slab_length_ > 0.0) || !std::isfinite(slab_length_)) {
    throw InvalidInput("slab_length must be positive and finite");
  }
  if (!(envelope_max_ >= 0.0) || !std::isfinite(envelope_max_)) {
    throw InvalidInput("envelope bound must be nonnegative and finite");
  }
}

NoiseStream NoiseStream::for_model(std::uint64_t master_seed, const RateModel& model,
                                   const SpaceSpec& space, double slab_length) {
  model.validate(space);
  return NoiseStream(
      master_seed, space, [model, space](const Point& x) { return envelope(model, space, x); },
      envelope_bound(model, space), slab_length);
}

std::vector<NoisePoint> NoiseStream::slab(std::int64_t k) const {
  std::vector<NoisePoint> out;
  const double mean = envelope_total() * slab_length_;
  if (!(mean > 0.0)) return out;
  CounterRng rng(derive_key(seed_, StreamTag::Slab, static_cast<std::uint64_t>(k)));
  const std::uint64_t count = rng.poisson(mean);
  const double t0 = static_cast<double>(k) * slab_length_;
  const double t1 = static_cast<double>(k + 1) * slab_length_;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NoisePoint p;
    p.slab = k;
    p.draw = static_cast<std::uint32_t>(i);
    p.s = t0 + rng.uniform() * slab_length_;
    if (p.s >= t1) p.s = std::nextafter(t1, t0);
    p.x = uniform_point(space_, rng);
    p.u = rng.uniform() * envelope_max_;
    p.r = rng.exponential();
    if (p.u <= envelope_(p.x)) out.push_back(p);
  }
  std::sort(out.begin(), out.end(), [](const NoisePoint& a, const NoisePoint& b) {
    return a.s < b.s || (a.s == b.s && a.draw < b.draw);
  });
  return out;
}

TimedConfiguration NoiseStream::dominating_tail(double anchor, double death_rate) const {
  if (!(death_rate > 0.0)) throw InvalidInput("death rate must be positive");
  TimedConfiguration out;
  CounterRng rng(derive_key(seed_, StreamTag::DominatingTail, std::bit_cast<std::uint64_t>(anchor)));
  const std::uint64_t count = rng.poisson(envelope_total() / death_rate);
  PointId id = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const Point x = uniform_point(space_, rng);
    const double u = rng.uniform() * envelope_max_;
    const double clock = rng.exponential();
    if (u <= envelope_(x)) out.insert({id++, x, clock, -anchor});
  }
  return out;
}

std::uint64_t slab_hash(const std::vector<NoisePoint>& slab) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : slab) {
    feed(&p.s, sizeof p.s);
    feed(&p.r, sizeof p.r);
    feed(&p.u, sizeof p.u);
    feed(&p.draw, sizeof p.draw);
    for (double c : p.x.coords()) feed(&c, sizeof c);
  }
  return h;
}

TimedConfiguration initial_clocks(const Configuration& eta0, std::uint64_t seed) {
  TimedConfiguration out;
  CounterRng rng(derive_key(seed, StreamTag::InitialClocks, 0));
  for (const auto& e : eta0) out.insert({e.id, e.point, rng.exponential(), 0.0});
  return out;
}

Configuration poisson_configuration(const SpaceSpec& space, const IntensityFn& intensity,
                                    double bound, std::uint64_t seed) {
  space.validate();
  Configuration out;
  CounterRng rng(derive_key(seed, StreamTag::PoissonConfiguration, 0));
  const std::uint64_t count = rng.poisson(bound * space.beta_total());
  for (std::uint64_t i = 0; i < count; ++i) {
    const Point x = uniform_point(space, rng);
    if (rng.uniform() * bound <= intensity(x)) out.add(x);
  }
  return out;
}

Configuration poisson_configuration(const SpaceSpec& space, double intensity, std::uint64_t seed) {
  return poisson_configuration(space, [intensity](const Point&) { return intensity; }, intensity, seed);
}

}  // namespace sbd
