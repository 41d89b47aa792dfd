#include "ipg/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipg {

namespace {

// SplitMix64 finalizer.
constexpr std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kObservationStream = 0x6f62736eULL;

}  // namespace

double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                    std::uint64_t index, double lo, double hi) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ stream);
  h = mix(h ^ counter);
  h = mix(h ^ index);
  // 53 random bits, centred in their cell so the value is strictly inside (0, 1).
  const double u = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double ObservationNoiseReport::max_realized() const {
  return realized_l1.empty() ? 0.0 : *std::max_element(realized_l1.begin(), realized_l1.end());
}

double ObservationNoiseReport::max_expected() const {
  return expected_l1.empty() ? 0.0 : *std::max_element(expected_l1.begin(), expected_l1.end());
}

ObservationNoiseReport draw_observation_noise(const ObservationNoiseSpec& spec,
                                              std::span<AgentShard> shards) {
  if (spec.amplitude < 0.0) {
    throw std::invalid_argument("observation noise amplitude must be non-negative");
  }
  ObservationNoiseReport report;
  for (auto& shard : shards) {
    Vector w(shard.rows());
    for (Eigen::Index r = 0; r < shard.rows(); ++r) {
      const auto global_row = static_cast<std::uint64_t>(shard.first_row + r);
      w(r) = spec.amplitude == 0.0
                 ? 0.0
                 : uniform_draw(spec.seed, kObservationStream, 0, global_row, -spec.amplitude,
                                spec.amplitude);
    }
    shard.b_observed = shard.b + w;
    report.realized_l1.push_back(w.lpNorm<1>());
    report.expected_l1.push_back(static_cast<double>(shard.rows()) * spec.amplitude / 2.0);
  }
  return report;
}

ProcessNoiseSpec ProcessNoiseSpec::uniform(double lo, double hi, std::uint64_t seed) {
  if (hi < lo) throw std::invalid_argument("uniform process noise needs lo <= hi");
  ProcessNoiseSpec s;
  s.kind = ProcessNoiseKind::uniform_additive;
  s.lo = lo;
  s.hi = hi;
  s.seed = seed;
  return s;
}

ProcessNoiseSpec ProcessNoiseSpec::round_to(int places) {
  if (places < 0 || places > 15) throw std::invalid_argument("decimal places must be in [0, 15]");
  ProcessNoiseSpec s;
  s.kind = ProcessNoiseKind::round_off;
  s.decimal_places = places;
  return s;
}

double ProcessNoiseSpec::expected_l1(Eigen::Index dim) const {
  const auto n = static_cast<double>(dim);
  switch (kind) {
    case ProcessNoiseKind::none:
      return 0.0;
    case ProcessNoiseKind::uniform_additive: {
      // E|U| for U ~ uniform(lo, hi).
      if (hi == lo) return n * std::abs(lo);
      if (lo >= 0.0 || hi <= 0.0) return n * std::abs(lo + hi) / 2.0;
      return n * (lo * lo + hi * hi) / (2.0 * (hi - lo));
    }
    case ProcessNoiseKind::round_off:
      return n * std::pow(10.0, -decimal_places) / 4.0;
  }
  return 0.0;
}

double ProcessNoiseSpec::worst_case_l1(Eigen::Index dim) const {
  const auto n = static_cast<double>(dim);
  switch (kind) {
    case ProcessNoiseKind::none:
      return 0.0;
    case ProcessNoiseKind::uniform_additive:
      return n * std::max(std::abs(lo), std::abs(hi));
    case ProcessNoiseKind::round_off:
      return n * 0.5 * std::pow(10.0, -decimal_places);
  }
  return 0.0;
}

double round_decimal(double value, int places) {
  const double scale = std::pow(10.0, places);
  return std::round(value * scale) / scale;
}

Vector corrupt_vector(Vector& v, const ProcessNoiseSpec& spec, std::uint64_t stream,
                      std::uint64_t iteration) {
  Vector w = Vector::Zero(v.size());
  switch (spec.kind) {
    case ProcessNoiseKind::none:
      break;
    case ProcessNoiseKind::uniform_additive:
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        w(i) = uniform_draw(spec.seed, stream, iteration, static_cast<std::uint64_t>(i), spec.lo,
                            spec.hi);
        v(i) += w(i);
      }
      break;
    case ProcessNoiseKind::round_off:
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double rounded = round_decimal(v(i), spec.decimal_places);
        w(i) = rounded - v(i);
        v(i) = rounded;
      }
      break;
  }
  return w;
}

void corrupt_matrix(Matrix& K, const ProcessNoiseSpec& spec, std::uint64_t first_stream,
                    std::uint64_t iteration, NoiseMeter* meter) {
  if (spec.kind == ProcessNoiseKind::none) return;
  Vector column(K.rows());
  for (Eigen::Index j = 0; j < K.cols(); ++j) {
    column = K.col(j);
    const Vector w = corrupt_vector(column, spec, first_stream + static_cast<std::uint64_t>(j),
                                    iteration);
    K.col(j) = column;
    if (meter) meter->add(w);
  }
}

CorruptedState corrupt_process(const Vector& x, const Matrix* K, const ProcessNoiseSpec& spec,
                               std::uint64_t iteration) {
  CorruptedState out;
  out.x = x;
  corrupt_vector(out.x, spec, 0, iteration);
  if (K) {
    out.K = *K;
    corrupt_matrix(*out.K, spec, 1, iteration);
  }
  return out;
}

double estimate_noise_level(std::span<const Vector> draws) {
  if (draws.empty()) throw std::invalid_argument("estimate_noise_level: empty sample");
  double sum = 0.0;
  for (const auto& w : draws) sum += w.lpNorm<1>();
  return sum / static_cast<double>(draws.size());
}

}  // namespace ipg
