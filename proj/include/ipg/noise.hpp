#pragma once

#include "ipg/dataset.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ipg {

/// Stateless counter-based uniform draws: the value depends only on
/// (seed, stream, counter, index), never on call order.
double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                    std::uint64_t index, double lo, double hi);

/// Entry-wise uniform(-amplitude, amplitude) noise on each agent's outputs,
/// drawn once per run and keyed by global row index.
struct ObservationNoiseSpec {
  double amplitude = 0.25;
  std::uint64_t seed = 1;
};

struct ObservationNoiseReport {
  std::vector<double> realized_l1;  // per agent ||w_b^i||_1
  std::vector<double> expected_l1;  // per agent n_i * amplitude / 2
  double max_realized() const;
  double max_expected() const;
};

ObservationNoiseReport draw_observation_noise(const ObservationNoiseSpec& spec,
                                              std::span<AgentShard> shards);

enum class ProcessNoiseKind { none, uniform_additive, round_off };

struct ProcessNoiseSpec {
  ProcessNoiseKind kind = ProcessNoiseKind::none;
  double lo = 0.0;  // uniform_additive range (lo, hi)
  double hi = 0.0;
  int decimal_places = 4;  // round_off
  std::uint64_t seed = 1;

  static ProcessNoiseSpec uniform(double lo, double hi, std::uint64_t seed);
  static ProcessNoiseSpec round_to(int places);

  /// E||w||_1 for a corrupted vector of length `dim` (closed form; for
  /// round-off it assumes uniformly distributed rounding residues).
  double expected_l1(Eigen::Index dim) const;
  /// Almost-sure bound on ||w||_1 for a vector of length `dim`.
  double worst_case_l1(Eigen::Index dim) const;
};

/// Running mean of ||w||_1 across all corruptions applied during a run.
class NoiseMeter {
 public:
  void add(const Vector& w) {
    sum_ += w.lpNorm<1>();
    ++count_;
  }
  double mean() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }
  std::size_t count() const { return count_; }

 private:
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

/// Half-away-from-zero rounding to `places` decimal places.
double round_decimal(double value, int places);

/// Corrupts `v` in place. Uniform draws come from stream `stream` at counter
/// `iteration`. Returns the added noise w = v_after - v_before.
Vector corrupt_vector(Vector& v, const ProcessNoiseSpec& spec, std::uint64_t stream,
                      std::uint64_t iteration);

/// Corrupts every column k_j of K; column j uses stream `first_stream + j`.
void corrupt_matrix(Matrix& K, const ProcessNoiseSpec& spec, std::uint64_t first_stream,
                    std::uint64_t iteration, NoiseMeter* meter = nullptr);

struct CorruptedState {
  Vector x;
  std::optional<Matrix> K;
};

/// (x, K) -> (x°, K°): x uses stream 0, column j of K uses stream j + 1.
CorruptedState corrupt_process(const Vector& x, const Matrix* K, const ProcessNoiseSpec& spec,
                               std::uint64_t iteration);

/// Empirical mean l1 norm of a sample of noise vectors.
double estimate_noise_level(std::span<const Vector> draws);

}  // namespace ipg
