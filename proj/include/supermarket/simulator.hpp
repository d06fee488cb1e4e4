#pragma once

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include "supermarket/fraction_measure.hpp"
#include "supermarket/gim1.hpp"
#include "supermarket/mg1.hpp"
#include "supermarket/multichoice.hpp"
#include "supermarket/tail_sequence.hpp"

namespace supermarket {

/// SplitMix64 step: used to derive independent per-replication seeds from the
/// user seed. Standard constants (Steele, Lea, Flood 2014).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministic random source: the standard mt19937_64 engine with
/// hand-written output transforms, because the standard library's
/// distribution objects are not specified bit-exactly across
/// implementations and the outputs here must be reproducible everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in the open interval (0, 1): 53 random bits centered in the bin.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Uniform integer in [0, n): multiply-shift reduction of one 64-bit draw.
  std::uint64_t uniform_int(std::uint64_t n) {
    using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((static_cast<u128>(engine_()) * n) >> 64);
  }

  /// Index into a nonnegative weight row, proportional to the weights.
  int weighted_index(const Eigen::RowVectorXd& weights, double total) {
    double u = uniform() * total;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      u -= weights(i);
      if (u <= 0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
  }

 private:
  std::mt19937_64 engine_;
};

/// Mobile-model service-target rule. `longest_of_f` is the physical
/// serve-the-longest-line rule; `min_of_f` serves the shortest sampled line
/// (idling when it is empty), which is the rule whose mean-field law the
/// tail-power algebra of the fixed-point solvers encodes. See README.
enum class MobileServiceLaw { longest_of_f, min_of_f };

using SimModel = std::variant<Mg1Model, Gim1Model, MobileServerModel, MultiClassModel>;

struct SimConfig {
  SimModel model;
  int n = 1;
  double horizon = 0;
  double warmup = 0;
  std::uint64_t seed = 1;
  std::vector<double> sample_times;
  int replications = 1;
  /// Highest queue-length level recorded in the empirical measure.
  int max_levels = 32;
  /// Sample the d (or f) servers with replacement (the model's convention);
  /// without-replacement is available for sensitivity runs.
  bool with_replacement = true;
  MobileServiceLaw mobile_law = MobileServiceLaw::longest_of_f;
  /// Worker threads for replications; 0 means use SUPERMARKET_MF_THREADS or
  /// the hardware concurrency, whichever is stricter.
  int threads = 0;
};

struct ReplicationCounters {
  std::uint64_t arrivals = 0;    ///< customers admitted
  std::uint64_t departures = 0;  ///< customers completed
  std::uint64_t in_system = 0;   ///< customers present at the horizon
  std::uint64_t events = 0;      ///< total events processed
};

/// Empirical fraction measure with replication statistics. Layout:
/// values[time][level] is a row vector over phases; per_rep is indexed
/// [replication][time][level].
struct EmpiricalMeasure {
  std::vector<double> sample_times;
  std::vector<Eigen::Index> level_dims;
  std::vector<std::vector<Eigen::RowVectorXd>> mean;
  std::vector<std::vector<Eigen::RowVectorXd>> std_error;
  std::vector<std::vector<std::vector<Eigen::RowVectorXd>>> per_rep;
  int replications = 0;
  std::vector<std::uint64_t> replication_seeds;
  std::vector<ReplicationCounters> counters;
};

/// Chooses among d sampled servers the one with the fewest customers, ties
/// broken uniformly at random over the distinct tied servers.
int power_of_d_select(const std::vector<int>& queue_lengths, const std::vector<int>& sampled,
                      Rng& rng);

/// Mirror of power_of_d_select with the most customers winning.
int longest_of_f_select(const std::vector<int>& queue_lengths, const std::vector<int>& sampled,
                        Rng& rng);

/// Draws `count` server indices from [0, n), with or without replacement.
std::vector<int> sample_indices(int n, int count, bool with_replacement, Rng& rng);

struct BmapEvent {
  double time;
  int batch;  ///< 0 for a phase change without arrival
  int phase;  ///< environment phase after the event
};

/// One realization of the arrival environment over [0, horizon] with rates
/// scaled by n; starts from the stationary phase distribution.
std::vector<BmapEvent> sample_bmap_stream(const BmapDescriptor& bmap, int n, double horizon,
                                          Rng& rng);

struct PhDraw {
  double duration;
  int batch;
};

/// Absorption time of the service phase chain plus an independent batch size.
PhDraw sample_ph_batch_service(const BatchPhService& service, Rng& rng);

/// Runs the replicated discrete-event simulation described by the config.
/// Deterministic for a fixed config and seed, regardless of thread count.
EmpiricalMeasure simulate(const SimConfig& config);

struct MeanFieldComparison {
  /// Sup-norm distance between empirical mean and prediction per sample time.
  std::vector<double> sup_distance;
  /// (empirical mean - predicted) / standard error, laid out like the means.
  std::vector<std::vector<Eigen::RowVectorXd>> z_scores;
  /// True when the shapes differed and levels were aggregated over phases.
  bool aggregated = false;
};

/// Compares the empirical measure against a mean-field prediction held fixed
/// over time. If the phase layouts differ, both sides are aggregated to
/// per-level masses first.
MeanFieldComparison compare_to_mean_field(const EmpiricalMeasure& emp,
                                          const FractionMeasure& predicted);
MeanFieldComparison compare_to_mean_field(const EmpiricalMeasure& emp, const TailSequence& seq);

}  // namespace supermarket
