#include "supermarket/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <queue>
#include <stdexcept>
#include <string>
#include <thread>

#include "supermarket/stationary.hpp"

namespace supermarket {

namespace {

int select_extreme(const std::vector<int>& queue_lengths, const std::vector<int>& sampled,
                   Rng& rng, bool want_max) {
  if (sampled.empty()) throw ShapeError("queue selection: no sampled indices");
  int best = queue_lengths[static_cast<size_t>(sampled.front())];
  for (size_t i = 1; i < sampled.size(); ++i) {
    const int len = queue_lengths[static_cast<size_t>(sampled[i])];
    if (want_max ? len > best : len < best) best = len;
  }
  // Distinct tied servers, preserving first-seen order for determinism.
  std::vector<int> tied;
  for (const int idx : sampled)
    if (queue_lengths[static_cast<size_t>(idx)] == best &&
        std::find(tied.begin(), tied.end(), idx) == tied.end())
      tied.push_back(idx);
  if (tied.size() == 1) return tied.front();
  return tied[static_cast<size_t>(rng.uniform_int(tied.size()))];
}

struct Event {
  double time;
  std::uint64_t seq;
  int kind;
  int subject;
};

struct EventOrder {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

using EventQueue = std::priority_queue<Event, std::vector<Event>, EventOrder>;

constexpr int kEventArrival = 0;
constexpr int kEventService = 1;
constexpr int kEventEnvironment = 2;

/// Per-sample-time snapshots of one replication plus its counters.
struct RepResult {
  std::vector<std::vector<Eigen::RowVectorXd>> snapshots;
  ReplicationCounters counters;
};

/// Counts of queues with at least k customers for k = 0..max_level.
std::vector<int> tail_counts(const std::vector<int>& q, int max_level) {
  std::vector<int> at_exactly(static_cast<size_t>(max_level) + 1, 0);
  for (const int len : q) ++at_exactly[static_cast<size_t>(std::min(len, max_level))];
  std::vector<int> tails(static_cast<size_t>(max_level) + 1, 0);
  int running = 0;
  for (int k = max_level; k >= 0; --k) {
    running += at_exactly[static_cast<size_t>(k)];
    tails[static_cast<size_t>(k)] = running;
  }
  return tails;
}

/// Flattened branch table for one environment phase of a BMAP: first the
/// no-arrival moves C(i,j), then one entry per (batch size, next phase).
struct EnvRow {
  std::vector<double> weight;
  std::vector<int> batch;
  std::vector<int> next_phase;
  double total = 0;
};

std::vector<EnvRow> build_env_rows(const BmapDescriptor& bmap) {
  const int m = static_cast<int>(bmap.phases());
  std::vector<EnvRow> rows(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    EnvRow& row = rows[static_cast<size_t>(i)];
    for (int j = 0; j < m; ++j) {
      if (j != i && bmap.C(i, j) > 0) {
        row.weight.push_back(bmap.C(i, j));
        row.batch.push_back(0);
        row.next_phase.push_back(j);
      }
    }
    for (int k = 1; k <= bmap.max_batch(); ++k) {
      const Eigen::MatrixXd& Dk = bmap.D[static_cast<size_t>(k - 1)];
      for (int j = 0; j < m; ++j) {
        if (Dk(i, j) > 0) {
          row.weight.push_back(Dk(i, j));
          row.batch.push_back(k);
          row.next_phase.push_back(j);
        }
      }
    }
    for (const double w : row.weight) row.total += w;
  }
  return rows;
}

int pick_branch(const EnvRow& row, Rng& rng) {
  double u = rng.uniform() * row.total;
  for (size_t i = 0; i < row.weight.size(); ++i) {
    u -= row.weight[i];
    if (u <= 0) return static_cast<int>(i);
  }
  return static_cast<int>(row.weight.size()) - 1;
}

/// Walks the snapshot clock forward to `now`, recording every sample time
/// that has been passed.
class SnapshotCursor {
 public:
  SnapshotCursor(const std::vector<double>& times, RepResult& out) : times_(times), out_(&out) {}

  template <class Recorder>
  void advance(double now, const Recorder& record) {
    while (next_ < times_.size() && times_[next_] <= now) {
      out_->snapshots.push_back(record());
      ++next_;
    }
  }

  template <class Recorder>
  void finish(const Recorder& record) {
    advance(std::numeric_limits<double>::infinity(), record);
  }

 private:
  const std::vector<double>& times_;
  RepResult* out_;
  size_t next_ = 0;
};

RepResult run_model(const Mg1Model& model, const SimConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const int n = config.n;
  const int m = static_cast<int>(model.phases());
  const int L = config.max_levels;
  const std::vector<EnvRow> rows = build_env_rows(model.bmap);

  std::vector<int> q(static_cast<size_t>(n), 0);
  int phase = rng.weighted_index(model.gamma, model.gamma.sum());
  RepResult result;

  auto record = [&]() {
    std::vector<Eigen::RowVectorXd> levels(static_cast<size_t>(L) + 1,
                                           Eigen::RowVectorXd::Zero(m));
    const std::vector<int> tails = tail_counts(q, L);
    levels[0](phase) = 1.0;
    for (int k = 1; k <= L; ++k)
      levels[static_cast<size_t>(k)](phase) =
          static_cast<double>(tails[static_cast<size_t>(k)]) / n;
    return levels;
  };

  EventQueue events;
  std::uint64_t seq = 0;
  auto push = [&](double t, int kind, int subject) {
    events.push(Event{t, seq++, kind, subject});
  };
  auto schedule_env = [&](double now) {
    push(now + rng.exponential(n * rows[static_cast<size_t>(phase)].total), kEventEnvironment, 0);
  };
  SnapshotCursor cursor(config.sample_times, result);

  double t = 0;
  schedule_env(t);
  while (!events.empty()) {
    const Event ev = events.top();
    if (ev.time > config.horizon) break;
    events.pop();
    cursor.advance(ev.time, record);
    t = ev.time;
    ++result.counters.events;
    if (ev.kind == kEventEnvironment) {
      const EnvRow& row = rows[static_cast<size_t>(phase)];
      const int branch = pick_branch(row, rng);
      const int batch = row.batch[static_cast<size_t>(branch)];
      phase = row.next_phase[static_cast<size_t>(branch)];
      if (batch > 0) {
        const std::vector<int> sampled =
            sample_indices(n, model.d, config.with_replacement, rng);
        const int target = power_of_d_select(q, sampled, rng);
        const bool was_empty = q[static_cast<size_t>(target)] == 0;
        q[static_cast<size_t>(target)] += batch;
        result.counters.arrivals += static_cast<std::uint64_t>(batch);
        if (was_empty) push(t + rng.exponential(model.mu), kEventService, target);
      }
      schedule_env(t);
    } else {
      const int s = ev.subject;
      q[static_cast<size_t>(s)] -= 1;
      ++result.counters.departures;
      if (q[static_cast<size_t>(s)] > 0) push(t + rng.exponential(model.mu), kEventService, s);
    }
  }
  cursor.finish(record);
  for (const int len : q) result.counters.in_system += static_cast<std::uint64_t>(len);
  return result;
}

RepResult run_model(const Gim1Model& model, const SimConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const int n = config.n;
  const int m = static_cast<int>(model.phases());
  const int L = config.max_levels;
  const BatchPhService& svc = model.service;

  std::vector<int> q(static_cast<size_t>(n), 0);
  std::vector<int> phase(static_cast<size_t>(n), -1);
  RepResult result;

  auto record = [&]() {
    std::vector<Eigen::RowVectorXd> levels;
    levels.reserve(static_cast<size_t>(L) + 1);
    levels.push_back(Eigen::RowVectorXd::Ones(1));
    for (int k = 1; k <= L; ++k) levels.push_back(Eigen::RowVectorXd::Zero(m));
    for (int s = 0; s < n; ++s) {
      const int len = std::min(q[static_cast<size_t>(s)], L);
      for (int k = 1; k <= len; ++k)
        levels[static_cast<size_t>(k)](phase[static_cast<size_t>(s)]) += 1.0 / n;
    }
    return levels;
  };

  EventQueue events;
  std::uint64_t seq = 0;
  auto push = [&](double t, int kind, int subject) {
    events.push(Event{t, seq++, kind, subject});
  };
  auto start_service = [&](int s, double now) {
    phase[static_cast<size_t>(s)] = rng.weighted_index(svc.alpha, 1.0);
    push(now + rng.exponential(-svc.T(phase[static_cast<size_t>(s)],
                                      phase[static_cast<size_t>(s)])),
         kEventService, s);
  };
  SnapshotCursor cursor(config.sample_times, result);

  double t = 0;
  push(rng.exponential(n * model.lambda), kEventArrival, 0);
  while (!events.empty()) {
    const Event ev = events.top();
    if (ev.time > config.horizon) break;
    events.pop();
    cursor.advance(ev.time, record);
    t = ev.time;
    ++result.counters.events;
    if (ev.kind == kEventArrival) {
      const std::vector<int> sampled = sample_indices(n, model.d, config.with_replacement, rng);
      const int target = power_of_d_select(q, sampled, rng);
      const bool was_empty = q[static_cast<size_t>(target)] == 0;
      q[static_cast<size_t>(target)] += 1;
      ++result.counters.arrivals;
      if (was_empty) start_service(target, t);
      push(t + rng.exponential(n * model.lambda), kEventArrival, 0);
    } else {
      const int s = ev.subject;
      const int p = phase[static_cast<size_t>(s)];
      // Branch the phase chain: internal move with rate T(p, j), absorption
      // (service completion) with rate T0(p).
      const double total = -svc.T(p, p);
      double u = rng.uniform() * total;
      int next = -1;
      for (int j = 0; j < m && next == -1; ++j) {
        if (j == p) continue;
        u -= svc.T(p, j);
        if (u <= 0) next = j;
      }
      if (next != -1) {
        phase[static_cast<size_t>(s)] = next;
        push(t + rng.exponential(-svc.T(next, next)), kEventService, s);
      } else {
        // Absorption: completes a whole batch (capped by the queue).
        double ub = rng.uniform();
        int batch = svc.max_batch();
        for (int k = 1; k <= svc.max_batch(); ++k) {
          ub -= svc.b[static_cast<size_t>(k - 1)];
          if (ub <= 0) {
            batch = k;
            break;
          }
        }
        const int removed = std::min(batch, q[static_cast<size_t>(s)]);
        q[static_cast<size_t>(s)] -= removed;
        result.counters.departures += static_cast<std::uint64_t>(removed);
        if (q[static_cast<size_t>(s)] > 0)
          start_service(s, t);
        else
          phase[static_cast<size_t>(s)] = -1;
      }
    }
  }
  cursor.finish(record);
  for (const int len : q) result.counters.in_system += static_cast<std::uint64_t>(len);
  return result;
}

RepResult run_model(const MobileServerModel& model, const SimConfig& config,
                         std::uint64_t seed) {
  Rng rng(seed);
  const int n = config.n;
  const int L = config.max_levels;

  std::vector<int> q(static_cast<size_t>(n), 0);
  RepResult result;
  auto record = [&]() {
    std::vector<Eigen::RowVectorXd> levels;
    levels.reserve(static_cast<size_t>(L) + 1);
    const std::vector<int> tails = tail_counts(q, L);
    for (int k = 0; k <= L; ++k) {
      Eigen::RowVectorXd row(1);
      row(0) = k == 0 ? 1.0 : static_cast<double>(tails[static_cast<size_t>(k)]) / n;
      levels.push_back(row);
    }
    return levels;
  };

  EventQueue events;
  std::uint64_t seq = 0;
  auto push = [&](double t, int kind) { events.push(Event{t, seq++, kind, 0}); };
  SnapshotCursor cursor(config.sample_times, result);

  double t = 0;
  push(rng.exponential(n * model.lambda), kEventArrival);
  push(rng.exponential(n * model.mu), kEventService);
  while (!events.empty()) {
    const Event ev = events.top();
    if (ev.time > config.horizon) break;
    events.pop();
    cursor.advance(ev.time, record);
    t = ev.time;
    ++result.counters.events;
    if (ev.kind == kEventArrival) {
      const std::vector<int> sampled = sample_indices(n, model.d, config.with_replacement, rng);
      const int target = power_of_d_select(q, sampled, rng);
      q[static_cast<size_t>(target)] += 1;
      ++result.counters.arrivals;
      push(t + rng.exponential(n * model.lambda), kEventArrival);
    } else {
      // The roving server works at rate n*mu; each tick it samples f lines
      // and serves one customer at the selected line if it is nonempty.
      const std::vector<int> sampled = sample_indices(n, model.f, config.with_replacement, rng);
      const int target = config.mobile_law == MobileServiceLaw::longest_of_f
                             ? longest_of_f_select(q, sampled, rng)
                             : power_of_d_select(q, sampled, rng);
      if (q[static_cast<size_t>(target)] > 0) {
        q[static_cast<size_t>(target)] -= 1;
        ++result.counters.departures;
      }
      push(t + rng.exponential(n * model.mu), kEventService);
    }
  }
  cursor.finish(record);
  for (const int len : q) result.counters.in_system += static_cast<std::uint64_t>(len);
  return result;
}

RepResult run_model(const MultiClassModel& model, const SimConfig& config,
                             std::uint64_t seed) {
  Rng rng(seed);
  const int n = config.n;
  const int L = config.max_levels;

  std::vector<int> q(static_cast<size_t>(n), 0);
  RepResult result;
  auto record = [&]() {
    std::vector<Eigen::RowVectorXd> levels;
    levels.reserve(static_cast<size_t>(L) + 1);
    const std::vector<int> tails = tail_counts(q, L);
    for (int k = 0; k <= L; ++k) {
      Eigen::RowVectorXd row(1);
      row(0) = k == 0 ? 1.0 : static_cast<double>(tails[static_cast<size_t>(k)]) / n;
      levels.push_back(row);
    }
    return levels;
  };

  EventQueue events;
  std::uint64_t seq = 0;
  auto push = [&](double t, int kind, int subject) {
    events.push(Event{t, seq++, kind, subject});
  };
  SnapshotCursor cursor(config.sample_times, result);

  double t = 0;
  for (size_t i = 0; i < model.classes.size(); ++i)
    push(rng.exponential(n * model.classes[i].lambda), kEventArrival, static_cast<int>(i));
  while (!events.empty()) {
    const Event ev = events.top();
    if (ev.time > config.horizon) break;
    events.pop();
    cursor.advance(ev.time, record);
    t = ev.time;
    ++result.counters.events;
    if (ev.kind == kEventArrival) {
      const auto& cls = model.classes[static_cast<size_t>(ev.subject)];
      const std::vector<int> sampled = sample_indices(n, cls.d, config.with_replacement, rng);
      const int target = power_of_d_select(q, sampled, rng);
      const bool was_empty = q[static_cast<size_t>(target)] == 0;
      q[static_cast<size_t>(target)] += 1;
      ++result.counters.arrivals;
      if (was_empty) push(t + rng.exponential(model.mu), kEventService, target);
      push(t + rng.exponential(n * cls.lambda), kEventArrival, ev.subject);
    } else {
      const int s = ev.subject;
      q[static_cast<size_t>(s)] -= 1;
      ++result.counters.departures;
      if (q[static_cast<size_t>(s)] > 0) push(t + rng.exponential(model.mu), kEventService, s);
    }
  }
  cursor.finish(record);
  for (const int len : q) result.counters.in_system += static_cast<std::uint64_t>(len);
  return result;
}

std::vector<Eigen::Index> measure_dims(const SimModel& model, int max_levels) {
  std::vector<Eigen::Index> dims(static_cast<size_t>(max_levels) + 1, 1);
  if (const auto* mg1 = std::get_if<Mg1Model>(&model)) {
    std::fill(dims.begin(), dims.end(), mg1->phases());
  } else if (const auto* gim1 = std::get_if<Gim1Model>(&model)) {
    std::fill(dims.begin() + 1, dims.end(), gim1->phases());
  }
  return dims;
}

int resolve_threads(const SimConfig& config) {
  int threads = config.threads;
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
    if (const char* env = std::getenv("SUPERMARKET_MF_THREADS")) {
      const int cap = std::atoi(env);
      if (cap >= 1) threads = std::min(threads, cap);
    }
  }
  return std::max(1, std::min(threads, config.replications));
}

}  // namespace

int power_of_d_select(const std::vector<int>& queue_lengths, const std::vector<int>& sampled,
                      Rng& rng) {
  return select_extreme(queue_lengths, sampled, rng, /*want_max=*/false);
}

int longest_of_f_select(const std::vector<int>& queue_lengths, const std::vector<int>& sampled,
                        Rng& rng) {
  return select_extreme(queue_lengths, sampled, rng, /*want_max=*/true);
}

std::vector<int> sample_indices(int n, int count, bool with_replacement, Rng& rng) {
  if (count < 1 || n < 1) throw ShapeError("sample_indices: need n >= 1 and count >= 1");
  if (!with_replacement && count > n)
    throw ShapeError("sample_indices: cannot sample more servers than exist without replacement");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    const int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    if (!with_replacement && std::find(out.begin(), out.end(), idx) != out.end()) continue;
    out.push_back(idx);
  }
  return out;
}

std::vector<BmapEvent> sample_bmap_stream(const BmapDescriptor& bmap, int n, double horizon,
                                          Rng& rng) {
  validate_bmap(bmap);
  if (n < 1 || horizon < 0) throw ShapeError("sample_bmap_stream: need n >= 1 and horizon >= 0");
  const std::vector<EnvRow> rows = build_env_rows(bmap);
  const Eigen::RowVectorXd gamma =
      generator_stationary_vector((bmap.C + bmap.arrival_sum()).eval());
  int phase = rng.weighted_index(gamma, gamma.sum());
  std::vector<BmapEvent> stream;
  double t = 0;
  for (;;) {
    t += rng.exponential(n * rows[static_cast<size_t>(phase)].total);
    if (t > horizon) break;
    const EnvRow& row = rows[static_cast<size_t>(phase)];
    const int branch = pick_branch(row, rng);
    phase = row.next_phase[static_cast<size_t>(branch)];
    stream.push_back(BmapEvent{t, row.batch[static_cast<size_t>(branch)], phase});
  }
  return stream;
}

PhDraw sample_ph_batch_service(const BatchPhService& service, Rng& rng) {
  const int m = static_cast<int>(service.phases());
  int p = rng.weighted_index(service.alpha, 1.0);
  double duration = 0;
  for (;;) {
    duration += rng.exponential(-service.T(p, p));
    double u = rng.uniform() * (-service.T(p, p));
    int next = -1;
    for (int j = 0; j < m && next == -1; ++j) {
      if (j == p) continue;
      u -= service.T(p, j);
      if (u <= 0) next = j;
    }
    if (next == -1) break;
    p = next;
  }
  double ub = rng.uniform();
  int batch = service.max_batch();
  for (int k = 1; k <= service.max_batch(); ++k) {
    ub -= service.b[static_cast<size_t>(k - 1)];
    if (ub <= 0) {
      batch = k;
      break;
    }
  }
  return PhDraw{duration, batch};
}

EmpiricalMeasure simulate(const SimConfig& config) {
  if (config.n < 1) throw ShapeError("simulate: need at least one server");
  if (config.replications < 1) throw ShapeError("simulate: need at least one replication");
  if (config.max_levels < 1) throw ShapeError("simulate: need at least one recorded level");
  if (!(config.warmup < config.horizon) && config.horizon > 0)
    throw ShapeError("simulate: warmup must be below the horizon");
  std::vector<double> times = config.sample_times;
  if (times.empty()) times.push_back(config.horizon);
  std::sort(times.begin(), times.end());
  if (times.front() < 0 || times.back() > config.horizon)
    throw ShapeError("simulate: sample times must lie in [0, horizon]");

  SimConfig run_config = config;
  run_config.sample_times = times;

  EmpiricalMeasure out;
  out.sample_times = times;
  out.level_dims = measure_dims(config.model, config.max_levels);
  out.replications = config.replications;

  std::uint64_t seed_state = config.seed;
  out.replication_seeds.resize(static_cast<size_t>(config.replications));
  for (auto& s : out.replication_seeds) s = splitmix64(seed_state);

  std::vector<RepResult> results(static_cast<size_t>(config.replications));
  auto run_one = [&](int rep) {
    const std::uint64_t seed = out.replication_seeds[static_cast<size_t>(rep)];
    RepResult res = std::visit(
        [&](const auto& model) { return run_model(model, run_config, seed); },
        config.model);
    if (res.counters.arrivals != res.counters.departures + res.counters.in_system)
      throw std::logic_error("simulate: customer conservation violated");
    results[static_cast<size_t>(rep)] = std::move(res);
  };

  const int threads = resolve_threads(config);
  if (threads == 1) {
    for (int rep = 0; rep < config.replications; ++rep) run_one(rep);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          const int rep = next.fetch_add(1);
          if (rep >= config.replications) return;
          try {
            run_one(rep);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  const size_t T = times.size();
  const size_t R = static_cast<size_t>(config.replications);
  out.per_rep.resize(R);
  out.counters.resize(R);
  for (size_t rep = 0; rep < R; ++rep) {
    out.per_rep[rep] = std::move(results[rep].snapshots);
    out.counters[rep] = results[rep].counters;
  }
  out.mean.assign(T, {});
  out.std_error.assign(T, {});
  for (size_t ti = 0; ti < T; ++ti) {
    const size_t L = out.level_dims.size();
    out.mean[ti].resize(L);
    out.std_error[ti].resize(L);
    for (size_t k = 0; k < L; ++k) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(out.level_dims[k]);
      for (size_t rep = 0; rep < R; ++rep) mean += out.per_rep[rep][ti][k];
      mean /= static_cast<double>(R);
      Eigen::RowVectorXd se = Eigen::RowVectorXd::Zero(out.level_dims[k]);
      if (R > 1) {
        for (size_t rep = 0; rep < R; ++rep)
          se += (out.per_rep[rep][ti][k] - mean).cwiseAbs2();
        se = (se / static_cast<double>(R - 1)).cwiseSqrt() / std::sqrt(static_cast<double>(R));
      }
      out.mean[ti][k] = std::move(mean);
      out.std_error[ti][k] = std::move(se);
    }
  }
  return out;
}

MeanFieldComparison compare_to_mean_field(const EmpiricalMeasure& emp,
                                          const FractionMeasure& predicted) {
  if (emp.mean.empty()) throw ShapeError("compare_to_mean_field: empty empirical measure");
  const size_t levels = std::min(emp.level_dims.size(), predicted.levels.size());
  if (levels == 0) throw ShapeError("compare_to_mean_field: no overlapping levels");
  bool same_shape = true;
  for (size_t k = 0; k < levels; ++k)
    if (emp.level_dims[k] != predicted.levels[k].size()) same_shape = false;

  MeanFieldComparison cmp;
  cmp.aggregated = !same_shape;
  cmp.sup_distance.reserve(emp.mean.size());
  cmp.z_scores.resize(emp.mean.size());
  for (size_t ti = 0; ti < emp.mean.size(); ++ti) {
    double sup = 0;
    cmp.z_scores[ti].resize(levels);
    for (size_t k = 0; k < levels; ++k) {
      Eigen::RowVectorXd emp_value = emp.mean[ti][k];
      Eigen::RowVectorXd emp_se = emp.std_error[ti][k];
      Eigen::RowVectorXd pred = predicted.levels[k];
      if (!same_shape) {
        emp_value = Eigen::RowVectorXd::Constant(1, emp.mean[ti][k].sum());
        // Phase aggregation: variances add, which the summed standard error
        // over-counts; it stays a valid (conservative) scale for z-scores.
        emp_se = Eigen::RowVectorXd::Constant(1, emp.std_error[ti][k].sum());
        pred = Eigen::RowVectorXd::Constant(1, predicted.levels[k].sum());
      }
      Eigen::RowVectorXd z(emp_value.size());
      for (Eigen::Index i = 0; i < emp_value.size(); ++i) {
        const double diff = emp_value(i) - pred(i);
        sup = std::max(sup, std::abs(diff));
        if (emp_se(i) > 0)
          z(i) = diff / emp_se(i);
        else
          z(i) = diff == 0 ? 0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
      }
      cmp.z_scores[ti][k] = std::move(z);
    }
    cmp.sup_distance.push_back(sup);
  }
  return cmp;
}

MeanFieldComparison compare_to_mean_field(const EmpiricalMeasure& emp, const TailSequence& seq) {
  return compare_to_mean_field(emp,
                               fraction_measure_from_tail(seq, static_cast<int>(emp.level_dims.size())));
}

}  // namespace supermarket
