// SPDX-License-Identifier: Apache-2.0
//
// Instrumented reference workloads.
//
// Every workload runs `workers` threads inside one RunHandle. Compute regions
// are wrapped in ScopedSpan; barrier waits and data exchange are not, so they
// land in the overhead term. Compute span labels come from kPhaseLabels.
#pragma once

#include <algorithm>
#include <array>
#include <barrier>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

#include <json.hpp>

#include "granscale/error.hpp"
#include "granscale/measurement.hpp"
#include "granscale/rng.hpp"

namespace granscale {

inline constexpr std::array<std::string_view, 5> kPhaseLabels = {"assign", "partial_sums", "update",
                                                                 "sample", "busy"};

struct KMeansSpec {
  std::int64_t n_points = 100000;
  std::int64_t n_clusters = 1024;
  std::int64_t dims = 8;
  std::int64_t max_iterations = 10;
  double convergence_epsilon = 0.0;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_points < 1 || n_clusters < 1) throw InvariantError("KMeansSpec: counts must be positive");
    if (n_points < n_clusters) throw InvariantError("KMeansSpec: n_points < n_clusters");
    if (dims < 1) throw InvariantError("KMeansSpec: dims must be >= 1");
    if (max_iterations < 1) throw InvariantError("KMeansSpec: max_iterations must be >= 1");
    if (!(convergence_epsilon >= 0.0)) throw InvariantError("KMeansSpec: negative epsilon");
  }
};

struct PiSpec {
  std::int64_t n_samples = 10'000'000;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_samples < 1) throw InvariantError("PiSpec: n_samples must be >= 1");
  }
};

struct SyntheticSpec {
  double compute_ms_per_worker = 90.0;
  double exchange_ms_per_worker = 10.0;
  std::int64_t iterations = 10;

  void validate() const {
    if (!(compute_ms_per_worker > 0.0) || !(exchange_ms_per_worker > 0.0)) {
      throw InvariantError("SyntheticSpec: durations must be > 0");
    }
    if (iterations < 1) throw InvariantError("SyntheticSpec: iterations must be >= 1");
  }
};

struct RunOptions {
  // Pin worker w to logical CPU (w mod hardware threads). Linux only; no-op elsewhere.
  bool pin_cores = false;
};

// ---------------------------------------------------------------------------
// Worker plumbing

/// [begin, end) of block `w` when `n` items are split over `parts`; the first
/// n mod parts blocks get one extra item.
inline std::pair<std::int64_t, std::int64_t> block_range(std::int64_t n, std::int64_t parts,
                                                         std::int64_t w) {
  const std::int64_t base = n / parts;
  const std::int64_t extra = n % parts;
  const std::int64_t begin = w * base + std::min(w, extra);
  return {begin, begin + base + (w < extra ? 1 : 0)};
}

namespace detail {

inline void pin_current_thread(std::int64_t worker_id) {
#if defined(__linux__)
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(static_cast<int>(worker_id % hw), &set);
  pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
#else
  (void)worker_id;
#endif
}

// Runs body(w) on `workers` threads and joins them. The first exception
// thrown by any worker is rethrown here.
inline void run_workers(std::int64_t workers, const RunOptions& opts,
                        const std::function<void(std::int64_t)>& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (std::int64_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        if (opts.pin_cores) pin_current_thread(w);
        try {
          body(w);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Spins until `d` of wall time has elapsed. Yields between clock reads so
// oversubscribed workers still reach their deadlines promptly.
inline void busy_wait(std::chrono::duration<double, std::milli> d) {
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(d);
  while (Clock::now() < deadline) std::this_thread::yield();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// K-means

/// Row-major n x dims matrix.
struct PointMatrix {
  std::int64_t rows = 0;
  std::int64_t dims = 0;
  std::vector<double> values;

  const double* row(std::int64_t i) const { return values.data() + i * dims; }
  double* row(std::int64_t i) { return values.data() + i * dims; }
  bool operator==(const PointMatrix&) const = default;
};

struct KMeansResult {
  PointMatrix centroids;
  std::vector<std::int32_t> assignments;
  std::int64_t iterations = 0;
};

// Substream ids inside a seed's generator family.
inline constexpr std::uint64_t kStreamBlobCenters = 0;
inline constexpr std::uint64_t kStreamPoints = 1;
inline constexpr std::uint64_t kStreamInitialCentroids = 2;
// Blob centers are drawn uniformly in [0, kBlobSpread)^dims; points add N(0, 1) noise.
inline constexpr double kBlobSpread = 1000.0;

/// k Gaussian blobs around uniformly drawn centers; point i belongs to blob i mod k.
inline PointMatrix generate_dataset(const KMeansSpec& spec) {
  spec.validate();
  PointMatrix centers{spec.n_clusters, spec.dims,
                      std::vector<double>(static_cast<std::size_t>(spec.n_clusters * spec.dims))};
  auto center_rng = Xoshiro256ss::substream(spec.seed, kStreamBlobCenters);
  for (auto& v : centers.values) v = center_rng.uniform01() * kBlobSpread;

  PointMatrix data{spec.n_points, spec.dims,
                   std::vector<double>(static_cast<std::size_t>(spec.n_points * spec.dims))};
  auto point_rng = Xoshiro256ss::substream(spec.seed, kStreamPoints);
  for (std::int64_t i = 0; i < spec.n_points; ++i) {
    const double* c = centers.row(i % spec.n_clusters);
    double* p = data.row(i);
    for (std::int64_t d = 0; d < spec.dims; ++d) p[d] = c[d] + point_rng.normal();
  }
  return data;
}

namespace detail {

inline double squared_distance(const double* a, const double* b, std::int64_t dims) {
  double s = 0.0;
  for (std::int64_t d = 0; d < dims; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

// Lowest index wins ties.
inline std::int32_t nearest_centroid(const double* point, const PointMatrix& centroids) {
  std::int32_t best = 0;
  double best_d = squared_distance(point, centroids.row(0), centroids.dims);
  for (std::int64_t c = 1; c < centroids.rows; ++c) {
    const double d = squared_distance(point, centroids.row(c), centroids.dims);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int32_t>(c);
    }
  }
  return best;
}

inline void check_data(const KMeansSpec& spec, const PointMatrix& data) {
  spec.validate();
  if (data.rows != spec.n_points || data.dims != spec.dims ||
      data.values.size() != static_cast<std::size_t>(data.rows * data.dims)) {
    throw Error("kmeans: data does not match spec");
  }
}

// Writes new centroids from per-cluster sums/counts into `centroids` and
// returns the largest centroid displacement. Empty clusters stay put.
inline double apply_centroid_update(PointMatrix& centroids, const std::vector<double>& sums,
                                    const std::vector<std::int64_t>& counts) {
  const std::int64_t dims = centroids.dims;
  double max_shift = 0.0;
  std::vector<double> next(static_cast<std::size_t>(dims));
  for (std::int64_t c = 0; c < centroids.rows; ++c) {
    const auto n = counts[static_cast<std::size_t>(c)];
    if (n == 0) continue;
    double* cur = centroids.row(c);
    for (std::int64_t d = 0; d < dims; ++d) {
      next[static_cast<std::size_t>(d)] =
          sums[static_cast<std::size_t>(c * dims + d)] / static_cast<double>(n);
    }
    max_shift = std::max(max_shift, std::sqrt(squared_distance(cur, next.data(), dims)));
    std::copy(next.begin(), next.end(), cur);
  }
  return max_shift;
}

inline bool converged(double max_shift, double epsilon) { return max_shift < epsilon; }

}  // namespace detail

/// k distinct dataset rows chosen by a seeded partial Fisher-Yates shuffle.
inline PointMatrix initial_centroids(const KMeansSpec& spec, const PointMatrix& data) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(data.rows));
  for (std::int64_t i = 0; i < data.rows; ++i) idx[static_cast<std::size_t>(i)] = i;
  auto rng = Xoshiro256ss::substream(spec.seed, kStreamInitialCentroids);
  PointMatrix c{spec.n_clusters, spec.dims,
                std::vector<double>(static_cast<std::size_t>(spec.n_clusters * spec.dims))};
  for (std::int64_t j = 0; j < spec.n_clusters; ++j) {
    const auto pick = j + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(data.rows - j)));
    std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick)]);
    const double* src = data.row(idx[static_cast<std::size_t>(j)]);
    std::copy(src, src + spec.dims, c.row(j));
  }
  return c;
}

/// Sum of squared distances from each point to its assigned centroid.
inline double kmeans_objective(const PointMatrix& data, const PointMatrix& centroids,
                               const std::vector<std::int32_t>& assignments) {
  double total = 0.0;
  for (std::int64_t i = 0; i < data.rows; ++i) {
    total += detail::squared_distance(data.row(i),
                                      centroids.row(assignments[static_cast<std::size_t>(i)]),
                                      data.dims);
  }
  return total;
}

/// Plain Lloyd iterations; the reference the parallel version is checked against.
/// `on_iteration`, when set, sees (centroids, assignments) after each assignment pass.
inline KMeansResult kmeans_serial(
    const KMeansSpec& spec, const PointMatrix& data,
    const std::function<void(const PointMatrix&, const std::vector<std::int32_t>&)>& on_iteration = {}) {
  detail::check_data(spec, data);
  KMeansResult r;
  r.centroids = initial_centroids(spec, data);
  r.assignments.assign(static_cast<std::size_t>(data.rows), 0);
  const std::int64_t k = spec.n_clusters;
  const std::int64_t dims = spec.dims;
  std::vector<double> sums(static_cast<std::size_t>(k * dims));
  std::vector<std::int64_t> counts(static_cast<std::size_t>(k));

  for (std::int64_t it = 0; it < spec.max_iterations; ++it) {
    for (std::int64_t i = 0; i < data.rows; ++i) {
      r.assignments[static_cast<std::size_t>(i)] = detail::nearest_centroid(data.row(i), r.centroids);
    }
    if (on_iteration) on_iteration(r.centroids, r.assignments);

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::int64_t i = 0; i < data.rows; ++i) {
      const auto c = r.assignments[static_cast<std::size_t>(i)];
      const double* p = data.row(i);
      for (std::int64_t d = 0; d < dims; ++d) sums[static_cast<std::size_t>(c * dims + d)] += p[d];
      ++counts[static_cast<std::size_t>(c)];
    }
    const double shift = detail::apply_centroid_update(r.centroids, sums, counts);
    r.iterations = it + 1;
    if (detail::converged(shift, spec.convergence_epsilon)) break;
  }
  return r;
}

struct KMeansRun {
  KMeansResult result;
  RunRecord record;
};

/// Block-partitioned Lloyd iterations on `workers` threads.
///
/// Per iteration each worker times three compute spans: "assign" (its block),
/// "partial_sums" (its per-cluster sums) and "update" (the replicated reduction
/// and centroid recomputation every worker performs). The barriers around the
/// exchange of partial sums are untimed. Finishes `handle`.
inline KMeansRun kmeans_parallel(const KMeansSpec& spec, const PointMatrix& data,
                                 std::int64_t workers, RunHandle& handle,
                                 const RunOptions& opts = {}) {
  detail::check_data(spec, data);
  if (workers < 1) throw Error("kmeans_parallel: workers must be >= 1");
  if (workers > data.rows) throw Error("kmeans_parallel: underfilled partition");
  if (handle.workers() != workers) throw Error("kmeans_parallel: handle worker count mismatch");

  const std::int64_t k = spec.n_clusters;
  const std::int64_t dims = spec.dims;
  const auto kd = static_cast<std::size_t>(k * dims);
  const PointMatrix init = initial_centroids(spec, data);

  std::vector<std::int32_t> assignments(static_cast<std::size_t>(data.rows), 0);
  std::vector<std::vector<double>> partial_sums(static_cast<std::size_t>(workers),
                                                std::vector<double>(kd));
  std::vector<std::vector<std::int64_t>> partial_counts(
      static_cast<std::size_t>(workers), std::vector<std::int64_t>(static_cast<std::size_t>(k)));
  std::vector<PointMatrix> replicas(static_cast<std::size_t>(workers), init);
  std::vector<std::int64_t> iterations_done(static_cast<std::size_t>(workers), 0);
  std::barrier sync(static_cast<std::ptrdiff_t>(workers));

  detail::run_workers(workers, opts, [&](std::int64_t w) {
    const auto [begin, end] = block_range(data.rows, workers, w);
    const auto wi = static_cast<std::size_t>(w);
    PointMatrix& centroids = replicas[wi];
    std::vector<double> sums(kd);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k));

    for (std::int64_t it = 0; it < spec.max_iterations; ++it) {
      {
        ScopedSpan span(handle, w, "assign");
        for (std::int64_t i = begin; i < end; ++i) {
          assignments[static_cast<std::size_t>(i)] = detail::nearest_centroid(data.row(i), centroids);
        }
      }
      {
        ScopedSpan span(handle, w, "partial_sums");
        auto& my_sums = partial_sums[wi];
        auto& my_counts = partial_counts[wi];
        std::fill(my_sums.begin(), my_sums.end(), 0.0);
        std::fill(my_counts.begin(), my_counts.end(), 0);
        for (std::int64_t i = begin; i < end; ++i) {
          const auto c = assignments[static_cast<std::size_t>(i)];
          const double* p = data.row(i);
          for (std::int64_t d = 0; d < dims; ++d) my_sums[static_cast<std::size_t>(c * dims + d)] += p[d];
          ++my_counts[static_cast<std::size_t>(c)];
        }
      }
      sync.arrive_and_wait();  // partial sums published

      bool done = false;
      {
        ScopedSpan span(handle, w, "update");
        // Reduce in worker order starting from worker 0's buffer, so a single
        // worker reproduces the serial sums exactly.
        sums = partial_sums[0];
        counts = partial_counts[0];
        for (std::int64_t v = 1; v < workers; ++v) {
          const auto& vs = partial_sums[static_cast<std::size_t>(v)];
          const auto& vc = partial_counts[static_cast<std::size_t>(v)];
          for (std::size_t j = 0; j < kd; ++j) sums[j] += vs[j];
          for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += vc[c];
        }
        const double shift = detail::apply_centroid_update(centroids, sums, counts);
        done = detail::converged(shift, spec.convergence_epsilon);
      }
      sync.arrive_and_wait();  // partial buffers free for reuse
      iterations_done[wi] = it + 1;
      if (done) break;
    }
  });

  handle.set_iterations(iterations_done[0]);
  KMeansRun out;
  out.record = handle.finish();
  out.result.centroids = std::move(replicas[0]);
  out.result.assignments = std::move(assignments);
  out.result.iterations = iterations_done[0];
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo Pi

// Samples are drawn in fixed-size chunks, chunk c from substream c. Workers own
// contiguous chunk ranges, so the sample sequence does not depend on p.
inline constexpr std::int64_t kPiChunkSamples = 1 << 16;

/// Quarter-circle hits among samples [begin, end) of chunk `chunk`.
inline std::int64_t pi_chunk_hits(std::uint64_t seed, std::int64_t chunk, std::int64_t n) {
  auto rng = Xoshiro256ss::substream(seed, static_cast<std::uint64_t>(chunk));
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = rng.uniform01();
    const double y = rng.uniform01();
    hits += (x * x + y * y <= 1.0) ? 1 : 0;
  }
  return hits;
}

struct PiRun {
  double estimate = 0.0;
  std::int64_t hits = 0;
  std::vector<std::int64_t> chunk_hits;
  RunRecord record;
};

/// Finishes `handle`.
inline PiRun monte_carlo_pi(const PiSpec& spec, std::int64_t workers, RunHandle& handle,
                            const RunOptions& opts = {}) {
  spec.validate();
  if (workers < 1) throw Error("monte_carlo_pi: workers must be >= 1");
  if (handle.workers() != workers) throw Error("monte_carlo_pi: handle worker count mismatch");

  const std::int64_t chunks = (spec.n_samples + kPiChunkSamples - 1) / kPiChunkSamples;
  std::vector<std::int64_t> chunk_hits(static_cast<std::size_t>(chunks), 0);

  detail::run_workers(workers, opts, [&](std::int64_t w) {
    const auto [first, last] = block_range(chunks, workers, w);
    ScopedSpan span(handle, w, "sample");
    for (std::int64_t c = first; c < last; ++c) {
      const std::int64_t n = std::min(kPiChunkSamples, spec.n_samples - c * kPiChunkSamples);
      chunk_hits[static_cast<std::size_t>(c)] = pi_chunk_hits(spec.seed, c, n);
    }
  });

  PiRun out;
  handle.set_iterations(1);
  out.record = handle.finish();
  // Tally reduction after the clock stops; integer sums are order-exact.
  for (auto h : chunk_hits) out.hits += h;
  out.chunk_hits = std::move(chunk_hits);
  out.estimate = 4.0 * static_cast<double>(out.hits) / static_cast<double>(spec.n_samples);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic

/// Each iteration: compute_ms of timed busy work, a barrier, exchange_ms of
/// untimed busy work, another barrier. Expected isogranularity is
/// compute_ms / exchange_ms. Finishes `handle`.
inline RunRecord synthetic_run(const SyntheticSpec& spec, std::int64_t workers, RunHandle& handle,
                               const RunOptions& opts = {}) {
  spec.validate();
  if (workers < 1) throw Error("synthetic_run: workers must be >= 1");
  if (handle.workers() != workers) throw Error("synthetic_run: handle worker count mismatch");
  const std::chrono::duration<double, std::milli> compute(spec.compute_ms_per_worker);
  const std::chrono::duration<double, std::milli> exchange(spec.exchange_ms_per_worker);
  std::barrier sync(static_cast<std::ptrdiff_t>(workers));

  detail::run_workers(workers, opts, [&](std::int64_t w) {
    for (std::int64_t it = 0; it < spec.iterations; ++it) {
      {
        ScopedSpan span(handle, w, "busy");
        detail::busy_wait(compute);
      }
      sync.arrive_and_wait();
      detail::busy_wait(exchange);
      sync.arrive_and_wait();
    }
  });
  handle.set_iterations(spec.iterations);
  return handle.finish();
}

// ---------------------------------------------------------------------------
// Workload templates as carried by experiment plans

using WorkloadSpec = std::variant<KMeansSpec, PiSpec, SyntheticSpec>;

inline std::string workload_id(const WorkloadSpec& w) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KMeansSpec>) return "kmeans";
        else if constexpr (std::is_same_v<T, PiSpec>) return "pi";
        else return "synthetic";
      },
      w);
}

inline void to_json(nlohmann::json& j, const WorkloadSpec& w) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KMeansSpec>) {
          j = {{"kind", "kmeans"},
               {"n_points", s.n_points},
               {"n_clusters", s.n_clusters},
               {"dims", s.dims},
               {"max_iterations", s.max_iterations},
               {"convergence_epsilon", s.convergence_epsilon},
               {"seed", s.seed}};
        } else if constexpr (std::is_same_v<T, PiSpec>) {
          j = {{"kind", "pi"}, {"n_samples", s.n_samples}, {"seed", s.seed}};
        } else {
          j = {{"kind", "synthetic"},
               {"compute_ms_per_worker", s.compute_ms_per_worker},
               {"exchange_ms_per_worker", s.exchange_ms_per_worker},
               {"iterations", s.iterations}};
        }
      },
      w);
}

inline void from_json(const nlohmann::json& j, WorkloadSpec& w) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "kmeans") {
    KMeansSpec s;
    s.n_points = j.value("n_points", s.n_points);
    s.n_clusters = j.value("n_clusters", s.n_clusters);
    s.dims = j.value("dims", s.dims);
    s.max_iterations = j.value("max_iterations", s.max_iterations);
    s.convergence_epsilon = j.value("convergence_epsilon", s.convergence_epsilon);
    s.seed = j.value("seed", s.seed);
    w = s;
  } else if (kind == "pi") {
    PiSpec s;
    s.n_samples = j.value("n_samples", s.n_samples);
    s.seed = j.value("seed", s.seed);
    w = s;
  } else if (kind == "synthetic") {
    SyntheticSpec s;
    s.compute_ms_per_worker = j.value("compute_ms_per_worker", s.compute_ms_per_worker);
    s.exchange_ms_per_worker = j.value("exchange_ms_per_worker", s.exchange_ms_per_worker);
    s.iterations = j.value("iterations", s.iterations);
    w = s;
  } else {
    throw Error("unknown workload kind '" + kind + "'");
  }
}

/// Binds a template to one cell: problem size and seed come from the cell.
/// Synthetic runs ignore the problem size, which is only a label for them.
inline WorkloadSpec instantiate(const WorkloadSpec& tmpl, std::int64_t problem_size,
                                std::uint64_t seed) {
  return std::visit(
      [&](auto s) -> WorkloadSpec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KMeansSpec>) {
          s.n_points = problem_size;
          s.seed = seed;
        } else if constexpr (std::is_same_v<T, PiSpec>) {
          s.n_samples = problem_size;
          s.seed = seed;
        }
        return s;
      },
      tmpl);
}

/// Executes one instrumented run of `spec` on `workers` threads. `dataset`
/// must hold generate_dataset(spec) for K-means and is ignored otherwise.
inline RunRecord execute(const WorkloadSpec& spec, std::int64_t problem_size, std::uint64_t seed,
                         std::int64_t workers, const PointMatrix* dataset,
                         const RunOptions& opts = {}) {
  auto handle = begin_run(workload_id(spec), workers, problem_size, seed);
  return std::visit(
      [&](const auto& s) -> RunRecord {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KMeansSpec>) {
          if (dataset == nullptr) throw Error("execute: K-means run without dataset");
          return kmeans_parallel(s, *dataset, workers, *handle, opts).record;
        } else if constexpr (std::is_same_v<T, PiSpec>) {
          return monte_carlo_pi(s, workers, *handle, opts).record;
        } else {
          return synthetic_run(s, workers, *handle, opts);
        }
      },
      spec);
}

}  // namespace granscale
