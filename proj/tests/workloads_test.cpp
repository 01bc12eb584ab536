// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "granscale/metrics.hpp"
#include "granscale/workloads.hpp"

namespace gs = granscale;

namespace {

gs::KMeansSpec small_spec(std::uint64_t seed, std::int64_t n = 1000, std::int64_t k = 4, std::int64_t dims = 2) {
  gs::KMeansSpec s;
  s.n_points = n;
  s.n_clusters = k;
  s.dims = dims;
  s.max_iterations = 10;
  s.convergence_epsilon = 0.0;
  s.seed = seed;
  return s;
}

// Independent nearest-centroid search used as an oracle.
std::int32_t brute_force_nearest(const gs::PointMatrix& data, std::int64_t i, const gs::PointMatrix& c) {
  std::int32_t best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::int64_t j = 0; j < c.rows; ++j) {
    double d = 0.0;
    for (std::int64_t k = 0; k < data.dims; ++k) d += std::pow(data.row(i)[k] - c.row(j)[k], 2);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int32_t>(j);
    }
  }
  return best;
}

bool is_documented_phase(const std::string& label) {
  return std::find(gs::kPhaseLabels.begin(), gs::kPhaseLabels.end(), label) != gs::kPhaseLabels.end();
}

}  // namespace

TEST(BlockRange, CoversEveryItemOnceWithBalancedSizes) {
  for (std::int64_t n : {1, 7, 100, 1001, 983040}) {
    for (std::int64_t p : {1, 2, 3, 4, 7, 8, 64}) {
      if (p > n) continue;
      std::int64_t next = 0;
      std::int64_t lo = n, hi = 0;
      for (std::int64_t w = 0; w < p; ++w) {
        const auto [b, e] = gs::block_range(n, p, w);
        EXPECT_EQ(b, next);
        next = e;
        lo = std::min(lo, e - b);
        hi = std::max(hi, e - b);
        // First n mod p blocks carry the extra item.
        EXPECT_EQ(e - b, n / p + (w < n % p ? 1 : 0));
      }
      EXPECT_EQ(next, n);
      EXPECT_LE(hi - lo, 1);
    }
  }
}

TEST(GenerateDataset, DeterministicForSeed) {
  const auto spec = small_spec(42);
  EXPECT_EQ(gs::generate_dataset(spec), gs::generate_dataset(spec));
  EXPECT_NE(gs::generate_dataset(spec), gs::generate_dataset(small_spec(43)));
}

TEST(GenerateDataset, OnePointPerBlobAtMinimalSize) {
  const auto data = gs::generate_dataset(small_spec(1, 4, 4, 2));
  EXPECT_EQ(data.rows, 4);
  EXPECT_EQ(data.dims, 2);
  // Points of distinct blobs: far apart compared to the unit noise.
  for (std::int64_t i = 0; i < 4; ++i) {
    for (std::int64_t j = i + 1; j < 4; ++j) {
      const double d = std::hypot(data.row(i)[0] - data.row(j)[0], data.row(i)[1] - data.row(j)[1]);
      EXPECT_GT(d, 10.0);
    }
  }
}

TEST(GenerateDataset, PublishedProblemSizeShape) {
  auto spec = small_spec(42, 983040, 1024, 8);
  const auto data = gs::generate_dataset(spec);
  EXPECT_EQ(data.rows, 983040);
  EXPECT_EQ(data.dims, 8);
  EXPECT_EQ(data.values.size(), 983040u * 8u);
}

TEST(KMeansSpec, Validation) {
  EXPECT_THROW(small_spec(1, 3, 4).validate(), gs::InvariantError);
  EXPECT_THROW(small_spec(1, 10, 4, 0).validate(), gs::InvariantError);
}

TEST(KMeansSerial, SquareCornersAreAFixedPoint) {
  gs::KMeansSpec spec = small_spec(5, 4, 4, 2);
  spec.convergence_epsilon = 1e-9;
  const gs::PointMatrix data{4, 2, {0, 0, 0, 1, 1, 0, 1, 1}};
  const auto r = gs::kmeans_serial(spec, data);
  EXPECT_EQ(r.iterations, 1);
  std::vector<std::vector<double>> got, want;
  for (std::int64_t c = 0; c < 4; ++c) got.push_back({r.centroids.row(c)[0], r.centroids.row(c)[1]});
  for (std::int64_t i = 0; i < 4; ++i) want.push_back({data.row(i)[0], data.row(i)[1]});
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  EXPECT_EQ(got, want);
}

TEST(KMeansSerial, SingleClusterIsTheMean) {
  auto spec = small_spec(9, 200, 1, 3);
  spec.max_iterations = 1;
  const auto data = gs::generate_dataset(spec);
  const auto r = gs::kmeans_serial(spec, data);
  for (std::int64_t d = 0; d < 3; ++d) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < data.rows; ++i) mean += data.row(i)[d];
    mean /= static_cast<double>(data.rows);
    EXPECT_NEAR(r.centroids.row(0)[d], mean, 1e-9);
  }
}

TEST(KMeansSerial, AssignmentsMatchBruteForce) {
  // With the 10-iteration cap the final assignment pass is checked against
  // the centroids it used; run to convergence it must also hold for the
  // returned centroids (seed 42 settles after 13 iterations).
  auto spec = small_spec(42);
  const auto data = gs::generate_dataset(spec);
  gs::PointMatrix last_seen;
  const auto capped = gs::kmeans_serial(spec, data, [&](const gs::PointMatrix& c, const std::vector<std::int32_t>&) {
    last_seen = c;
  });
  EXPECT_EQ(capped.iterations, 10);
  for (std::int64_t i = 0; i < data.rows; ++i) {
    EXPECT_EQ(capped.assignments[static_cast<std::size_t>(i)], brute_force_nearest(data, i, last_seen)) << i;
  }

  spec.max_iterations = 100;
  spec.convergence_epsilon = 1e-12;
  const auto r = gs::kmeans_serial(spec, data);
  EXPECT_LT(r.iterations, 100);
  for (std::int64_t i = 0; i < data.rows; ++i) {
    EXPECT_EQ(r.assignments[static_cast<std::size_t>(i)], brute_force_nearest(data, i, r.centroids)) << i;
  }
}

TEST(KMeansSerial, ObjectiveNeverIncreases) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    // Overlapping blobs (few centers, many clusters) so Lloyd keeps moving.
    auto spec = small_spec(seed, 3000, 12, 2);
    spec.max_iterations = 30;
    auto blob_spec = spec;
    blob_spec.n_clusters = 3;
    const auto data = gs::generate_dataset(blob_spec);
    std::vector<double> objective;
    gs::kmeans_serial(spec, data, [&](const gs::PointMatrix& c, const std::vector<std::int32_t>& a) {
      objective.push_back(gs::kmeans_objective(data, c, a));
    });
    ASSERT_GE(objective.size(), 2u);
    for (std::size_t t = 1; t < objective.size(); ++t) {
      EXPECT_LE(objective[t], objective[t - 1] * (1 + 1e-12)) << "seed " << seed << " iteration " << t;
    }
  }
}

TEST(KMeansParallel, SingleWorkerIsBitIdenticalToSerial) {
  for (std::uint64_t seed : {42u, 7u, 1234u}) {
    const auto spec = small_spec(seed, 5000, 16, 8);
    const auto data = gs::generate_dataset(spec);
    const auto serial = gs::kmeans_serial(spec, data);
    auto h = gs::begin_run("kmeans", 1, spec.n_points, seed);
    const auto par = gs::kmeans_parallel(spec, data, 1, *h);
    EXPECT_EQ(par.result.centroids, serial.centroids);
    EXPECT_EQ(par.result.assignments, serial.assignments);
    EXPECT_EQ(par.result.iterations, serial.iterations);
  }
}

TEST(KMeansParallel, FourWorkersMatchSerialWithinTolerance) {
  const auto spec = small_spec(42, 5000, 16, 8);
  const auto data = gs::generate_dataset(spec);
  const auto serial = gs::kmeans_serial(spec, data);
  auto h = gs::begin_run("kmeans", 4, spec.n_points, 42);
  const auto par = gs::kmeans_parallel(spec, data, 4, *h);
  ASSERT_EQ(par.result.centroids.values.size(), serial.centroids.values.size());
  for (std::size_t i = 0; i < serial.centroids.values.size(); ++i) {
    EXPECT_NEAR(par.result.centroids.values[i], serial.centroids.values[i], 1e-6);
  }
  EXPECT_EQ(par.result.assignments, serial.assignments);
}

TEST(KMeansParallel, RecordStructure) {
  const auto spec = small_spec(3, 4000, 8, 4);
  const auto data = gs::generate_dataset(spec);
  auto h = gs::begin_run("kmeans", 4, spec.n_points, 3);
  const auto run = gs::kmeans_parallel(spec, data, 4, *h);
  const auto& rec = run.record;
  EXPECT_EQ(rec.workers, 4);
  EXPECT_EQ(rec.iterations, spec.max_iterations);
  EXPECT_FALSE(rec.incomplete_worker_coverage);
  for (std::int64_t w = 0; w < 4; ++w) {
    const auto n = std::count_if(rec.spans.begin(), rec.spans.end(), [w](const gs::Span& s) { return s.worker_id == w; });
    EXPECT_EQ(n, 3 * rec.iterations);
  }
  for (const auto& s : rec.spans) EXPECT_TRUE(is_documented_phase(s.phase_label)) << s.phase_label;
  EXPECT_NO_THROW(gs::aggregate(rec));
  EXPECT_TRUE(h->finished());
}

TEST(KMeansParallel, UnderfilledPartition) {
  const auto spec = small_spec(1, 4, 2, 2);
  const auto data = gs::generate_dataset(spec);
  auto h = gs::begin_run("kmeans", 5, 4, 1);
  EXPECT_THROW(gs::kmeans_parallel(spec, data, 5, *h), gs::Error);
}

TEST(MonteCarloPi, SingleSampleIsExtreme) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto h = gs::begin_run("pi", 1, 1, seed);
    const auto r = gs::monte_carlo_pi({1, seed}, 1, *h);
    EXPECT_TRUE(r.estimate == 0.0 || r.estimate == 4.0);
    // Inspect the seeded stream directly to know which one to expect.
    auto rng = gs::Xoshiro256ss::substream(seed, 0);
    const double x = rng.uniform01(), y = rng.uniform01();
    EXPECT_EQ(r.estimate, x * x + y * y <= 1.0 ? 4.0 : 0.0);
  }
}

TEST(MonteCarloPi, IndependentOfWorkerCount) {
  const gs::PiSpec spec{10'000'000, 42};
  std::vector<gs::PiRun> runs;
  for (std::int64_t p : {1, 2, 4}) {
    auto h = gs::begin_run("pi", p, spec.n_samples, spec.seed);
    runs.push_back(gs::monte_carlo_pi(spec, p, *h));
    EXPECT_FALSE(runs.back().record.incomplete_worker_coverage);
  }
  for (const auto& r : runs) {
    EXPECT_EQ(r.chunk_hits, runs[0].chunk_hits);
    EXPECT_EQ(r.estimate, runs[0].estimate);
  }
  // Binomial sd at 1e7 samples is about 5.2e-4.
  EXPECT_LT(std::abs(runs[0].estimate - std::numbers::pi), 0.01);
}

TEST(MonteCarloPi, MoreWorkersThanChunksStillCoverEveryWorker) {
  auto h = gs::begin_run("pi", 4, 1000, 1);
  const auto r = gs::monte_carlo_pi({1000, 1}, 4, *h);
  EXPECT_FALSE(r.record.incomplete_worker_coverage);
  for (const auto& s : r.record.spans) EXPECT_EQ(s.phase_label, "sample");
}

namespace {
gs::GranularityMetrics synthetic_metrics(double compute_ms, double exchange_ms, std::int64_t iters, std::int64_t p) {
  auto h = gs::begin_run("synthetic", p, 1, 0);
  const auto rec = gs::synthetic_run({compute_ms, exchange_ms, iters}, p, *h);
  for (const auto& s : rec.spans) EXPECT_EQ(s.phase_label, "busy");
  return gs::granularity_metrics(gs::aggregate(rec));
}
}  // namespace

TEST(Synthetic, GranularityTracksConstruction) {
  const auto m = synthetic_metrics(90.0, 10.0, 10, 4);
  EXPECT_NEAR(m.granularity, 9.0, 0.15 * 9.0);
}

TEST(Synthetic, EqualSplitHalvesEfficiency) {
  const auto m = synthetic_metrics(10.0, 10.0, 10, 2);
  EXPECT_NEAR(m.efficiency, 0.5, 0.08);
}

TEST(Synthetic, SerialWithoutExchangeIsFullyEfficient) {
  const auto m = synthetic_metrics(20.0, 1e-6, 5, 1);
  EXPECT_LT(m.overhead, 1e-3);
  EXPECT_GT(m.efficiency, 0.98);
}

TEST(Synthetic, Validation) {
  EXPECT_THROW(gs::SyntheticSpec({0.0, 1.0, 1}).validate(), gs::InvariantError);
  EXPECT_THROW(gs::SyntheticSpec({1.0, 0.0, 1}).validate(), gs::InvariantError);
}

TEST(WorkloadSpecJson, RoundTrip) {
  for (const gs::WorkloadSpec& w :
       {gs::WorkloadSpec{small_spec(11)}, gs::WorkloadSpec{gs::PiSpec{123, 9}}, gs::WorkloadSpec{gs::SyntheticSpec{3, 4, 5}}}) {
    const nlohmann::json j = w;
    const auto back = j.get<gs::WorkloadSpec>();
    EXPECT_EQ(nlohmann::json(back), j);
  }
  EXPECT_THROW(nlohmann::json({{"kind", "fft"}}).get<gs::WorkloadSpec>(), gs::Error);
}
