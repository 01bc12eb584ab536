// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "granscale/measurement.hpp"
#include "granscale/workloads.hpp"

namespace gs = granscale;

TEST(BeginRun, FreshHandle) {
  auto h = gs::begin_run("kmeans", 4, 983040, 42);
  EXPECT_EQ(h->span_count(), 0u);
  EXPECT_EQ(h->workers(), 4);
  auto pi = gs::begin_run("pi", 1, 10000000, 7);
  EXPECT_EQ(pi->workers(), 1);
}

TEST(BeginRun, RejectsBadArguments) {
  EXPECT_THROW(gs::begin_run("synthetic", 0, 10, 1), gs::Error);
  EXPECT_THROW(gs::begin_run("synthetic", 1, 0, 1), gs::Error);
}

TEST(RecordSpan, AppendsAndValidates) {
  auto h = gs::begin_run("kmeans", 4, 100, 1);
  gs::record_span(*h, 0, 0.010, "assign");
  EXPECT_EQ(h->span_count(), 1u);
  EXPECT_THROW(gs::record_span(*h, 99, 0.010, "assign"), gs::Error);
  EXPECT_THROW(gs::record_span(*h, -1, 0.010, "assign"), gs::Error);
  gs::record_span(*h, 0, 0.0, "assign");
  EXPECT_EQ(h->span_count(), 2u);
  EXPECT_THROW(gs::record_span(*h, 0, -1.0, "assign"), gs::Error);
}

TEST(FinishRun, CountsSpansAndFreezes) {
  auto h = gs::begin_run("synthetic", 4, 1, 1);
  for (int w = 0; w < 4; ++w) {
    for (int k = 0; k < 3; ++k) gs::record_span(*h, w, 0.0, "busy");
  }
  const auto r = gs::finish_run(*h);
  EXPECT_EQ(r.spans.size(), 12u);
  EXPECT_FALSE(r.incomplete_worker_coverage);
  EXPECT_GT(r.wall_clock, 0.0);
  EXPECT_FALSE(r.started_at.empty());
  EXPECT_THROW(gs::finish_run(*h), gs::Error);
  EXPECT_THROW(gs::record_span(*h, 0, 0.0, "busy"), gs::Error);
}

TEST(FinishRun, FlagsMissingWorker) {
  auto h = gs::begin_run("synthetic", 2, 1, 1);
  gs::record_span(*h, 0, 0.0, "busy");
  const auto r = gs::finish_run(*h);
  EXPECT_TRUE(r.incomplete_worker_coverage);
  EXPECT_THROW(gs::aggregate(r), gs::Error);
}

TEST(FinishRun, RunIdsAreUnique) {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) {
    auto h = gs::begin_run("x", 1, 1, 1);
    gs::record_span(*h, 0, 0.0, "busy");
    ids.push_back(gs::finish_run(*h).run_id);
  }
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
}

namespace {
gs::RunRecord record_with(std::int64_t workers, double wall, std::vector<gs::Span> spans) {
  gs::RunRecord r;
  r.workers = workers;
  r.wall_clock = wall;
  r.spans = std::move(spans);
  return r;
}
}  // namespace

TEST(Aggregate, Examples) {
  auto b = gs::aggregate(record_with(2, 2.5, {{0, 2.0, "busy"}, {1, 2.0, "busy"}}));
  EXPECT_EQ(b.workers(), 2);
  EXPECT_EQ(b.wall_clock(), 2.5);
  EXPECT_EQ(b.total_comp(), 4.0);

  b = gs::aggregate(record_with(1, 5.0, {{0, 2.0, "a"}, {0, 3.0, "b"}}));
  EXPECT_EQ(b.total_comp(), 5.0);

  EXPECT_THROW(gs::aggregate(record_with(4, 10.0, {{0, 11.0, "a"}, {1, 10.0, "a"}, {2, 10.0, "a"}, {3, 10.0, "a"}})),
               gs::InvariantError);
}

TEST(Aggregate, OrderIndependent) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dur(0.0, 0.01);
  std::vector<gs::Span> spans;
  for (int w = 0; w < 8; ++w) {
    for (int k = 0; k < 50; ++k) spans.push_back({w, dur(rng), "busy"});
  }
  const double reference = gs::aggregate(record_with(8, 1.0, spans)).total_comp();
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(spans.begin(), spans.end(), rng);
    EXPECT_EQ(gs::aggregate(record_with(8, 1.0, spans)).total_comp(), reference);
  }
}

TEST(RecordSpan, ConcurrentSubmissionIsLossless) {
  constexpr int kWorkers = 8;
  constexpr int kPerWorker = 5000;
  constexpr double kDuration = 0.25e-6;  // exact binary fraction sum not required
  auto h = gs::begin_run("synthetic", kWorkers, 1, 1);
  {
    std::vector<std::jthread> threads;
    for (int w = 0; w < kWorkers; ++w) {
      threads.emplace_back([&, w] {
        for (int k = 0; k < kPerWorker; ++k) gs::record_span(*h, w, kDuration, "busy");
      });
    }
  }
  const auto r = gs::finish_run(*h);
  EXPECT_EQ(r.spans.size(), static_cast<std::size_t>(kWorkers * kPerWorker));
  for (int w = 0; w < kWorkers; ++w) {
    EXPECT_EQ(std::count_if(r.spans.begin(), r.spans.end(), [w](const gs::Span& s) { return s.worker_id == w; }),
              kPerWorker);
  }
  // aggregate() runs on a record whose wall time is long enough to hold the sum.
  auto padded = r;
  padded.wall_clock = 1.0;
  EXPECT_NEAR(gs::aggregate(padded).total_comp(), kWorkers * kPerWorker * kDuration, 1e-12);
}

TEST(ScopedSpan, TimerFidelity) {
  // A busy region of known length measures within max(1 ms, 5%).
  for (double target_ms : {5.0, 20.0, 50.0}) {
    auto h = gs::begin_run("synthetic", 1, 1, 1);
    {
      gs::ScopedSpan span(*h, 0, "busy");
      gs::detail::busy_wait(std::chrono::duration<double, std::milli>(target_ms));
    }
    const auto r = gs::finish_run(*h);
    ASSERT_EQ(r.spans.size(), 1u);
    const double measured_ms = r.spans[0].duration * 1e3;
    EXPECT_NEAR(measured_ms, target_ms, std::max(1.0, 0.05 * target_ms));
    EXPECT_LE(r.spans[0].duration, r.wall_clock);
  }
}

TEST(RunRecordJson, CarriesDocumentedFields) {
  auto h = gs::begin_run("kmeans", 2, 100, 42);
  gs::record_span(*h, 0, 0.5, "assign");
  gs::record_span(*h, 1, 0.25, "update");
  h->set_iterations(3);
  const auto r = gs::finish_run(*h);
  const nlohmann::json j = r;
  for (const char* key : {"run_id", "workload_id", "workers", "problem_size", "seed", "wall_clock_s", "iterations",
                          "started_at", "spans"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["spans"][1]["worker"], 1);
  EXPECT_EQ(j["spans"][1]["duration_s"], 0.25);
  EXPECT_EQ(j["spans"][1]["phase"], "update");

  const auto back = j.get<gs::RunRecord>();
  EXPECT_EQ(back.run_id, r.run_id);
  EXPECT_EQ(back.spans, r.spans);
  EXPECT_EQ(back.wall_clock, r.wall_clock);
  EXPECT_EQ(back.iterations, 3);
  EXPECT_FALSE(back.incomplete_worker_coverage);
}
