#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "dlio/trace.hpp"
#include "support/fixtures.hpp"

using namespace dlio;
using namespace std::chrono_literals;
using dlio::testing::TempDir;
using dlio::testing::make_tier;
using dlio::testing::pattern_bytes;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::uint64_t sum_reads(const Trace& t, std::size_t tier) {
  std::uint64_t s = 0;
  for (const auto& x : t.samples) s += x.read_delta[tier];
  return s;
}

std::uint64_t sum_writes(const Trace& t, std::size_t tier) {
  std::uint64_t s = 0;
  for (const auto& x : t.samples) s += x.write_delta[tier];
  return s;
}

}  // namespace

TEST(Trace, IdleTiersGiveZeroSamples) {
  TempDir dir;
  auto a = make_tier(dir, "hdd");
  auto b = make_tier(dir, "optane");
  auto h = start_trace({a, b}, 100ms);
  std::this_thread::sleep_for(350ms);
  const auto tr = stop_trace(*h);
  ASSERT_GE(tr.samples.size(), 3u);
  for (const auto& s : tr.samples) {
    EXPECT_EQ(s.read_delta, (std::vector<std::uint64_t>{0, 0}));
    EXPECT_EQ(s.write_delta, (std::vector<std::uint64_t>{0, 0}));
  }
}

TEST(Trace, ReadLandsInItsTick) {
  TempDir dir;
  auto t = make_tier(dir, "ssd");
  {
    StorageTier setup("setup", t->root());
    setup.write_file("blob", pattern_bytes(10u << 20));
  }
  const auto dt = 200ms;
  auto h = start_trace({t}, dt);
  // Middle of tick 2.
  std::this_thread::sleep_until(h->start_time() + 2 * dt + dt / 4);
  t->read_file("blob");
  std::this_thread::sleep_until(h->start_time() + 4 * dt + dt / 2);
  const auto tr = h->stop();
  ASSERT_GE(tr.samples.size(), 5u);
  std::uint64_t window = 0;
  for (const auto& s : tr.samples) {
    if (s.t >= 1 && s.t <= 3) window += s.read_delta[0];
    else EXPECT_EQ(s.read_delta[0], 0u) << "tick " << s.t;
  }
  EXPECT_EQ(window, 10u << 20);
  EXPECT_EQ(tr.samples[2].read_delta[0], 10u << 20);
}

TEST(Trace, CsvHasTwoColumnsPerTier) {
  TempDir dir;
  auto a = make_tier(dir, "hdd");
  auto b = make_tier(dir, "optane");
  auto h = start_trace({a, b}, 50ms);
  a->write_file("x", pattern_bytes(100));
  std::this_thread::sleep_for(120ms);
  const auto tr = h->stop();
  write_trace_csv(tr, dir / "trace.csv");
  const auto lines = read_lines(dir / "trace.csv");
  ASSERT_EQ(lines.size(), tr.samples.size() + 1);
  EXPECT_EQ(lines[0], "t,hdd_read,hdd_write,optane_read,optane_write");
  for (const auto& l : lines) EXPECT_EQ(std::count(l.begin(), l.end(), ','), 4);
}

TEST(Trace, SampleCountTracksDuration) {
  TempDir dir;
  auto a = make_tier(dir, "hdd");
  const auto dt = 100ms;
  const int n = 5;
  auto h = start_trace({a}, dt);
  std::this_thread::sleep_until(h->start_time() + n * dt + dt / 2);
  const auto tr = h->stop();
  EXPECT_TRUE(tr.samples.size() == n || tr.samples.size() == n + 1) << tr.samples.size();
  for (std::size_t i = 0; i < tr.samples.size(); ++i) EXPECT_EQ(tr.samples[i].t, i);
}

TEST(Trace, ConservationUnderConcurrentTraffic) {
  TempDir dir;
  auto a = make_tier(dir, "hdd");
  auto b = make_tier(dir, "optane");
  for (int i = 0; i < 4; ++i) a->write_file("seed" + std::to_string(i), pattern_bytes(300000, i));
  const auto before_a = a->snapshot_counters();
  const auto before_b = b->snapshot_counters();
  auto h = start_trace({a, b}, 20ms);
  std::vector<std::thread> ws;
  for (int w = 0; w < 3; ++w)
    ws.emplace_back([&, w] {
      for (int i = 0; i < 40; ++i) {
        a->read_file("seed" + std::to_string(i % 4));
        b->write_file("out" + std::to_string(w), pattern_bytes(10000 + i * 37, i));
      }
    });
  for (auto& w : ws) w.join();
  const auto tr = h->stop();
  const auto after_a = a->snapshot_counters();
  const auto after_b = b->snapshot_counters();
  EXPECT_EQ(sum_reads(tr, 0), after_a.read_bytes - before_a.read_bytes);
  EXPECT_EQ(sum_writes(tr, 0), after_a.write_bytes - before_a.write_bytes);
  EXPECT_EQ(sum_reads(tr, 1), after_b.read_bytes - before_b.read_bytes);
  EXPECT_EQ(sum_writes(tr, 1), after_b.write_bytes - before_b.write_bytes);
  EXPECT_EQ(tr.last[1].write_bytes - tr.first[1].write_bytes, sum_writes(tr, 1));
}

TEST(Trace, StopIsIdempotent) {
  TempDir dir;
  auto a = make_tier(dir, "hdd");
  auto h = start_trace({a}, 50ms);
  std::this_thread::sleep_for(80ms);
  const auto first = h->stop();
  a->write_file("late", pattern_bytes(10));
  std::this_thread::sleep_for(80ms);
  const auto second = h->stop();
  ASSERT_EQ(first.samples.size(), second.samples.size());
  EXPECT_EQ(sum_writes(second, 0), 0u);
}

TEST(Trace, MarksLandOnTicks) {
  TempDir dir;
  auto a = make_tier(dir, "hdd");
  const auto dt = 100ms;
  auto h = start_trace({a}, dt);
  std::this_thread::sleep_until(h->start_time() + 3 * dt + dt / 2);
  h->mark("ckpt-20");
  const auto tr = h->stop();
  ASSERT_EQ(tr.marks.size(), 1u);
  EXPECT_EQ(tr.marks[0].label, "ckpt-20");
  EXPECT_EQ(tr.marks[0].tick, 3u);
}

TEST(Trace, RejectsBadArguments) {
  TempDir dir;
  auto a = make_tier(dir, "hdd");
  EXPECT_THROW(start_trace({}, 1s), InvalidArgument);
  EXPECT_THROW(start_trace({a}, 0ms), InvalidArgument);
}

TEST(TraceCsv, EmptyTraceIsHeaderOnly) {
  TempDir dir;
  Trace tr;
  tr.labels = {"ssd"};
  write_trace_csv(tr, dir / "empty.csv");
  EXPECT_EQ(read_lines(dir / "empty.csv"), (std::vector<std::string>{"t,ssd_read,ssd_write"}));
}

TEST(TraceCsv, SingleSampleLine) {
  TempDir dir;
  Trace tr;
  tr.labels = {"ssd"};
  tr.samples.push_back({0, {100}, {50}});
  write_trace_csv(tr, dir / "one.csv");
  EXPECT_EQ(read_lines(dir / "one.csv"), (std::vector<std::string>{"t,ssd_read,ssd_write", "0,100,50"}));
}
