#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "dlio/pipeline.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace dlio;
using dlio::testing::seconds_since;

namespace {

std::vector<std::pair<std::string, std::uint32_t>> slices(std::size_t n) {
  std::vector<std::pair<std::string, std::uint32_t>> v;
  for (std::size_t i = 0; i < n; ++i) v.emplace_back("f" + std::to_string(i), static_cast<std::uint32_t>(i % 7));
  return v;
}

template <class T>
std::vector<T> drain(Dataset<T>& ds) {
  std::vector<T> out;
  while (auto v = ds.next()) out.push_back(std::move(*v));
  return out;
}

std::vector<std::uint64_t> seq_ids(const std::vector<Element>& v) {
  std::vector<std::uint64_t> ids;
  for (const auto& e : v) ids.push_back(e.seq_id);
  return ids;
}

std::vector<std::uint64_t> seq_ids(const std::vector<Batch<Element>>& v) {
  std::vector<std::uint64_t> ids;
  for (const auto& b : v)
    for (const auto& e : b.elements) ids.push_back(e.seq_id);
  return ids;
}

std::uint32_t label_of(const Element& e) { return std::get<std::uint32_t>(e.label); }

}  // namespace

TEST(FromSlices, YieldsInOrder) {
  auto ds = from_slices({{"a", 0}, {"b", 1}, {"c", 2}});
  const auto out = drain(ds);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].path, "a");
  EXPECT_EQ(out[1].path, "b");
  EXPECT_EQ(out[2].path, "c");
  EXPECT_EQ(seq_ids(out), (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(label_of(out[2]), 2u);
}

TEST(FromSlices, EmptyAndLarge) {
  auto empty = from_slices({});
  EXPECT_FALSE(empty.next());
  auto big = from_slices(slices(16384));
  EXPECT_EQ(drain(big).size(), 16384u);
}

TEST(Shuffle, BufferOfOneIsFifo) {
  auto ds = from_slices(slices(50)).shuffle(1, 99);
  const auto ids = seq_ids(drain(ds));
  std::vector<std::uint64_t> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(ids, expect);
}

TEST(Shuffle, PermutationAndSeedDeterminism) {
  for (std::size_t buffer : {2u, 7u, 64u, 1000u}) {
    auto a = from_slices(slices(300)).shuffle(buffer, 5);
    auto b = from_slices(slices(300)).shuffle(buffer, 5);
    auto c = from_slices(slices(300)).shuffle(buffer, 6);
    auto ia = seq_ids(drain(a));
    const auto ib = seq_ids(drain(b));
    const auto ic = seq_ids(drain(c));
    EXPECT_EQ(ia, ib);
    EXPECT_NE(ia, ic);
    std::sort(ia.begin(), ia.end());
    for (std::size_t i = 0; i < ia.size(); ++i) ASSERT_EQ(ia[i], i);
  }
}

TEST(Shuffle, FullBufferIsUniform) {
  std::vector<std::size_t> counts(24, 0);
  for (std::uint64_t trial = 0; trial < 10000; ++trial) {
    auto ds = from_slices(slices(4)).shuffle(4, trial);
    std::vector<std::size_t> perm;
    while (auto e = ds.next()) perm.push_back(e->seq_id);
    ++counts[oracle::permutation_rank(perm)];
  }
  const double p = 1.0 / 24, sigma = std::sqrt(10000 * p * (1 - p));
  for (auto c : counts) EXPECT_NEAR(static_cast<double>(c), 10000 * p, 3 * sigma);
  EXPECT_GT(oracle::chi_square_uniform(counts).p_value, 0.001);
}

TEST(Shuffle, ZeroBufferRejected) { EXPECT_THROW(from_slices(slices(3)).shuffle(0, 1), InvalidArgument); }

TEST(MapParallel, IdentityWithOneWorker) {
  auto ds = from_slices(slices(20)).map_parallel([](Element e) { return e; }, 1);
  EXPECT_EQ(seq_ids(drain(ds)), seq_ids([] {
              auto s = from_slices(slices(20));
              return drain(s);
            }()));
}

TEST(MapParallel, PreservesOrderWithEightWorkers) {
  auto ds = from_slices(slices(500)).map_parallel(
      [](Element e) {
        // Uneven cost so completion order differs from input order.
        std::this_thread::sleep_for(std::chrono::microseconds((e.seq_id * 7919) % 300));
        e.label = label_of(e) + 1;
        return e;
      },
      8);
  const auto out = drain(ds);
  ASSERT_EQ(out.size(), 500u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    ASSERT_EQ(out[i].seq_id, i);
    ASSERT_EQ(label_of(out[i]), i % 7 + 1);
  }
}

TEST(MapParallel, EpochTimeScalesWithParallelism) {
  for (std::size_t p : {1u, 2u, 4u, 8u}) {
    auto ds = from_slices(slices(256)).map_parallel(
        [](Element e) {
          std::this_thread::sleep_for(std::chrono::milliseconds(10));
          return e;
        },
        p);
    const auto t0 = Clock::now();
    EXPECT_EQ(drain(ds).size(), 256u);
    const double expect = oracle::parallel_epoch(0.010, 256, p);
    EXPECT_NEAR(seconds_since(t0), expect, 0.25 * expect) << "parallelism " << p;
  }
}

TEST(MapParallel, FailureCarriesSeqId) {
  auto ds = from_slices(slices(10)).map_parallel(
      [](Element e) {
        if (e.seq_id == 3) throw std::runtime_error("boom");
        return e;
      },
      4);
  for (int i = 0; i < 3; ++i) ASSERT_TRUE(ds.next());
  try {
    ds.next();
    FAIL() << "expected ElementError";
  } catch (const ElementError& e) {
    EXPECT_EQ(e.seq_id(), 3u);
    EXPECT_EQ(e.cause(), "boom");
  }
  // The stream continues after an element failure.
  EXPECT_EQ(ds.next()->seq_id, 4u);
}

TEST(MapParallel, ZeroParallelismRejected) {
  EXPECT_THROW(from_slices(slices(3)).map_parallel([](Element e) { return e; }, 0), InvalidArgument);
}

TEST(IgnoreErrors, DropsFailedElements) {
  auto ds = from_slices(slices(10))
                .map_parallel(
                    [](Element e) {
                      if (e.seq_id == 3) throw std::runtime_error("bad");
                      return e;
                    },
                    3)
                .ignore_errors();
  const auto out = drain(ds);
  EXPECT_EQ(out.size(), 9u);
  EXPECT_EQ(ds.dropped(), 1u);
  for (const auto& e : out) EXPECT_NE(e.seq_id, 3u);
}

TEST(IgnoreErrors, PassThroughWithoutFailures) {
  auto ds = from_slices(slices(10)).map_parallel([](Element e) { return e; }, 2).ignore_errors();
  const auto out = drain(ds);
  EXPECT_EQ(seq_ids(out), (std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(ds.dropped(), 0u);
}

namespace {

// Fails with a non-element error after `n` items.
class BrokenSource final : public Stream<Element> {
 public:
  explicit BrokenSource(std::size_t n) : n_(n) {}
  std::optional<Element> pull() override {
    if (i_ == n_) throw IoError("src", "device gone");
    Element e;
    e.seq_id = i_++;
    return e;
  }

 private:
  std::size_t n_, i_ = 0;
};

}  // namespace

TEST(IgnoreErrors, NonElementFailuresStillPropagate) {
  Dataset<Element> ds(std::make_unique<BrokenSource>(2), std::make_shared<PipelineStats>(), {"Broken"});
  auto chain = std::move(ds).ignore_errors();
  EXPECT_TRUE(chain.next());
  EXPECT_TRUE(chain.next());
  EXPECT_THROW(chain.next(), IoError);
}

TEST(BatchStage, PaperCounts) {
  auto a = from_slices(slices(16384)).batch(64);
  const auto ba = drain(a);
  EXPECT_EQ(ba.size(), 256u);
  for (const auto& b : ba) ASSERT_EQ(b.size(), 64u);

  auto c = from_slices(slices(9144)).batch(64, true);
  const auto bc = drain(c);
  EXPECT_EQ(bc.size(), 142u);
  std::size_t images = 0;
  for (const auto& b : bc) images += b.size();
  EXPECT_EQ(images, 9088u);
}

TEST(BatchStage, RemainderKeptUnlessDropped) {
  auto ds = from_slices(slices(5)).batch(2, false);
  const auto out = drain(ds);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].size(), 2u);
  EXPECT_EQ(out[1].size(), 2u);
  EXPECT_EQ(out[2].size(), 1u);
  EXPECT_EQ(out[2].batch_index, 2u);
  EXPECT_THROW(from_slices(slices(5)).batch(0), InvalidArgument);
}

TEST(BatchStage, ErrorsTaggedWithBatchIndex) {
  auto ds = from_slices(slices(10))
                .map_parallel(
                    [](Element e) {
                      if (e.seq_id == 5) throw std::runtime_error("bad");
                      return e;
                    },
                    2)
                .batch(4);
  EXPECT_TRUE(ds.next());
  try {
    ds.next();
    FAIL();
  } catch (const ElementError& e) {
    EXPECT_EQ(e.seq_id(), 5u);
    EXPECT_EQ(e.batch_index(), 1u);
  }
  // The partial batch keeps the elements gathered before the failure.
  const auto b = ds.next();
  ASSERT_TRUE(b);
  EXPECT_EQ(seq_ids(std::vector<Batch<Element>>{*b}), (std::vector<std::uint64_t>{4, 6, 7, 8}));
}

TEST(Next, EndOfEpochIsSticky) {
  auto ds = from_slices(slices(6)).batch(2).prefetch(1);
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(ds.next());
  EXPECT_FALSE(ds.next());
  EXPECT_FALSE(ds.next());
  EXPECT_FALSE(ds.next());
}

TEST(Next, FullCorpusIn256Calls) {
  auto ds = from_slices(slices(16384)).batch(64).prefetch(2);
  std::size_t calls = 0, images = 0;
  while (auto b = ds.next()) {
    ++calls;
    images += b->size();
  }
  EXPECT_EQ(calls, 256u);
  EXPECT_EQ(images, 16384u);
}

TEST(Prefetch, DepthZeroIsSynchronous) {
  std::atomic<std::thread::id> producer_thread;
  auto ds = from_vector(std::vector<int>{1, 2, 3}).prefetch(0);
  EXPECT_EQ(ds.stages().back(), "Prefetch(0)");
  EXPECT_EQ(drain(ds), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(ds.prefetch_peak(), 0u);
}

TEST(Prefetch, OccupancyNeverExceedsDepth) {
  auto ds = from_slices(slices(200)).batch(2).prefetch(4);
  std::size_t max_seen = 0;
  while (auto b = ds.next()) {
    max_seen = std::max(max_seen, ds.prefetch_occupancy());
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  EXPECT_LE(max_seen, 4u);
  EXPECT_LE(ds.prefetch_peak(), 4u);
  EXPECT_GE(ds.prefetch_peak(), 1u);
}

TEST(Prefetch, OverlapsProducerAndConsumer) {
  // Scaled-down overlap fixture: P = 20 ms, C = 40 ms, 20 items.
  const double p = 0.020, c = 0.040;
  const std::size_t n = 20;
  auto run = [&](std::size_t depth) {
    auto ds = from_slices(slices(n))
                  .map_parallel(
                      [p](Element e) {
                        std::this_thread::sleep_for(std::chrono::duration<double>(p));
                        return e;
                      },
                      1)
                  .prefetch(depth);
    const auto t0 = Clock::now();
    while (ds.next()) std::this_thread::sleep_for(std::chrono::duration<double>(c));
    return seconds_since(t0);
  };
  const double sync = run(0), overlapped = run(1);
  EXPECT_NEAR(sync, oracle::synchronous_epoch(p, c, n), 0.15 * oracle::synchronous_epoch(p, c, n));
  EXPECT_NEAR(overlapped, oracle::overlapped_epoch(p, c, n), 0.15 * oracle::overlapped_epoch(p, c, n));
  EXPECT_LT(overlapped, sync);
}

TEST(Prefetch, ErrorsSurfaceInOrder) {
  auto ds = from_slices(slices(6))
                .map_parallel(
                    [](Element e) {
                      if (e.seq_id == 2) throw std::runtime_error("bad");
                      return e;
                    },
                    2)
                .prefetch(3);
  EXPECT_EQ(ds.next()->seq_id, 0u);
  EXPECT_EQ(ds.next()->seq_id, 1u);
  EXPECT_THROW(ds.next(), ElementError);
  EXPECT_EQ(ds.next()->seq_id, 3u);
}

TEST(Prefetch, DroppedMidEpochJoinsCleanly) {
  for (int i = 0; i < 20; ++i) {
    auto ds = from_slices(slices(1000)).map_parallel([](Element e) { return e; }, 4).batch(8).prefetch(2);
    ds.next();
  }
  SUCCEED();
}

// --- properties over randomly assembled chains -------------------------------

namespace {

struct Chain {
  std::size_t n, shuffle, parallel, batch, depth;
  bool drop;
  std::uint64_t seed;
};

Chain random_chain(std::mt19937& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  return {pick(0, 300), pick(1, 64), pick(1, 6), pick(1, 17), pick(0, 4), pick(0, 1) == 1, rng()};
}

Dataset<Batch<Element>> build(const Chain& c, std::size_t depth) {
  return from_slices(slices(c.n))
      .shuffle(c.shuffle, c.seed)
      .map_parallel(
          [](Element e) {
            e.payload = Bytes(e.seq_id % 5, std::byte{1});
            return e;
          },
          c.parallel)
      .batch(c.batch, c.drop)
      .prefetch(depth);
}

}  // namespace

TEST(PipelineProperties, MultisetDeterminismAndPrefetchTransparency) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const auto c = random_chain(rng);
    auto a = build(c, 0);
    auto b = build(c, c.depth);
    auto d = build(c, c.depth);
    const auto ia = seq_ids(drain(a));
    const auto ib = seq_ids(drain(b));
    const auto id = seq_ids(drain(d));
    EXPECT_EQ(ia, ib) << "prefetch changed content/order, trial " << trial;
    EXPECT_EQ(ib, id) << "non-deterministic order, trial " << trial;

    auto sorted = ia;
    std::sort(sorted.begin(), sorted.end());
    if (!c.drop) {
      ASSERT_EQ(sorted.size(), c.n);
      for (std::size_t i = 0; i < c.n; ++i) ASSERT_EQ(sorted[i], i);
    } else {
      EXPECT_EQ(sorted.size(), c.n / c.batch * c.batch);
      EXPECT_TRUE(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    }
  }
}

namespace {

std::atomic<long> g_live{0};
std::atomic<long> g_peak{0};

// Counts instances that own a value; moved-from shells do not count.
struct Tracked {
  std::uint64_t seq_id = 0;
  bool owns = false;

  explicit Tracked(std::uint64_t id) : seq_id(id), owns(true) { bump(); }
  Tracked(Tracked&& o) noexcept : seq_id(o.seq_id), owns(std::exchange(o.owns, false)) {}
  Tracked& operator=(Tracked&& o) noexcept {
    if (owns) --g_live;
    seq_id = o.seq_id;
    owns = std::exchange(o.owns, false);
    return *this;
  }
  Tracked(const Tracked&) = delete;
  ~Tracked() {
    if (owns) --g_live;
  }
  static void bump() {
    const auto v = ++g_live;
    auto p = g_peak.load();
    while (v > p && !g_peak.compare_exchange_weak(p, v)) {
    }
  }
};

// Produces Tracked items lazily so the source holds nothing.
class TrackedSource final : public Stream<Tracked> {
 public:
  explicit TrackedSource(std::size_t n) : n_(n) {}
  std::optional<Tracked> pull() override {
    if (i_ == n_) return std::nullopt;
    return Tracked(i_++);
  }

 private:
  std::size_t n_, i_ = 0;
};

}  // namespace

TEST(PipelineProperties, BoundedLiveElements) {
  const std::size_t shuffle = 16, parallel = 4, batch = 8, depth = 3;
  g_live = 0;
  g_peak = 0;
  {
    Dataset<Tracked> src(std::make_unique<TrackedSource>(2000), std::make_shared<PipelineStats>(), {"Tracked"});
    auto ds = std::move(src)
                  .shuffle(shuffle, 3)
                  .map_parallel([](Tracked t) { return t; }, parallel)
                  .batch(batch)
                  .prefetch(depth);
    std::size_t n = 0;
    while (auto b = ds.next()) {
      n += b->size();
      std::this_thread::sleep_for(std::chrono::microseconds(100));
    }
    EXPECT_EQ(n, 2000u);
  }
  // The chain's bound plus the one batch the consumer holds while working.
  const long bound = static_cast<long>(shuffle + parallel + batch + depth * batch + batch);
  EXPECT_LE(g_peak.load(), bound);
  EXPECT_EQ(g_live.load(), 0);
}
