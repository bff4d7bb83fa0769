#pragma once

// Pull-based dataset stages: source, buffered shuffle, ordered parallel map,
// error suppression, batching and a background prefetcher.
//
// Every stage is a Stream<T> that yields std::nullopt at end of epoch and
// throws ElementError for failures scoped to one element. A stage that sees
// an ElementError from upstream may keep pulling; any other exception ends
// the epoch.

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "dlio/detail/worker_pool.hpp"
#include "dlio/error.hpp"
#include "dlio/fsio.hpp"
#include "dlio/tensor.hpp"

namespace dlio {

using Label = std::variant<std::monostate, std::uint32_t, Tensor>;
using Payload = std::variant<std::monostate, Bytes, Tensor>;

// Unit flowing through the pipeline. `path` is provenance from the source,
// `source_bytes` the on-disk size read for it (0 until read).
struct Element {
  std::uint64_t seq_id = 0;
  std::string path;
  Payload payload;
  Label label;
  std::uint64_t source_bytes = 0;
};

template <class T>
struct Batch {
  std::vector<T> elements;
  std::uint64_t batch_index = 0;

  std::size_t size() const { return elements.size(); }
};

template <class T>
concept HasSeqId = requires(const T& t) {
  { t.seq_id } -> std::convertible_to<std::uint64_t>;
};

struct PipelineStats {
  std::atomic<std::uint64_t> dropped{0};
  std::atomic<std::size_t> prefetch_occupancy{0};
  std::atomic<std::size_t> prefetch_peak{0};
};

template <class T>
class Stream {
 public:
  virtual ~Stream() = default;
  virtual std::optional<T> pull() = 0;
};

namespace detail {

template <class T>
class VectorSource final : public Stream<T> {
 public:
  explicit VectorSource(std::vector<T> items) : items_(std::move(items)) {}

  std::optional<T> pull() override {
    if (pos_ >= items_.size()) return std::nullopt;
    return std::move(items_[pos_++]);
  }

 private:
  std::vector<T> items_;
  std::size_t pos_ = 0;
};

// Keeps up to `capacity` elements; each emission picks one uniformly and the
// slot is refilled from upstream before the next pick.
template <class T>
class ShuffleStream final : public Stream<T> {
 public:
  ShuffleStream(std::unique_ptr<Stream<T>> up, std::size_t capacity, std::uint64_t seed)
      : up_(std::move(up)), capacity_(capacity), rng_(seed) {
    buffer_.reserve(capacity_);
  }

  std::optional<T> pull() override {
    while (!up_done_ && buffer_.size() < capacity_) {
      auto v = up_->pull();
      if (!v) {
        up_done_ = true;
        break;
      }
      buffer_.push_back(std::move(*v));
    }
    if (buffer_.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, buffer_.size() - 1);
    const auto idx = pick(rng_);
    if (idx != buffer_.size() - 1) std::swap(buffer_[idx], buffer_.back());
    T out = std::move(buffer_.back());
    buffer_.pop_back();
    return out;
  }

 private:
  std::unique_ptr<Stream<T>> up_;
  std::size_t capacity_;
  std::mt19937_64 rng_;
  std::vector<T> buffer_;
  bool up_done_ = false;
};

// Applies fn on a worker pool with at most `window` applications in flight
// and yields results in input order.
template <class In, class Out, class F>
class MapStream final : public Stream<Out> {
 public:
  MapStream(std::unique_ptr<Stream<In>> up, F fn, std::size_t parallelism)
      : up_(std::move(up)), fn_(std::make_shared<F>(std::move(fn))), window_(parallelism), pool_(parallelism) {}

  ~MapStream() override {
    // Let running applications finish before fn_ and the pool go away.
    for (auto& f : inflight_)
      if (f.valid()) f.wait();
  }

  std::optional<Out> pull() override {
    top_up();
    if (inflight_.empty()) return std::nullopt;
    auto fut = std::move(inflight_.front());
    inflight_.pop_front();
    return fut.get();
  }

 private:
  void top_up() {
    while (!up_done_ && inflight_.size() < window_) {
      std::optional<In> v;
      try {
        v = up_->pull();
      } catch (const ElementError&) {
        push_failed(std::current_exception());
        continue;
      } catch (...) {
        push_failed(std::current_exception());
        up_done_ = true;
        break;
      }
      if (!v) {
        up_done_ = true;
        break;
      }
      const std::uint64_t seq = seq_of(*v);
      ++position_;
      inflight_.push_back(pool_.submit([fn = fn_, in = std::move(*v), seq]() mutable -> Out {
        try {
          return (*fn)(std::move(in));
        } catch (const ElementError&) {
          throw;
        } catch (const std::exception& e) {
          throw ElementError(seq, e.what());
        }
      }));
    }
  }

  std::uint64_t seq_of(const In& v) const {
    if constexpr (HasSeqId<In>)
      return v.seq_id;
    else
      return position_;
  }

  void push_failed(std::exception_ptr e) {
    std::promise<Out> p;
    p.set_exception(std::move(e));
    inflight_.push_back(p.get_future());
  }

  std::unique_ptr<Stream<In>> up_;
  std::shared_ptr<F> fn_;
  std::size_t window_;
  std::deque<std::future<Out>> inflight_;
  bool up_done_ = false;
  std::uint64_t position_ = 0;
  WorkerPool pool_;  // last: joined before the members above are destroyed
};

template <class T>
class IgnoreErrorsStream final : public Stream<T> {
 public:
  IgnoreErrorsStream(std::unique_ptr<Stream<T>> up, std::shared_ptr<PipelineStats> stats)
      : up_(std::move(up)), stats_(std::move(stats)) {}

  std::optional<T> pull() override {
    while (true) {
      try {
        return up_->pull();
      } catch (const ElementError&) {
        stats_->dropped.fetch_add(1, std::memory_order_relaxed);
      }
    }
  }

 private:
  std::unique_ptr<Stream<T>> up_;
  std::shared_ptr<PipelineStats> stats_;
};

template <class T>
class BatchStream final : public Stream<Batch<T>> {
 public:
  BatchStream(std::unique_ptr<Stream<T>> up, std::size_t batch_size, bool drop_remainder)
      : up_(std::move(up)), batch_size_(batch_size), drop_remainder_(drop_remainder) {}

  std::optional<Batch<T>> pull() override {
    while (!up_done_ && pending_.size() < batch_size_) {
      std::optional<T> v;
      try {
        v = up_->pull();
      } catch (const ElementError& e) {
        // Elements gathered so far stay pending for the next call.
        throw e.with_batch_index(next_index_);
      }
      if (!v) {
        up_done_ = true;
        break;
      }
      pending_.push_back(std::move(*v));
    }
    if (pending_.empty()) return std::nullopt;
    if (pending_.size() < batch_size_ && drop_remainder_) {
      pending_.clear();
      return std::nullopt;
    }
    Batch<T> b{std::move(pending_), next_index_++};
    pending_ = std::vector<T>();
    pending_.reserve(batch_size_);
    return b;
  }

 private:
  std::unique_ptr<Stream<T>> up_;
  std::size_t batch_size_;
  bool drop_remainder_;
  std::vector<T> pending_;
  std::uint64_t next_index_ = 0;
  bool up_done_ = false;
};

// One background producer fills a bounded deque; consumption wakes it.
// End of stream and errors travel through the deque as entries so they keep
// their position relative to data.
template <class T>
class PrefetchStream final : public Stream<T> {
 public:
  PrefetchStream(std::unique_ptr<Stream<T>> up, std::size_t depth, std::shared_ptr<PipelineStats> stats)
      : up_(std::move(up)), depth_(depth), stats_(std::move(stats)) {
    producer_ = std::thread([this] { produce(); });
  }

  ~PrefetchStream() override {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    not_full_.notify_all();
    producer_.join();
  }

  std::optional<T> pull() override {
    if (finished_) return std::nullopt;
    Entry e;
    {
      std::unique_lock lk(mu_);
      not_empty_.wait(lk, [this] { return !buffer_.empty(); });
      e = std::move(buffer_.front());
      buffer_.pop_front();
      stats_->prefetch_occupancy.store(buffer_.size(), std::memory_order_relaxed);
    }
    not_full_.notify_one();
    if (e.error) {
      if (e.terminal) finished_ = true;
      std::rethrow_exception(e.error);
    }
    if (!e.value) finished_ = true;
    return std::move(e.value);
  }

 private:
  struct Entry {
    std::optional<T> value;  // empty with no error: end of stream
    std::exception_ptr error;
    bool terminal = false;
  };

  void produce() {
    while (true) {
      Entry e;
      try {
        e.value = up_->pull();
      } catch (const ElementError&) {
        e.error = std::current_exception();
      } catch (...) {
        e.error = std::current_exception();
        e.terminal = true;
      }
      const bool last = e.terminal || (!e.error && !e.value);
      {
        std::unique_lock lk(mu_);
        not_full_.wait(lk, [this] { return stop_ || buffer_.size() < depth_; });
        if (stop_) return;
        buffer_.push_back(std::move(e));
        const auto occ = buffer_.size();
        stats_->prefetch_occupancy.store(occ, std::memory_order_relaxed);
        auto peak = stats_->prefetch_peak.load(std::memory_order_relaxed);
        while (occ > peak && !stats_->prefetch_peak.compare_exchange_weak(peak, occ)) {
        }
      }
      not_empty_.notify_one();
      if (last) return;
    }
  }

  std::unique_ptr<Stream<T>> up_;
  std::size_t depth_;
  std::shared_ptr<PipelineStats> stats_;
  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<Entry> buffer_;
  bool stop_ = false;
  bool finished_ = false;
  std::thread producer_;
};

}  // namespace detail

// A single-pass chain of stages ending in an iterator. Stages are appended by
// consuming the dataset, so the chain order is fixed once built.
template <class T>
class Dataset {
 public:
  using value_type = T;

  Dataset(std::unique_ptr<Stream<T>> stream, std::shared_ptr<PipelineStats> stats, std::vector<std::string> stages)
      : stream_(std::move(stream)), stats_(std::move(stats)), stages_(std::move(stages)) {}

  // Next element, or std::nullopt once the epoch is exhausted (and on every
  // call after that).
  std::optional<T> next() {
    if (exhausted_) return std::nullopt;
    auto v = stream_->pull();
    if (!v) exhausted_ = true;
    return v;
  }

  Dataset<T> shuffle(std::size_t buffer_size, std::uint64_t seed) && {
    if (buffer_size == 0) throw InvalidArgument("shuffle buffer_size must be >= 1");
    return append<T>(std::make_unique<detail::ShuffleStream<T>>(std::move(stream_), buffer_size, seed),
                     "Shuffle(" + std::to_string(buffer_size) + "," + std::to_string(seed) + ")");
  }

  template <class F>
  auto map_parallel(F fn, std::size_t parallelism) && {
    using Out = std::invoke_result_t<F&, T&&>;
    if (parallelism == 0) throw InvalidArgument("map parallelism must be >= 1");
    return append<Out>(std::make_unique<detail::MapStream<T, Out, F>>(std::move(stream_), std::move(fn), parallelism),
                       "MapParallel(" + std::to_string(parallelism) + ")");
  }

  Dataset<T> ignore_errors() && {
    return append<T>(std::make_unique<detail::IgnoreErrorsStream<T>>(std::move(stream_), stats_), "IgnoreErrors");
  }

  Dataset<Batch<T>> batch(std::size_t batch_size, bool drop_remainder = false) && {
    if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
    return append<Batch<T>>(
        std::make_unique<detail::BatchStream<T>>(std::move(stream_), batch_size, drop_remainder),
        "Batch(" + std::to_string(batch_size) + (drop_remainder ? ",drop" : ",keep") + ")");
  }

  // depth == 0 keeps the chain synchronous.
  Dataset<T> prefetch(std::size_t depth) && {
    if (depth == 0) return append<T>(std::move(stream_), "Prefetch(0)");
    return append<T>(std::make_unique<detail::PrefetchStream<T>>(std::move(stream_), depth, stats_),
                     "Prefetch(" + std::to_string(depth) + ")");
  }

  std::uint64_t dropped() const { return stats_->dropped.load(); }
  std::size_t prefetch_occupancy() const { return stats_->prefetch_occupancy.load(); }
  std::size_t prefetch_peak() const { return stats_->prefetch_peak.load(); }
  const std::vector<std::string>& stages() const { return stages_; }

 private:
  template <class U>
  friend class Dataset;

  template <class U>
  Dataset<U> append(std::unique_ptr<Stream<U>> s, std::string stage) {
    auto stages = std::move(stages_);
    stages.push_back(std::move(stage));
    return Dataset<U>(std::move(s), stats_, std::move(stages));
  }

  std::unique_ptr<Stream<T>> stream_;
  std::shared_ptr<PipelineStats> stats_;
  std::vector<std::string> stages_;
  bool exhausted_ = false;
};

template <class T>
Dataset<T> from_vector(std::vector<T> items) {
  const auto n = items.size();
  return Dataset<T>(std::make_unique<detail::VectorSource<T>>(std::move(items)), std::make_shared<PipelineStats>(),
                    {"Source(" + std::to_string(n) + ")"});
}

// Source over (path, class) pairs; seq_id is the list position.
inline Dataset<Element> from_slices(const std::vector<std::pair<std::string, std::uint32_t>>& items) {
  std::vector<Element> elems;
  elems.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    Element e;
    e.seq_id = i;
    e.path = items[i].first;
    e.label = items[i].second;
    elems.push_back(std::move(e));
  }
  return from_vector(std::move(elems));
}

}  // namespace dlio
