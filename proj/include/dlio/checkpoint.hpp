#pragma once

// Three-file checkpoints (.meta/.index/.data), keep-newest-N retention and a
// burst-buffer stager that saves to a fast tier and drains to a slow tier in
// the background.
//
// File layout for <prefix>-<step>:
//   .meta   name<TAB>dtype<TAB>d0,d1,...            one line per variable
//   .index  name<TAB>offset<TAB>length<TAB>crc32hex  one line per variable
//   .data   little-endian values, variables concatenated in store order
// CHECKPOINT_LATEST in the prefix directory holds the newest <prefix>-<step>.

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dlio/crc32.hpp"
#include "dlio/error.hpp"
#include "dlio/fsio.hpp"
#include "dlio/tensor.hpp"

namespace dlio {

static_assert(std::endian::native == std::endian::little, ".data layout assumes a little-endian host");

inline constexpr const char* kLatestPointer = "CHECKPOINT_LATEST";

// Named tensors kept in insertion order; the order fixes the .data layout.
class VariableStore {
 public:
  using value_type = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value) {
    if (name.empty()) throw InvalidArgument("variable name must be non-empty");
    if (name.find_first_of("\t\n\r") != std::string::npos)
      throw InvalidArgument("variable name '" + name + "' contains a tab or newline");
    if (index_.count(name)) throw InvalidArgument("duplicate variable '" + name + "'");
    index_.emplace(name, vars_.size());
    vars_.emplace_back(std::move(name), std::move(value));
  }

  const Tensor& at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("no variable '" + name + "'");
    return vars_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return vars_.size(); }
  bool empty() const { return vars_.empty(); }
  auto begin() const { return vars_.begin(); }
  auto end() const { return vars_.end(); }

  std::uint64_t total_bytes() const {
    std::uint64_t n = 0;
    for (const auto& [_, t] : vars_) n += t.byte_size();
    return n;
  }

  friend bool operator==(const VariableStore& a, const VariableStore& b) { return a.vars_ == b.vars_; }

 private:
  std::vector<value_type> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SaverConfig {
  std::string prefix = "ckpt/model";  // tier-relative directory + basename
  std::size_t keep_last = 5;
  std::size_t interval_steps = 20;

  void validate() const {
    if (prefix.empty()) throw InvalidArgument("checkpoint prefix must be non-empty");
    if (keep_last == 0) throw InvalidArgument("keep_last must be >= 1");
    if (interval_steps == 0) throw InvalidArgument("interval_steps must be >= 1");
  }

  // True when a checkpoint is due after completing `step` (1-based).
  bool due(std::uint64_t step) const { return step > 0 && step % interval_steps == 0; }
};

struct CheckpointSet {
  std::string prefix;
  std::uint64_t step = 0;

  std::string base() const { return prefix + "-" + std::to_string(step); }
  std::string meta() const { return base() + ".meta"; }
  std::string index() const { return base() + ".index"; }
  std::string data() const { return base() + ".data"; }
  std::vector<std::string> files() const { return {meta(), index(), data()}; }

  friend bool operator==(const CheckpointSet&, const CheckpointSet&) = default;
};

namespace detail {

inline std::string prefix_dir(const std::string& prefix) {
  const auto parent = fs::path(prefix).parent_path().string();
  return parent.empty() ? "." : parent;
}

inline std::string in_dir(const std::string& dir, const std::string& name) {
  return dir == "." ? name : dir + "/" + name;
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

template <class Int>
Int parse_int(std::string_view s, int base, const std::string& what) {
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) throw CorruptCheckpoint("", "bad " + what);
  return v;
}

inline std::vector<std::string> lines_of(const Bytes& b) {
  std::vector<std::string> out;
  std::istringstream in(to_string(b));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

struct MetaEntry {
  std::string name;
  DType dtype;
  std::vector<std::size_t> dims;
};

struct IndexEntry {
  std::string name;
  std::uint64_t offset;
  std::uint64_t length;
  std::uint32_t crc;
};

inline void write_pointer(StorageTier& tier, const CheckpointSet& ckpt) {
  const auto dir = prefix_dir(ckpt.prefix);
  const auto tmp = in_dir(dir, std::string(kLatestPointer) + ".tmp");
  tier.write_file(tmp, to_bytes(ckpt.base() + "\n"));
  tier.rename(tmp, in_dir(dir, kLatestPointer));
}

inline void remove_set(StorageTier& tier, const CheckpointSet& ckpt) {
  // Index first: once it is gone the set is no longer discoverable.
  tier.remove(ckpt.index());
  tier.remove(ckpt.meta());
  tier.remove(ckpt.data());
}

}  // namespace detail

// Complete or partial sets discovered by their .index file, oldest first.
inline std::vector<CheckpointSet> list_checkpoints(const StorageTier& tier, const std::string& prefix) {
  const auto dir = detail::prefix_dir(prefix);
  const auto stem = fs::path(prefix).filename().string() + "-";
  std::vector<CheckpointSet> out;
  for (const auto& name : tier.list(dir)) {
    if (name.size() <= stem.size() + 6 || name.compare(0, stem.size(), stem) != 0) continue;
    if (!name.ends_with(".index")) continue;
    const auto digits = std::string_view(name).substr(stem.size(), name.size() - stem.size() - 6);
    std::uint64_t step = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), step);
    if (ec != std::errc{} || p != digits.data() + digits.size()) continue;
    out.push_back({prefix, step});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
  return out;
}

inline std::optional<CheckpointSet> latest_checkpoint(StorageTier& tier, const std::string& prefix) {
  const auto ptr = detail::in_dir(detail::prefix_dir(prefix), kLatestPointer);
  if (!tier.exists(ptr)) return std::nullopt;
  auto text = to_string(tier.read_file(ptr));
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  const auto dash = text.rfind('-');
  if (dash == std::string::npos || text.substr(0, dash) != prefix) return std::nullopt;
  return CheckpointSet{prefix, detail::parse_int<std::uint64_t>(std::string_view(text).substr(dash + 1), 10, "pointer")};
}

// Deletes the oldest sets until at most keep_last remain. Sets newer than
// `max_step` are never deleted.
inline std::size_t apply_retention(StorageTier& tier, const std::string& prefix, std::size_t keep_last,
                                   std::uint64_t max_step = UINT64_MAX) {
  auto sets = list_checkpoints(tier, prefix);
  std::size_t removed = 0;
  for (std::size_t i = 0; i + keep_last < sets.size() && sets[i].step <= max_step; ++i) {
    detail::remove_set(tier, sets[i]);
    ++removed;
  }
  return removed;
}

struct SaveOptions {
  bool apply_retention = true;
};

// Writes the three files, makes them durable, moves CHECKPOINT_LATEST and
// prunes old sets.
inline CheckpointSet save(const VariableStore& store, StorageTier& tier, const SaverConfig& cfg, std::uint64_t step,
                          SaveOptions opts = {}) {
  cfg.validate();
  if (store.empty()) throw InvalidArgument("cannot checkpoint an empty variable store");
  const CheckpointSet ckpt{cfg.prefix, step};

  std::string index;
  std::string meta;
  {
    auto data = tier.open_write(ckpt.data());
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : store) {
      const auto bytes = tensor.bytes();
      data.write(bytes);
      index += name + '\t' + std::to_string(offset) + '\t' + std::to_string(bytes.size()) + '\t' +
               detail::hex32(crc32(bytes)) + '\n';
      meta += name + '\t' + to_string(tensor.dtype()) + '\t';
      for (std::size_t d = 0; d < tensor.dims().size(); ++d) meta += (d ? "," : "") + std::to_string(tensor.dims()[d]);
      meta += '\n';
      offset += bytes.size();
    }
    data.close();
  }
  tier.write_file(ckpt.index(), to_bytes(index));
  tier.write_file(ckpt.meta(), to_bytes(meta));
  tier.sync();

  detail::write_pointer(tier, ckpt);
  tier.sync();
  if (opts.apply_retention) apply_retention(tier, cfg.prefix, cfg.keep_last);
  return ckpt;
}

inline VariableStore restore(StorageTier& tier, const CheckpointSet& ckpt) {
  for (const auto& f : ckpt.files())
    if (!tier.exists(f)) throw IncompleteCheckpoint(f, "missing checkpoint file");

  std::vector<detail::MetaEntry> meta;
  for (const auto& line : detail::lines_of(tier.read_file(ckpt.meta()))) {
    const auto f = split_tabs(line);
    if (f.size() != 3) throw CorruptCheckpoint("", "malformed .meta line");
    detail::MetaEntry m{std::string(f[0]), DType::f32, {}};
    try {
      m.dtype = parse_dtype(f[1]);
    } catch (const InvalidArgument&) {
      throw CorruptCheckpoint(m.name, "unknown dtype in .meta");
    }
    std::string_view dims = f[2];
    while (!dims.empty()) {
      const auto comma = dims.find(',');
      m.dims.push_back(detail::parse_int<std::size_t>(dims.substr(0, comma), 10, "dimension"));
      dims = comma == std::string_view::npos ? std::string_view{} : dims.substr(comma + 1);
    }
    meta.push_back(std::move(m));
  }

  std::vector<detail::IndexEntry> index;
  for (const auto& line : detail::lines_of(tier.read_file(ckpt.index()))) {
    const auto f = split_tabs(line);
    if (f.size() != 4) throw CorruptCheckpoint("", "malformed .index line");
    index.push_back({std::string(f[0]), detail::parse_int<std::uint64_t>(f[1], 10, "offset"),
                     detail::parse_int<std::uint64_t>(f[2], 10, "length"),
                     detail::parse_int<std::uint32_t>(f[3], 16, "crc")});
  }

  if (meta.size() != index.size() || meta.empty())
    throw CorruptCheckpoint("", ".meta and .index disagree on the variable count");
  std::uint64_t expect_offset = 0;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (meta[i].name != index[i].name) throw CorruptCheckpoint(index[i].name, ".meta and .index name mismatch");
    if (index[i].offset != expect_offset) throw CorruptCheckpoint(index[i].name, "gap or overlap in .index");
    const auto want = element_count(meta[i].dims) * dtype_size(meta[i].dtype);
    if (index[i].length != want) throw CorruptCheckpoint(index[i].name, "length does not match shape");
    expect_offset += index[i].length;
  }

  auto reader = tier.open_read(ckpt.data());
  if (reader.size() != expect_offset) throw CorruptCheckpoint("", ".data size does not match .index");

  VariableStore store;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    auto t = Tensor::zeros(meta[i].dims, meta[i].dtype);
    auto buf = t.writable_bytes();
    std::size_t off = 0;
    while (off < buf.size()) {
      const auto n = reader.read(buf.subspan(off));
      if (n == 0) throw CorruptCheckpoint(meta[i].name, ".data truncated");
      off += n;
    }
    if (crc32(buf) != index[i].crc) throw CorruptCheckpoint(meta[i].name, "crc mismatch");
    store.add(meta[i].name, std::move(t));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Burst buffer

struct BurstBufferConfig {
  std::shared_ptr<StorageTier> fast_tier;
  std::shared_ptr<StorageTier> slow_tier;
  bool delete_from_fast_after_copy = false;
};

struct DrainStatus {
  enum class Kind { completed, failed, timed_out };
  Kind kind = Kind::timed_out;
  std::string error;

  bool completed() const { return kind == Kind::completed; }
};

// Handle on one queued drain. Copies share state with the stager.
class DrainTicket {
 public:
  struct Times {
    Clock::time_point enqueued{};
    Clock::time_point started{};
    Clock::time_point finished{};
  };

  const CheckpointSet& checkpoint() const { return state_->ckpt; }

  bool resolved() const {
    std::lock_guard lk(state_->mu);
    return state_->done;
  }

  Times times() const {
    std::lock_guard lk(state_->mu);
    return state_->times;
  }

  DrainStatus wait(std::chrono::nanoseconds timeout) const {
    std::unique_lock lk(state_->mu);
    if (!state_->cv.wait_for(lk, timeout, [this] { return state_->done; })) return {};
    if (state_->error.empty()) return {DrainStatus::Kind::completed, {}};
    return {DrainStatus::Kind::failed, state_->error};
  }

 private:
  friend class BurstBuffer;

  struct State {
    CheckpointSet ckpt;
    std::size_t keep_last = 5;
    mutable std::mutex mu;
    std::condition_variable cv;
    bool done = false;
    std::string error;
    Times times;
  };

  explicit DrainTicket(std::shared_ptr<State> s) : state_(std::move(s)) {}

  void finish(std::string error) const {
    {
      std::lock_guard lk(state_->mu);
      state_->times.finished = Clock::now();
      state_->error = std::move(error);
      state_->done = true;
    }
    state_->cv.notify_all();
  }

  std::shared_ptr<State> state_;
};

inline DrainStatus drain_wait(const DrainTicket& ticket, std::chrono::nanoseconds timeout) {
  return ticket.wait(timeout);
}

// Saves synchronously to the fast tier; a single background worker copies
// queued checkpoints to the slow tier in FIFO order without forcing a sync
// there. The destructor completes every queued drain.
class BurstBuffer {
 public:
  explicit BurstBuffer(BurstBufferConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.fast_tier || !cfg_.slow_tier) throw InvalidArgument("burst buffer needs a fast and a slow tier");
    if (cfg_.fast_tier == cfg_.slow_tier || cfg_.fast_tier->root() == cfg_.slow_tier->root())
      throw InvalidArgument("burst buffer fast and slow tiers must be distinct");
    worker_ = std::thread([this] { run(); });
  }

  BurstBuffer(const BurstBuffer&) = delete;
  BurstBuffer& operator=(const BurstBuffer&) = delete;

  ~BurstBuffer() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  const BurstBufferConfig& config() const { return cfg_; }

  std::pair<CheckpointSet, DrainTicket> burst_save(const VariableStore& store, const SaverConfig& cfg,
                                                   std::uint64_t step) {
    // Fast-tier retention waits for the drain so queued sets are not pruned.
    auto ckpt = save(store, *cfg_.fast_tier, cfg, step, SaveOptions{.apply_retention = false});
    auto state = std::make_shared<DrainTicket::State>();
    state->ckpt = ckpt;
    state->keep_last = cfg.keep_last;
    state->times.enqueued = Clock::now();
    DrainTicket ticket(state);
    {
      std::lock_guard lk(mu_);
      queue_.push_back(ticket);
    }
    cv_.notify_all();
    return {std::move(ckpt), std::move(ticket)};
  }

  std::size_t pending() const {
    std::lock_guard lk(mu_);
    return queue_.size() + (busy_ ? 1 : 0);
  }

  // Blocks until the queue is empty and the worker idle.
  void wait_all() {
    std::unique_lock lk(mu_);
    idle_cv_.wait(lk, [this] { return queue_.empty() && !busy_; });
  }

 private:
  void run() {
    while (true) {
      std::optional<DrainTicket> job;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty()) return;  // stop requested and nothing left
        job = std::move(queue_.front());
        queue_.pop_front();
        busy_ = true;
      }
      std::string error;
      try {
        drain(*job);
      } catch (const std::exception& e) {
        error = e.what();
      }
      job->finish(std::move(error));
      {
        std::lock_guard lk(mu_);
        busy_ = false;
      }
      idle_cv_.notify_all();
    }
  }

  void drain(const DrainTicket& ticket) {
    {
      std::lock_guard lk(ticket.state_->mu);
      ticket.state_->times.started = Clock::now();
    }
    const auto& ckpt = ticket.checkpoint();
    auto& fast = *cfg_.fast_tier;
    auto& slow = *cfg_.slow_tier;

    std::uint32_t data_crc = 0;
    std::uint64_t data_len = 0;
    Bytes chunk(kChunkBytes);
    for (const auto& file : {ckpt.data(), ckpt.index(), ckpt.meta()}) {
      auto in = fast.open_read(file);
      auto out = slow.open_write(file);
      const bool is_data = file == ckpt.data();
      while (true) {
        const auto n = in.read(chunk);
        if (n == 0) break;
        const auto part = std::span<const std::byte>(chunk).first(n);
        out.write(part);
        if (is_data) {
          data_crc = crc32(part, data_crc);
          data_len += n;
        }
      }
      out.close();
    }
    if (slow.file_size(ckpt.data()) != data_len || slow.verify_crc32(ckpt.data()) != data_crc)
      throw IoError(ckpt.data(), "slow-tier copy does not match fast-tier data");

    detail::write_pointer(slow, ckpt);
    apply_retention(slow, ckpt.prefix, ticket.state_->keep_last);
    if (cfg_.delete_from_fast_after_copy)
      detail::remove_set(fast, ckpt);
    else
      apply_retention(fast, ckpt.prefix, ticket.state_->keep_last, ckpt.step);
  }

  BurstBufferConfig cfg_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<DrainTicket> queue_;
  bool busy_ = false;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace dlio
