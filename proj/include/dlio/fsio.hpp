#pragma once

// Storage tiers: a rooted directory with adapter-level byte counters, an
// optional bandwidth throttle and an optional capacity cap. Tiers stand in for
// the device classes (HDD, SSD, NVM, parallel FS) of a benchmark host.

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include "dlio/crc32.hpp"
#include "dlio/error.hpp"

namespace dlio {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using Bytes = std::vector<std::byte>;

inline constexpr std::size_t kChunkBytes = std::size_t{1} << 20;  // 1 MiB pacing unit

inline Bytes to_bytes(std::string_view s) {
  Bytes out(s.size());
  std::memcpy(out.data(), s.data(), s.size());
  return out;
}

inline std::string to_string(std::span<const std::byte> b) {
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

struct TierOptions {
  std::optional<std::uint64_t> throttle_bytes_per_sec;
  std::optional<std::uint64_t> capacity_bytes;
  // Fixed cost paid on every file open; emulates per-file access latency.
  std::chrono::microseconds file_latency{0};
};

struct CounterSnapshot {
  std::uint64_t read_bytes = 0;
  std::uint64_t write_bytes = 0;

  friend bool operator==(const CounterSnapshot&, const CounterSnapshot&) = default;
};

enum class AdviceStatus { ok, warning };

namespace detail {

// Reserves consecutive time slots of n/rate seconds. Idle time is not banked,
// so the long-run rate never exceeds the configured throttle.
class Pacer {
 public:
  explicit Pacer(std::optional<std::uint64_t> rate) : rate_(rate) {}

  bool active() const { return rate_.has_value(); }

  Clock::time_point reserve(std::size_t n) {
    const auto now = Clock::now();
    if (!rate_) return now;
    const auto span = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(static_cast<double>(n) / static_cast<double>(*rate_)));
    std::lock_guard lk(mu_);
    // A caller that comes back less than one slot late (copying the previous
    // chunk, say) keeps its schedule instead of losing the gap.
    next_ = (now - next_ < span ? next_ : now) + span;
    return next_;
  }

 private:
  std::optional<std::uint64_t> rate_;
  std::mutex mu_;
  Clock::time_point next_{};
};

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  int release() { return std::exchange(fd_, -1); }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::string errno_text(int err) { return std::strerror(err); }

inline std::optional<std::uint64_t> parse_u64_or_none(std::string_view field, std::string_view what) {
  if (field == "none") return std::nullopt;
  std::uint64_t v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end || field.empty())
    throw InvalidArgument("tier config: bad " + std::string(what) + " '" + std::string(field) + "'");
  return v;
}

}  // namespace detail

class StorageTier;

// Sequential reader over one file. Reads are paced and counted by the tier.
class TierReader {
 public:
  TierReader(TierReader&&) noexcept = default;
  TierReader& operator=(TierReader&&) noexcept = default;

  std::uint64_t size() const { return size_; }

  // Returns the number of bytes read; 0 at end of file.
  std::size_t read(std::span<std::byte> out);

 private:
  friend class StorageTier;
  TierReader(StorageTier* tier, std::string relpath, detail::Fd fd, std::uint64_t size)
      : tier_(tier), relpath_(std::move(relpath)), fd_(std::move(fd)), size_(size) {}

  StorageTier* tier_;
  std::string relpath_;
  detail::Fd fd_;
  std::uint64_t size_;
};

// Truncating sequential writer. Each write is checked against the capacity cap.
class TierWriter {
 public:
  TierWriter(TierWriter&&) noexcept = default;
  TierWriter& operator=(TierWriter&&) noexcept = default;
  ~TierWriter() = default;

  void write(std::span<const std::byte> data);
  void close();
  std::uint64_t written() const { return written_; }

 private:
  friend class StorageTier;
  TierWriter(StorageTier* tier, std::string relpath, detail::Fd fd)
      : tier_(tier), relpath_(std::move(relpath)), fd_(std::move(fd)) {}

  StorageTier* tier_;
  std::string relpath_;
  detail::Fd fd_;
  std::uint64_t written_ = 0;
};

class StorageTier {
 public:
  StorageTier(std::string label, fs::path root, TierOptions options = {})
      : label_(std::move(label)), root_(std::move(root)), options_(options), pacer_(options.throttle_bytes_per_sec) {
    if (options_.throttle_bytes_per_sec && *options_.throttle_bytes_per_sec == 0)
      throw InvalidArgument("tier " + label_ + ": throttle must be > 0");
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw IoError(root_.string(), "cannot create tier root: " + ec.message());
    root_ = fs::canonical(root_);
    for (const auto& entry : fs::recursive_directory_iterator(root_))
      if (entry.is_regular_file()) used_bytes_ += entry.file_size();
  }

  StorageTier(const StorageTier&) = delete;
  StorageTier& operator=(const StorageTier&) = delete;

  const std::string& label() const { return label_; }
  const fs::path& root() const { return root_; }
  const TierOptions& options() const { return options_; }

  // Maps a tier-relative path onto the filesystem. Absolute paths and paths
  // that climb above the root are rejected.
  fs::path resolve(std::string_view relpath) const {
    fs::path p(relpath);
    if (relpath.empty() || p.is_absolute())
      throw InvalidArgument("path '" + std::string(relpath) + "' must be relative to tier " + label_);
    const fs::path norm = p.lexically_normal();
    if (norm.empty() || *norm.begin() == ".." || norm == ".")
      throw InvalidArgument("path '" + std::string(relpath) + "' escapes tier " + label_);
    return root_ / norm;
  }

  Bytes read_file(std::string_view relpath) {
    auto reader = open_read(relpath);
    Bytes out(reader.size());
    std::size_t off = 0;
    while (off < out.size()) {
      const auto n = reader.read(std::span(out).subspan(off, std::min(kChunkBytes, out.size() - off)));
      if (n == 0) break;
      off += n;
    }
    out.resize(off);
    return out;
  }

  void write_file(std::string_view relpath, std::span<const std::byte> data) {
    const auto path = resolve(relpath);
    reserve_capacity(relpath, path, data.size());
    auto writer = open_write_reserved(relpath, path, data.size());
    for (std::size_t off = 0; off < data.size(); off += kChunkBytes)
      writer.write_chunk(data.subspan(off, std::min(kChunkBytes, data.size() - off)));
    writer.close();
  }

  TierReader open_read(std::string_view relpath) {
    const auto path = resolve(relpath);
    pay_latency();
    detail::Fd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
    if (!fd) {
      const int err = errno;
      if (err == ENOENT || err == ENOTDIR) throw NotFound(std::string(relpath));
      throw IoError(std::string(relpath), "open: " + detail::errno_text(err));
    }
    struct stat st {};
    if (::fstat(fd.get(), &st) != 0) throw IoError(std::string(relpath), "fstat: " + detail::errno_text(errno));
    if (!S_ISREG(st.st_mode)) throw IoError(std::string(relpath), "not a regular file");
    return TierReader(this, std::string(relpath), std::move(fd), static_cast<std::uint64_t>(st.st_size));
  }

  TierWriter open_write(std::string_view relpath) {
    const auto path = resolve(relpath);
    reserve_capacity(relpath, path, 0);
    return open_write_reserved(relpath, path, 0).release();
  }

  // Makes every write issued through this tier before the call durable.
  void sync() {
    std::set<fs::path> files;
    {
      std::lock_guard lk(pending_mu_);
      files.swap(pending_sync_);
    }
    std::set<fs::path> dirs;
    for (const auto& f : files) {
      dirs.insert(f.parent_path());
      detail::Fd fd(::open(f.c_str(), O_RDONLY | O_CLOEXEC));
      if (!fd) {
        if (errno == ENOENT) continue;  // removed since written
        throw IoError(f.string(), "open for sync: " + detail::errno_text(errno));
      }
      if (::fsync(fd.get()) != 0) throw IoError(f.string(), "fsync: " + detail::errno_text(errno));
    }
    for (const auto& d : dirs) {
      detail::Fd fd(::open(d.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC));
      if (fd) ::fsync(fd.get());
    }
  }

  // Best-effort page-cache eviction hint. Never alters file content.
  AdviceStatus advise_dont_need(std::string_view relpath) {
    const auto path = resolve(relpath);
    detail::Fd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
    if (!fd) {
      if (errno == ENOENT || errno == ENOTDIR) throw NotFound(std::string(relpath));
      return AdviceStatus::warning;
    }
    // Dirty pages cannot be dropped; flush them first so the advice sticks.
    ::fdatasync(fd.get());
    return ::posix_fadvise(fd.get(), 0, 0, POSIX_FADV_DONTNEED) == 0 ? AdviceStatus::ok : AdviceStatus::warning;
  }

  CounterSnapshot snapshot_counters() const {
    std::lock_guard lk(counter_mu_);
    return counters_;
  }

  bool exists(std::string_view relpath) const { return fs::exists(resolve(relpath)); }

  std::uint64_t file_size(std::string_view relpath) const {
    std::error_code ec;
    const auto n = fs::file_size(resolve(relpath), ec);
    if (ec) throw NotFound(std::string(relpath), ec.message());
    return n;
  }

  // Returns false when the file did not exist.
  bool remove(std::string_view relpath) {
    const auto path = resolve(relpath);
    std::lock_guard lk(capacity_mu_);
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) return false;
    if (!fs::remove(path, ec)) return false;
    used_bytes_ -= std::min(used_bytes_, size);
    return true;
  }

  // Atomic replace of `to` by `from` (same tier).
  void rename(std::string_view from, std::string_view to) {
    const auto src = resolve(from);
    const auto dst = resolve(to);
    std::lock_guard lk(capacity_mu_);
    std::error_code ec;
    const auto replaced = fs::exists(dst) ? fs::file_size(dst, ec) : 0;
    fs::rename(src, dst, ec);
    if (ec) throw IoError(std::string(from), "rename: " + ec.message());
    used_bytes_ -= std::min(used_bytes_, replaced);
    std::lock_guard plk(pending_mu_);
    pending_sync_.insert(dst);
  }

  // Regular files directly inside `reldir` (names only, sorted). Empty when
  // the directory does not exist.
  std::vector<std::string> list(std::string_view reldir = ".") const {
    const auto dir = reldir == "." || reldir.empty() ? root_ : resolve(reldir);
    std::vector<std::string> names;
    std::error_code ec;
    for (auto it = fs::directory_iterator(dir, ec); !ec && it != fs::directory_iterator(); it.increment(ec))
      if (it->is_regular_file()) names.push_back(it->path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
  }

  std::uint64_t used_bytes() const {
    std::lock_guard lk(capacity_mu_);
    return used_bytes_;
  }

  // Checksums a file outside the adapter: neither counted nor throttled.
  // Used to verify copies without perturbing the measured traffic.
  std::uint32_t verify_crc32(std::string_view relpath) const {
    std::ifstream in(resolve(relpath), std::ios::binary);
    if (!in) throw NotFound(std::string(relpath));
    std::vector<char> buf(kChunkBytes);
    std::uint32_t crc = 0;
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      const auto n = static_cast<std::size_t>(in.gcount());
      crc = crc32(std::as_bytes(std::span(buf.data(), n)), crc);
    }
    return crc;
  }

 private:
  friend class TierReader;
  friend class TierWriter;

  // Writer whose capacity for `reserved` bytes has already been accounted.
  class ReservedWriter {
   public:
    ReservedWriter(StorageTier* tier, std::string relpath, detail::Fd fd, std::uint64_t reserved)
        : writer_(tier, std::move(relpath), std::move(fd)), reserved_(reserved) {}

    void write_chunk(std::span<const std::byte> data) {
      writer_.tier_->write_paced(writer_, data);
      writer_.written_ += data.size();
    }
    void close() {
      release_unused();
      writer_.close();
    }
    TierWriter release() {
      release_unused();
      return std::move(writer_);
    }

   private:
    void release_unused() {
      if (reserved_ > writer_.written_) {
        std::lock_guard lk(writer_.tier_->capacity_mu_);
        writer_.tier_->used_bytes_ -= reserved_ - writer_.written_;
      }
      reserved_ = 0;
    }
    TierWriter writer_;
    std::uint64_t reserved_;
  };

  void pay_latency() const {
    if (options_.file_latency.count() > 0) std::this_thread::sleep_for(options_.file_latency);
  }

  // Accounts for truncating `path` and then writing `n` bytes to it.
  void reserve_capacity(std::string_view relpath, const fs::path& path, std::uint64_t n) {
    std::lock_guard lk(capacity_mu_);
    std::error_code ec;
    const auto old = fs::is_regular_file(path, ec) ? fs::file_size(path, ec) : 0;
    const auto after = used_bytes_ - std::min(used_bytes_, old) + n;
    if (options_.capacity_bytes && after > *options_.capacity_bytes)
      throw QuotaExceeded(std::string(relpath), "write of " + std::to_string(n) + " bytes exceeds capacity " +
                                                    std::to_string(*options_.capacity_bytes) + " of tier " + label_);
    used_bytes_ = after;
  }

  void reserve_more(const std::string& relpath, std::uint64_t n) {
    std::lock_guard lk(capacity_mu_);
    if (options_.capacity_bytes && used_bytes_ + n > *options_.capacity_bytes)
      throw QuotaExceeded(relpath, "write exceeds capacity " + std::to_string(*options_.capacity_bytes) + " of tier " +
                                       label_);
    used_bytes_ += n;
  }

  ReservedWriter open_write_reserved(std::string_view relpath, const fs::path& path, std::uint64_t reserved) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    pay_latency();
    detail::Fd fd(::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
    if (!fd) {
      const int err = errno;
      std::lock_guard lk(capacity_mu_);
      used_bytes_ -= std::min(used_bytes_, reserved);
      throw IoError(std::string(relpath), "open for write: " + detail::errno_text(err));
    }
    {
      std::lock_guard lk(pending_mu_);
      pending_sync_.insert(path);
    }
    return ReservedWriter(this, std::string(relpath), std::move(fd), reserved);
  }

  void write_paced(TierWriter& w, std::span<const std::byte> data) {
    const auto slot_end = pacer_.reserve(data.size());
    std::size_t off = 0;
    while (off < data.size()) {
      const auto n = ::write(w.fd_.get(), data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError(w.relpath_, "write: " + detail::errno_text(errno));
      }
      off += static_cast<std::size_t>(n);
    }
#ifdef __linux__
    // Start writeback immediately so a throttled device has no dirty backlog
    // left for sync() to flush.
    if (pacer_.active())
      ::sync_file_range(w.fd_.get(), static_cast<off_t>(w.written_), static_cast<off_t>(data.size()),
                        SYNC_FILE_RANGE_WRITE);
#endif
    std::this_thread::sleep_until(slot_end);
    std::lock_guard lk(counter_mu_);
    counters_.write_bytes += data.size();
  }

  std::size_t read_paced(TierReader& r, std::span<std::byte> out) {
    const auto slot_end = pacer_.reserve(out.size());
    std::size_t off = 0;
    while (off < out.size()) {
      const auto n = ::read(r.fd_.get(), out.data() + off, out.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError(r.relpath_, "read: " + detail::errno_text(errno));
      }
      if (n == 0) break;
      off += static_cast<std::size_t>(n);
    }
    std::this_thread::sleep_until(slot_end);
    std::lock_guard lk(counter_mu_);
    counters_.read_bytes += off;
    return off;
  }

  std::string label_;
  fs::path root_;
  TierOptions options_;
  detail::Pacer pacer_;

  mutable std::mutex counter_mu_;
  CounterSnapshot counters_;

  mutable std::mutex capacity_mu_;
  std::uint64_t used_bytes_ = 0;

  std::mutex pending_mu_;
  std::set<fs::path> pending_sync_;
};

inline std::size_t TierReader::read(std::span<std::byte> out) {
  if (out.empty()) return 0;
  return tier_->read_paced(*this, out.first(std::min(out.size(), kChunkBytes)));
}

inline void TierWriter::write(std::span<const std::byte> data) {
  if (!fd_) throw IoError(relpath_, "write after close");
  for (std::size_t off = 0; off < data.size(); off += kChunkBytes) {
    const auto chunk = data.subspan(off, std::min(kChunkBytes, data.size() - off));
    tier_->reserve_more(relpath_, chunk.size());
    tier_->write_paced(*this, chunk);
    written_ += chunk.size();
  }
}

inline void TierWriter::close() {
  if (fd_ && ::close(fd_.release()) != 0) throw IoError(relpath_, "close: " + detail::errno_text(errno));
}

// ---------------------------------------------------------------------------
// Tier configuration: one tier per line,
//   label<TAB>root<TAB>throttle_bytes_per_sec|none<TAB>capacity_bytes|none
// with an optional fifth column file_latency_us|none. Blank lines and lines
// starting with '#' are ignored.

struct TierSpec {
  std::string label;
  fs::path root;
  TierOptions options;
};

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline TierSpec parse_tier_line(std::string_view line) {
  const auto fields = split_tabs(line);
  if (fields.size() != 4 && fields.size() != 5)
    throw InvalidArgument("tier config: expected 4 or 5 tab-separated fields, got " + std::to_string(fields.size()));
  if (fields[0].empty()) throw InvalidArgument("tier config: empty label");
  if (fields[1].empty()) throw InvalidArgument("tier config: empty root for " + std::string(fields[0]));
  TierSpec spec{std::string(fields[0]), fs::path(std::string(fields[1])), {}};
  spec.options.throttle_bytes_per_sec = detail::parse_u64_or_none(fields[2], "throttle");
  spec.options.capacity_bytes = detail::parse_u64_or_none(fields[3], "capacity");
  if (fields.size() == 5)
    spec.options.file_latency = std::chrono::microseconds(detail::parse_u64_or_none(fields[4], "latency").value_or(0));
  return spec;
}

inline std::vector<TierSpec> parse_tier_config(std::istream& in) {
  std::vector<TierSpec> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.push_back(parse_tier_line(line));
  }
  return out;
}

inline std::string to_config_line(const TierSpec& spec) {
  auto opt = [](const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : std::string("none"); };
  std::string line = spec.label + '\t' + spec.root.string() + '\t' + opt(spec.options.throttle_bytes_per_sec) + '\t' +
                     opt(spec.options.capacity_bytes);
  if (spec.options.file_latency.count() > 0) line += '\t' + std::to_string(spec.options.file_latency.count());
  return line;
}

// Tiers keyed by label, shared between the components of one run.
class TierSet {
 public:
  TierSet() = default;
  explicit TierSet(const std::vector<TierSpec>& specs) {
    for (const auto& s : specs) add(s);
  }

  static TierSet load(const fs::path& config) {
    std::ifstream in(config);
    if (!in) throw NotFound(config.string(), "cannot open tier config");
    return TierSet(parse_tier_config(in));
  }

  std::shared_ptr<StorageTier> add(const TierSpec& spec) {
    if (tiers_.count(spec.label)) throw InvalidArgument("duplicate tier label '" + spec.label + "'");
    auto tier = std::make_shared<StorageTier>(spec.label, spec.root, spec.options);
    tiers_.emplace(spec.label, tier);
    return tier;
  }

  std::shared_ptr<StorageTier> at(const std::string& label) const {
    const auto it = tiers_.find(label);
    if (it == tiers_.end()) throw InvalidArgument("unknown tier '" + label + "'");
    return it->second;
  }

  bool contains(const std::string& label) const { return tiers_.count(label) != 0; }
  std::size_t size() const { return tiers_.size(); }

 private:
  std::map<std::string, std::shared_ptr<StorageTier>> tiers_;
};

}  // namespace dlio
