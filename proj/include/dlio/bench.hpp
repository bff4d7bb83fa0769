#pragma once

// Experiment runners: ingestion micro-benchmark (with and without
// preprocessing), mini-application epoch, checkpoint/burst-buffer comparison
// and a sequential raw I/O probe, plus the warm-up + median protocol and
// result emission.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dlio/checkpoint.hpp"
#include "dlio/error.hpp"
#include "dlio/fsio.hpp"
#include "dlio/pipeline.hpp"
#include "dlio/trace.hpp"
#include "dlio/workload.hpp"

namespace dlio {

inline constexpr double kMiB = 1024.0 * 1024.0;

enum class Experiment { ingest, ingest_raw, miniapp, ckpt, rawio };

inline const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::ingest: return "ingest";
    case Experiment::ingest_raw: return "ingest-raw";
    case Experiment::miniapp: return "miniapp";
    case Experiment::ckpt: return "ckpt";
    case Experiment::rawio: return "rawio";
  }
  return "?";
}

inline Experiment parse_experiment(std::string_view s) {
  for (auto e : {Experiment::ingest, Experiment::ingest_raw, Experiment::miniapp, Experiment::ckpt, Experiment::rawio})
    if (s == to_string(e)) return e;
  throw InvalidArgument("unknown experiment '" + std::string(s) + "'");
}

enum class CkptMode { none, direct, burst };

inline const char* to_string(CkptMode m) {
  switch (m) {
    case CkptMode::none: return "none";
    case CkptMode::direct: return "direct";
    case CkptMode::burst: return "burst";
  }
  return "?";
}

inline CkptMode parse_ckpt_mode(std::string_view s) {
  for (auto m : {CkptMode::none, CkptMode::direct, CkptMode::burst})
    if (s == to_string(m)) return m;
  throw InvalidArgument("unknown checkpoint mode '" + std::string(s) + "'");
}

struct BenchConfig {
  Experiment experiment = Experiment::ingest;
  std::string data_tier = "data";
  std::string fast_tier;  // burst buffer staging tier
  std::string slow_tier;  // checkpoint destination (direct) / drain target (burst)
  std::size_t threads = 1;
  std::size_t batch_size = 64;
  std::size_t prefetch_depth = 1;
  std::size_t iterations = 0;  // 0: whole corpus (ingest, miniapp)
  ConsumerCost consumer = ConsumerCost::fixed(std::chrono::milliseconds(100));
  std::size_t ckpt_every = 20;
  CkptMode ckpt_mode = CkptMode::direct;
  std::size_t keep_last = 5;
  std::string ckpt_prefix = "ckpt/model";
  std::uint64_t size_bytes = 512ull << 20;  // rawio file size, ckpt store size
  std::size_t repetitions = 6;
  std::uint64_t seed = 42;
  std::size_t shuffle_buffer = 1024;
  std::size_t resize = 224;
  std::size_t num_classes = 102;
  std::string manifest = "manifest.tsv";
  bool advise = true;
  std::chrono::nanoseconds trace_interval = std::chrono::seconds(1);
  bool trace = false;

  void validate() const {
    if (repetitions < 2) throw InvalidArgument("repetitions must be >= 2 (one warm-up plus measured runs)");
    if (threads == 0) throw InvalidArgument("threads must be >= 1");
    if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
    if (shuffle_buffer == 0) throw InvalidArgument("shuffle buffer must be >= 1");
    if (experiment == Experiment::ckpt && ckpt_mode == CkptMode::burst && (fast_tier.empty() || slow_tier.empty()))
      throw InvalidArgument("burst mode needs --fast-tier and --slow-tier");
    if (experiment == Experiment::ckpt && ckpt_mode == CkptMode::direct && fast_tier.empty() && slow_tier.empty())
      throw InvalidArgument("direct mode needs a checkpoint tier (--slow-tier)");
    if (experiment == Experiment::rawio && size_bytes == 0) throw InvalidArgument("rawio size must be > 0");
  }
};

// One repetition. For rawio, wall_s is the write+read total.
struct RepMeasurement {
  double wall_s = 0.0;
  std::uint64_t images = 0;
  std::uint64_t bytes = 0;
  std::uint64_t dropped = 0;
  std::uint64_t steps = 0;
  std::vector<double> stalls_s;  // per checkpoint, caller-blocked time
  double drain_s = 0.0;          // loop end until the last drain resolved
  double read_mb_s = 0.0;
  double write_mb_s = 0.0;
  std::uint32_t content_checksum = 0;

  double images_per_s() const { return wall_s > 0 ? static_cast<double>(images) / wall_s : 0.0; }
  double mb_per_s() const { return wall_s > 0 ? static_cast<double>(bytes) / kMiB / wall_s : 0.0; }
  double stall_s_total() const {
    double s = 0;
    for (auto v : stalls_s) s += v;
    return s;
  }
};

// Median of the measured repetitions: index 0 is the warm-up and is skipped.
inline double median_excluding_warmup(const std::vector<double>& values) {
  if (values.size() < 2) throw InvalidArgument("need a warm-up and at least one measured value");
  std::vector<double> v(values.begin() + 1, values.end());
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct ProtocolResult {
  std::vector<double> values;  // every repetition, warm-up first
  double median = 0.0;
  double spread = 0.0;  // max - min over measured repetitions
};

// Runs f `repetitions` times, discards the first run and reports the median
// of the rest.
template <class F>
ProtocolResult run_protocol(F&& f, std::size_t repetitions) {
  if (repetitions < 2) throw InvalidArgument("repetitions must be >= 2");
  ProtocolResult r;
  for (std::size_t i = 0; i < repetitions; ++i) r.values.push_back(static_cast<double>(f()));
  r.median = median_excluding_warmup(r.values);
  const auto [lo, hi] = std::minmax_element(r.values.begin() + 1, r.values.end());
  r.spread = *hi - *lo;
  return r;
}

struct RunResult {
  BenchConfig config;
  std::vector<RepMeasurement> reps;  // reps[0] is the warm-up

  std::optional<Trace> trace;  // of the last repetition, when tracing was on

  template <class Metric>
  double median(Metric m) const {
    std::vector<double> v;
    for (const auto& r : reps) v.push_back(m(r));
    return median_excluding_warmup(v);
  }

  double median_wall_s() const { return median([](const auto& r) { return r.wall_s; }); }
  double median_images_per_s() const { return median([](const auto& r) { return r.images_per_s(); }); }
  double median_mb_per_s() const { return median([](const auto& r) { return r.mb_per_s(); }); }
  double median_stall_s() const { return median([](const auto& r) { return r.stall_s_total(); }); }
  double median_read_mb_s() const { return median([](const auto& r) { return r.read_mb_s; }); }
  double median_write_mb_s() const { return median([](const auto& r) { return r.write_mb_s; }); }
  std::uint64_t dropped() const { return reps.empty() ? 0 : reps.back().dropped; }
};

namespace detail {

inline double seconds_since(Clock::time_point t0, Clock::time_point t1) {
  return std::chrono::duration<double>(t1 - t0).count();
}

inline void advise_corpus(StorageTier& tier, const Manifest& m) {
  for (const auto& e : m.entries) tier.advise_dont_need(e.relpath);
}

inline std::size_t shuffle_size(const BenchConfig& cfg, std::size_t n) {
  return std::max<std::size_t>(1, std::min(cfg.shuffle_buffer, n));
}

// source -> shuffle -> map(read [+ decode + resize]) -> ignore_errors -> batch -> prefetch
inline Dataset<Batch<Element>> ingest_dataset(const BenchConfig& cfg, const Manifest& m,
                                              std::shared_ptr<StorageTier> tier, bool raw, bool one_hot_labels,
                                              bool drop_remainder, std::uint64_t seed) {
  auto src = from_slices(m.slices()).shuffle(shuffle_size(cfg, m.entries.size()), seed);
  if (raw)
    return std::move(src)
        .map_parallel(read_fn(std::move(tier)), cfg.threads)
        .ignore_errors()
        .batch(cfg.batch_size, drop_remainder)
        .prefetch(cfg.prefetch_depth);
  PreprocessOptions opts;
  opts.out_w = opts.out_h = cfg.resize;
  opts.num_classes = one_hot_labels ? cfg.num_classes : 0;
  return std::move(src)
      .map_parallel(read_decode_resize_fn(std::move(tier), opts), cfg.threads)
      .ignore_errors()
      .batch(cfg.batch_size, drop_remainder)
      .prefetch(cfg.prefetch_depth);
}

inline std::uint64_t batch_bytes(const Batch<Element>& b) {
  std::uint64_t n = 0;
  for (const auto& e : b.elements) n += e.source_bytes;
  return n;
}

inline RepMeasurement ingest_once(const BenchConfig& cfg, StorageTier& tier_ref, std::shared_ptr<StorageTier> tier,
                                  const Manifest& m, bool raw) {
  if (cfg.advise) advise_corpus(tier_ref, m);
  auto ds = ingest_dataset(cfg, m, std::move(tier), raw, false, false, cfg.seed);
  RepMeasurement rep;
  const auto t_first = Clock::now();
  auto t_last = t_first;
  while (cfg.iterations == 0 || rep.steps < cfg.iterations) {
    auto b = ds.next();
    if (!b) break;
    t_last = Clock::now();
    rep.images += b->size();
    rep.bytes += batch_bytes(*b);
    ++rep.steps;
  }
  rep.wall_s = seconds_since(t_first, t_last);
  rep.dropped = ds.dropped();
  return rep;
}

}  // namespace detail

inline RunResult run_ingest_impl(const BenchConfig& cfg, const TierSet& tiers, bool raw) {
  cfg.validate();
  auto tier = tiers.at(cfg.data_tier);
  const auto manifest = load_manifest(*tier, cfg.manifest);
  RunResult r{cfg, {}, std::nullopt};
  for (std::size_t i = 0; i < cfg.repetitions; ++i) r.reps.push_back(detail::ingest_once(cfg, *tier, tier, manifest, raw));
  return r;
}

// Iterator-only loop over read + decode + resize; reports images/s and MB/s.
inline RunResult run_ingest(const BenchConfig& cfg, const TierSet& tiers) { return run_ingest_impl(cfg, tiers, false); }

// Same loop with a read-only map function.
inline RunResult run_ingest_raw(const BenchConfig& cfg, const TierSet& tiers) {
  return run_ingest_impl(cfg, tiers, true);
}

// One epoch of next() + consumer_step() with one-hot labels and full batches.
inline RunResult run_miniapp(const BenchConfig& cfg, const TierSet& tiers) {
  cfg.validate();
  auto tier = tiers.at(cfg.data_tier);
  const auto manifest = load_manifest(*tier, cfg.manifest);
  RunResult r{cfg, {}, std::nullopt};
  for (std::size_t i = 0; i < cfg.repetitions; ++i) {
    if (cfg.advise) detail::advise_corpus(*tier, manifest);
    auto ds = detail::ingest_dataset(cfg, manifest, tier, false, true, true, cfg.seed);
    std::unique_ptr<TraceHandle> tracer;
    if (cfg.trace) tracer = start_trace({tier}, cfg.trace_interval);
    RepMeasurement rep;
    const auto t0 = Clock::now();
    while (cfg.iterations == 0 || rep.steps < cfg.iterations) {
      auto b = ds.next();
      if (!b) break;
      rep.images += b->size();
      rep.bytes += detail::batch_bytes(*b);
      const auto st = consumer_step(*b, cfg.consumer);
      rep.content_checksum = crc32(std::as_bytes(std::span(&st.checksum, 1)), rep.content_checksum);
      ++rep.steps;
    }
    rep.wall_s = detail::seconds_since(t0, Clock::now());
    rep.dropped = ds.dropped();
    if (tracer) r.trace = tracer->stop();
    r.reps.push_back(std::move(rep));
  }
  return r;
}

// Variables shaped after AlexNet's layers, scaled so the store holds about
// `total_bytes` of f32 values.
inline VariableStore make_variable_store(std::uint64_t total_bytes, std::uint64_t seed) {
  struct Layer {
    const char* name;
    double params;
  };
  static constexpr Layer layers[] = {
      {"conv1/weights", 34848},   {"conv1/biases", 96},       {"conv2/weights", 307200}, {"conv2/biases", 256},
      {"conv3/weights", 884736},  {"conv3/biases", 384},      {"conv4/weights", 663552}, {"conv4/biases", 384},
      {"conv5/weights", 442368},  {"conv5/biases", 256},      {"fc6/weights", 37748736}, {"fc6/biases", 4096},
      {"fc7/weights", 16777216},  {"fc7/biases", 4096},       {"fc8/weights", 417792},   {"fc8/biases", 102},
  };
  double total_params = 0;
  for (const auto& l : layers) total_params += l.params;
  const double floats = static_cast<double>(total_bytes) / 4.0;

  std::uint64_t state = seed;
  VariableStore store;
  std::uint64_t assigned = 0;
  const std::size_t nlayers = std::size(layers);
  for (std::size_t i = 0; i < nlayers; ++i) {
    std::size_t n;
    if (i + 1 == nlayers)
      n = static_cast<std::size_t>(std::max<double>(1.0, floats - static_cast<double>(assigned)));
    else
      n = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(floats * layers[i].params / total_params)));
    assigned += n;
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(static_cast<double>(detail::splitmix64(state) >> 40) / double(1 << 24)) - 0.5f;
    store.add(layers[i].name, Tensor({n}, std::move(v)));
  }
  return store;
}

namespace detail {

inline void clear_checkpoints(StorageTier& tier, const std::string& prefix) {
  for (const auto& s : list_checkpoints(tier, prefix)) remove_set(tier, s);
}

}  // namespace detail

// Training loop of `iterations` consumer steps with a checkpoint every
// `ckpt_every` steps, saved directly or through the burst buffer. Reports
// per-checkpoint caller stalls; outstanding drains are joined before the
// repetition ends but are not part of its wall time.
inline RunResult run_ckpt(const BenchConfig& cfg, const TierSet& tiers) {
  cfg.validate();
  auto data = tiers.at(cfg.data_tier);
  const auto manifest = load_manifest(*data, cfg.manifest);
  std::shared_ptr<StorageTier> fast = cfg.fast_tier.empty() ? nullptr : tiers.at(cfg.fast_tier);
  std::shared_ptr<StorageTier> slow = cfg.slow_tier.empty() ? nullptr : tiers.at(cfg.slow_tier);
  std::shared_ptr<StorageTier> direct = slow ? slow : fast;
  const std::size_t iterations = cfg.iterations == 0 ? 100 : cfg.iterations;

  SaverConfig saver;
  saver.prefix = cfg.ckpt_prefix;
  saver.keep_last = cfg.keep_last;
  saver.interval_steps = std::max<std::size_t>(1, cfg.ckpt_every);
  const bool checkpointing = cfg.ckpt_mode != CkptMode::none && cfg.ckpt_every > 0;

  const auto store = checkpointing ? make_variable_store(cfg.size_bytes, cfg.seed) : VariableStore{};

  std::vector<std::shared_ptr<StorageTier>> traced{data};
  for (const auto& t : {fast, slow})
    if (t && std::find(traced.begin(), traced.end(), t) == traced.end()) traced.push_back(t);

  RunResult r{cfg, {}, std::nullopt};
  for (std::size_t rep_i = 0; rep_i < cfg.repetitions; ++rep_i) {
    for (const auto& t : traced)
      if (t != data) detail::clear_checkpoints(*t, saver.prefix);
    if (cfg.advise) detail::advise_corpus(*data, manifest);

    std::optional<BurstBuffer> bb;
    if (checkpointing && cfg.ckpt_mode == CkptMode::burst) bb.emplace(BurstBufferConfig{fast, slow, false});
    std::vector<DrainTicket> tickets;

    std::unique_ptr<TraceHandle> tracer;
    if (cfg.trace) tracer = start_trace(traced, cfg.trace_interval);

    RepMeasurement rep;
    std::uint64_t epoch = 0;
    auto ds = detail::ingest_dataset(cfg, manifest, data, false, true, true, cfg.seed);
    const auto t0 = Clock::now();
    while (rep.steps < iterations) {
      auto b = ds.next();
      if (!b) {
        if (manifest.entries.size() < cfg.batch_size) throw InvalidArgument("corpus smaller than one batch");
        ds = detail::ingest_dataset(cfg, manifest, data, false, true, true, cfg.seed + ++epoch);
        continue;
      }
      rep.images += b->size();
      rep.bytes += detail::batch_bytes(*b);
      const auto st = consumer_step(*b, cfg.consumer);
      rep.content_checksum = crc32(std::as_bytes(std::span(&st.checksum, 1)), rep.content_checksum);
      ++rep.steps;
      if (checkpointing && saver.due(rep.steps)) {
        if (tracer) tracer->mark("ckpt-" + std::to_string(rep.steps));
        const auto s0 = Clock::now();
        if (bb)
          tickets.push_back(bb->burst_save(store, saver, rep.steps).second);
        else
          save(store, *direct, saver, rep.steps);
        rep.stalls_s.push_back(detail::seconds_since(s0, Clock::now()));
      }
    }
    const auto t_end = Clock::now();
    rep.wall_s = detail::seconds_since(t0, t_end);
    rep.dropped = ds.dropped();
    for (const auto& t : tickets) {
      const auto st = drain_wait(t, std::chrono::hours(1));
      if (!st.completed()) throw IoError(t.checkpoint().data(), "drain failed: " + st.error);
    }
    rep.drain_s = detail::seconds_since(t_end, Clock::now());
    if (tracer) r.trace = tracer->stop();
    r.reps.push_back(std::move(rep));
  }
  return r;
}

// Sequential write of size_bytes in 1 MiB blocks (plus sync), then a
// sequential read after dropping the file from the page cache.
inline RunResult run_rawio(const BenchConfig& cfg, const TierSet& tiers) {
  cfg.validate();
  auto tier = tiers.at(cfg.data_tier);
  const std::string file = "rawio/probe.bin";
  Bytes block(kChunkBytes);
  std::uint64_t state = cfg.seed;
  for (std::size_t i = 0; i + 8 <= block.size(); i += 8) {
    const auto w = detail::splitmix64(state);
    std::memcpy(block.data() + i, &w, 8);
  }
  RunResult r{cfg, {}, std::nullopt};
  for (std::size_t i = 0; i < cfg.repetitions; ++i) {
    RepMeasurement rep;
    const auto w0 = Clock::now();
    {
      auto out = tier->open_write(file);
      for (std::uint64_t left = cfg.size_bytes; left > 0;) {
        const auto n = std::min<std::uint64_t>(left, block.size());
        out.write(std::span<const std::byte>(block).first(n));
        left -= n;
      }
      out.close();
      tier->sync();
    }
    const auto w1 = Clock::now();
    if (cfg.advise) tier->advise_dont_need(file);
    const auto r0 = Clock::now();
    {
      auto in = tier->open_read(file);
      while (in.read(block) > 0) {
      }
    }
    const auto r1 = Clock::now();
    const double mib = static_cast<double>(cfg.size_bytes) / kMiB;
    rep.write_mb_s = mib / detail::seconds_since(w0, w1);
    rep.read_mb_s = mib / detail::seconds_since(r0, r1);
    rep.wall_s = detail::seconds_since(w0, r1);
    rep.bytes = 2 * cfg.size_bytes;
    r.reps.push_back(rep);
  }
  tier->remove(file);
  return r;
}

inline RunResult run_experiment(const BenchConfig& cfg, const TierSet& tiers) {
  switch (cfg.experiment) {
    case Experiment::ingest: return run_ingest(cfg, tiers);
    case Experiment::ingest_raw: return run_ingest_raw(cfg, tiers);
    case Experiment::miniapp: return run_miniapp(cfg, tiers);
    case Experiment::ckpt: return run_ckpt(cfg, tiers);
    case Experiment::rawio: return run_rawio(cfg, tiers);
  }
  throw InvalidArgument("unknown experiment");
}

// ---------------------------------------------------------------------------
// Results

inline constexpr const char* kResultsHeader =
    "experiment,threads,batch_size,prefetch,rep,wall_s,images_per_s,mb_per_s,stall_s_total,dropped";

namespace detail {

struct ResultRow {
  std::string experiment;
  std::string rep;
  double wall_s, images_per_s, mb_per_s, stall_s;
  std::uint64_t dropped;
};

inline std::vector<ResultRow> median_rows(const RunResult& r) {
  const std::string exp = to_string(r.config.experiment);
  if (r.config.experiment == Experiment::rawio) {
    // The probe has two bandwidths; one row each.
    return {{exp + "-write", "median", r.median_wall_s(), 0.0, r.median_write_mb_s(), 0.0, 0},
            {exp + "-read", "median", r.median_wall_s(), 0.0, r.median_read_mb_s(), 0.0, 0}};
  }
  return {{exp, "median", r.median_wall_s(), r.median_images_per_s(), r.median_mb_per_s(), r.median_stall_s(),
           r.dropped()}};
}

inline std::vector<ResultRow> rep_rows(const RunResult& r) {
  std::vector<ResultRow> rows;
  const std::string exp = to_string(r.config.experiment);
  for (std::size_t i = 0; i < r.reps.size(); ++i) {
    const auto& m = r.reps[i];
    if (r.config.experiment == Experiment::rawio) {
      rows.push_back({exp + "-write", std::to_string(i), m.wall_s, 0.0, m.write_mb_s, 0.0, 0});
      rows.push_back({exp + "-read", std::to_string(i), m.wall_s, 0.0, m.read_mb_s, 0.0, 0});
    } else {
      rows.push_back({exp, std::to_string(i), m.wall_s, m.images_per_s(), m.mb_per_s(), m.stall_s_total(), m.dropped});
    }
  }
  return rows;
}

inline void write_rows(std::ostream& out, const RunResult& r, const std::vector<ResultRow>& rows) {
  for (const auto& row : rows) {
    out << row.experiment << ',' << r.config.threads << ',' << r.config.batch_size << ',' << r.config.prefetch_depth
        << ',' << row.rep << ',' << row.wall_s << ',' << row.images_per_s << ',' << row.mb_per_s << ','
        << row.stall_s << ',' << row.dropped << '\n';
  }
}

inline double plotted_value(const RunResult& r, const ResultRow& row) {
  switch (r.config.experiment) {
    case Experiment::ingest:
    case Experiment::ingest_raw: return row.images_per_s;
    case Experiment::rawio: return row.mb_per_s;
    default: return row.wall_s;
  }
}

}  // namespace detail

inline fs::path reps_csv_path(const fs::path& csv) {
  auto p = csv;
  p.replace_filename(csv.stem().string() + "_reps" + csv.extension().string());
  return p;
}

// Writes one median row per result to `csv` and every repetition (warm-up
// included, rep 0) to the sibling <stem>_reps<ext>. With `plot_out`, also a
// gnuplot script drawing the medians as a bar chart.
inline void emit_results(const std::vector<RunResult>& results, const fs::path& csv,
                         const std::optional<fs::path>& plot_out = std::nullopt) {
  std::ofstream out(csv, std::ios::trunc);
  std::ofstream reps(reps_csv_path(csv), std::ios::trunc);
  if (!out) throw IoError(csv.string(), "cannot open results CSV");
  if (!reps) throw IoError(reps_csv_path(csv).string(), "cannot open per-repetition CSV");
  out.precision(9);
  reps.precision(9);
  out << kResultsHeader << '\n';
  reps << kResultsHeader << '\n';
  for (const auto& r : results) {
    detail::write_rows(out, r, detail::median_rows(r));
    detail::write_rows(reps, r, detail::rep_rows(r));
  }
  if (!out || !reps) throw IoError(csv.string(), "write failed");

  if (!plot_out) return;
  std::ofstream gp(*plot_out, std::ios::trunc);
  if (!gp) throw IoError(plot_out->string(), "cannot open plot script");
  std::string ylabel = "seconds";
  if (!results.empty()) {
    const auto e = results.front().config.experiment;
    if (e == Experiment::ingest || e == Experiment::ingest_raw) ylabel = "images/s";
    if (e == Experiment::rawio) ylabel = "MiB/s";
  }
  gp << "# gnuplot script; run: gnuplot " << plot_out->filename().string() << "\n"
     << "set terminal pngcairo size 800,500\n"
     << "set output '" << plot_out->stem().string() << ".png'\n"
     << "set style data histograms\nset style fill solid 0.8 border -1\nset boxwidth 0.8\n"
     << "set ylabel '" << ylabel << "'\nset xtics rotate by -30\nset key off\n"
     << "$medians << EOD\n";
  for (const auto& r : results)
    for (const auto& row : detail::median_rows(r))
      gp << '"' << row.experiment << " t" << r.config.threads << " b" << r.config.batch_size << " p"
         << r.config.prefetch_depth << "\" " << detail::plotted_value(r, row) << '\n';
  gp << "EOD\nplot $medians using 2:xtic(1)\n";
}

}  // namespace dlio
