// Command-line driver for the I/O benchmarks.
//
//   bench corpus  --tiers-config tiers.tsv --data-tier ssd --count 16384
//   bench ingest  --tiers-config tiers.tsv --data-tier ssd --threads 1,2,4,8 --csv out.csv
//   bench ckpt    --tiers-config tiers.tsv --data-tier ssd --ckpt-mode burst --fast-tier optane --slow-tier hdd
//
// Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 self-check failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "dlio/dlio.hpp"

using namespace dlio;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitSelfCheck = 4;

struct Options {
  std::string tiers_config;
  std::string threads = "1";
  double consumer_cost_ms = 100.0;
  std::string ckpt_mode = "direct";
  std::string csv = "results.csv";
  std::string plot;
  std::string trace;
  double trace_interval_s = 1.0;
  bool no_advise = false;
  BenchConfig cfg;
  CorpusSpec corpus;
};

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size()) throw InvalidArgument("bad list value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("--tiers-config", o.tiers_config, "tier config (label, root, throttle, capacity per line)")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--data-tier", o.cfg.data_tier, "tier holding the corpus")->capture_default_str();
  app->add_option("--seed", o.cfg.seed, "random seed")->capture_default_str();
}

void add_run_options(CLI::App* app, Options& o) {
  add_common(app, o);
  auto& c = o.cfg;
  app->add_option("--threads", o.threads, "map parallelism, comma-separated for a sweep")->capture_default_str();
  app->add_option("--batch-size", c.batch_size)->capture_default_str();
  app->add_option("--prefetch", c.prefetch_depth, "prefetch depth, 0 disables")->capture_default_str();
  app->add_option("--iterations", c.iterations, "steps per repetition, 0 = one epoch")->capture_default_str();
  app->add_option("--consumer-cost-ms", o.consumer_cost_ms, "simulated training step")->capture_default_str();
  app->add_option("--ckpt-every", c.ckpt_every)->capture_default_str();
  app->add_option("--ckpt-mode", o.ckpt_mode)->check(CLI::IsMember({"none", "direct", "burst"}))->capture_default_str();
  app->add_option("--keep-last", c.keep_last)->capture_default_str();
  app->add_option("--fast-tier", c.fast_tier, "burst buffer tier");
  app->add_option("--slow-tier", c.slow_tier, "checkpoint destination tier");
  app->add_option("--size-bytes", c.size_bytes, "rawio file size / checkpoint size")->capture_default_str();
  app->add_option("--reps", c.repetitions, "repetitions including the discarded warm-up")->capture_default_str();
  app->add_option("--shuffle-buffer", c.shuffle_buffer)->capture_default_str();
  app->add_option("--resize", c.resize, "output edge length")->capture_default_str();
  app->add_option("--manifest", c.manifest)->capture_default_str();
  app->add_option("--csv", o.csv, "results CSV")->capture_default_str();
  app->add_option("--plot", o.plot, "gnuplot script to write");
  app->add_option("--trace", o.trace, "per-tier byte trace CSV of the last repetition");
  app->add_option("--trace-interval", o.trace_interval_s, "seconds")->capture_default_str();
  app->add_flag("--no-advise", o.no_advise, "keep the corpus in the page cache between repetitions");
}

int run_experiments(Experiment e, Options& o) {
  auto tiers = TierSet::load(o.tiers_config);
  auto base = o.cfg;
  base.experiment = e;
  base.ckpt_mode = parse_ckpt_mode(o.ckpt_mode);
  base.consumer = ConsumerCost::fixed(
      std::chrono::microseconds(static_cast<std::int64_t>(o.consumer_cost_ms * 1000.0)));
  base.advise = !o.no_advise;
  base.trace = !o.trace.empty();
  base.trace_interval = std::chrono::nanoseconds(static_cast<std::int64_t>(o.trace_interval_s * 1e9));

  std::vector<RunResult> results;
  for (auto threads : parse_list(o.threads)) {
    auto cfg = base;
    cfg.threads = threads;
    cfg.validate();
    results.push_back(run_experiment(cfg, tiers));
    const auto& r = results.back();
    std::fprintf(stderr, "%s threads=%zu wall=%.3fs images/s=%.1f MiB/s=%.1f\n", to_string(e), threads,
                 r.median_wall_s(), r.median_images_per_s(), r.median_mb_per_s());
  }
  emit_results(results, o.csv, o.plot.empty() ? std::nullopt : std::optional<fs::path>(o.plot));
  if (!o.trace.empty()) {
    if (!results.back().trace) throw InvalidArgument("experiment " + std::string(to_string(e)) + " does not trace");
    write_trace_csv(*results.back().trace, o.trace);
  }
  return 0;
}

int run_corpus(Options& o) {
  auto tiers = TierSet::load(o.tiers_config);
  o.corpus.seed = o.cfg.seed;
  const auto m = generate_corpus(*tiers.at(o.cfg.data_tier), o.corpus);
  std::fprintf(stderr, "wrote %zu images (%zu corrupt) to tier %s\n", m.entries.size(), m.corrupted.size(),
               o.cfg.data_tier.c_str());
  return 0;
}

// Writes, reads back and checksums a probe file on every tier in the config.
int run_selfcheck(Options& o) {
  std::ifstream in(o.tiers_config);
  const auto specs = parse_tier_config(in);
  int bad = 0;
  for (const auto& spec : specs) {
    StorageTier tier(spec.label, spec.root, spec.options);
    const auto before = tier.snapshot_counters();
    Bytes probe(256 * 1024);
    std::uint64_t state = o.cfg.seed;
    for (auto& b : probe) b = static_cast<std::byte>(detail::splitmix64(state));
    tier.write_file(".selfcheck", probe);
    tier.sync();
    tier.advise_dont_need(".selfcheck");
    const auto back = tier.read_file(".selfcheck");
    const auto after = tier.snapshot_counters();
    tier.remove(".selfcheck");
    const bool ok = back == probe && after.read_bytes - before.read_bytes == probe.size() &&
                    after.write_bytes - before.write_bytes == probe.size();
    std::printf("%s %s\n", ok ? "ok  " : "FAIL", spec.label.c_str());
    if (!ok) ++bad;
  }
  return bad ? kExitSelfCheck : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"I/O benchmark driver for training pipelines"};
  app.require_subcommand(1);
  Options o;

  auto* corpus = app.add_subcommand("corpus", "generate a synthetic IMGBIN corpus");
  add_common(corpus, o);
  corpus->add_option("--count", o.corpus.count, "number of images")->required();
  corpus->add_option("--median-bytes", o.corpus.size_median_bytes)->capture_default_str();
  corpus->add_option("--spread", o.corpus.size_spread, "log-normal multiplicative spread")->capture_default_str();
  corpus->add_option("--corrupt-fraction", o.corpus.corrupt_fraction)->capture_default_str();
  corpus->add_option("--classes", o.corpus.num_classes)->capture_default_str();
  corpus->add_option("--manifest", o.corpus.manifest)->capture_default_str();

  std::vector<std::pair<CLI::App*, Experiment>> runs;
  for (auto [name, e, help] : {std::tuple{"ingest", Experiment::ingest, "read + decode + resize throughput"},
                               std::tuple{"ingest-raw", Experiment::ingest_raw, "read-only throughput"},
                               std::tuple{"miniapp", Experiment::miniapp, "one training epoch"},
                               std::tuple{"ckpt", Experiment::ckpt, "training loop with checkpoints"},
                               std::tuple{"rawio", Experiment::rawio, "sequential write/read bandwidth"}}) {
    auto* sub = app.add_subcommand(name, help);
    add_run_options(sub, o);
    runs.emplace_back(sub, e);
  }

  auto* selfcheck = app.add_subcommand("selfcheck", "write/read/verify a probe file on every tier");
  selfcheck->add_option("--tiers-config", o.tiers_config)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (corpus->parsed()) return run_corpus(o);
    if (selfcheck->parsed()) return run_selfcheck(o);
    for (auto& [sub, e] : runs)
      if (sub->parsed()) return run_experiments(e, o);
  } catch (const InvalidArgument& e) {
    std::cerr << "bench: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "bench: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitConfig;
}
