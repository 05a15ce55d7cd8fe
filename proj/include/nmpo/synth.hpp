#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nmpo/ingest.hpp"
#include "nmpo/io.hpp"
#include "nmpo/types.hpp"

namespace nmpo {

/// Planted relationships of a synthetic corpus:
///   edp_speedup        = ipc_alpha * ipc + ipc_beta
///   host_flop_per_byte = fpb_intercept + fpb_slope * ipc
/// Speedups are drawn uniformly within +-half_width of a class center.
struct SynthMapping {
  double ipc_alpha = 2.0;
  double ipc_beta = -0.5;
  double fpb_intercept = 2.0;
  double fpb_slope = -1.0;
  double center_no = 0.5;
  double center_maybe = 1.5;
  double center_yes = 3.0;
  double half_width = 0.15;

  double ipc_for(double speedup) const { return (speedup - ipc_beta) / ipc_alpha; }
  double center(OffloadLabel label) const;
};

struct SynthConfig {
  std::vector<std::string> apps{"atax", "chol", "doit", "gemv", "gesu",
                                "mvt",  "syrk", "syr2k", "trmm"};
  int levels_per_app = 7;  // training levels; one test level follows
  int test_levels = 1;
  std::vector<int> threads{8, 16};
  /// Relative noise on NMC IPC and trace energy (truncated at 3 sigma).
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  SynthMapping mapping;

  /// Throws ErrorKind::Config, including when the planted bands could cross a
  /// label boundary or the app mix misses a class.
  void validate() const;

  /// Keys: apps | n_apps, levels_per_app, test_levels, threads, noise_sigma,
  /// seed, mapping{...}.
  static SynthConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SynthRun {
  RunSpec spec;
  double speedup = 0.0;  // noiseless
  double ipc = 0.0;      // noiseless
  OffloadLabel label = OffloadLabel::no;
};

struct SynthCorpus {
  FileSet files;  // manifest.json, config.json, ground_truth.csv, perf/, sim/
  std::vector<SynthRun> truth;
};

/// Deterministic in the config (including its seed).
SynthCorpus generate_synthetic_corpus(const SynthConfig& cfg);

/// Noiseless label a run of app `app_index` at `level` receives.
OffloadLabel planted_label(std::size_t app_index, int level, int levels_per_app);

/// Mean noiseless IPC over the corpus.
double planted_ipc_scale(const std::vector<SynthRun>& truth);

}  // namespace nmpo
