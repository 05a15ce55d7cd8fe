#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "nmpo/ingest.hpp"
#include "nmpo/io.hpp"
#include "nmpo/pipeline.hpp"
#include "nmpo/synth.hpp"

namespace testutil {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("nmpo_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// A complete host profile in perf's -x; layout.
inline std::string perf_text(double time_s = 0.5, double energy_j = 10.0, double reads_mib = 512.0,
                             double writes_mib = 512.0, double flops = 1e9) {
  std::string out = "# run_count: 5\n";
  out += nmpo::format_double(time_s * 1e9) + ";ns;duration_time\n";
  out += nmpo::format_double(energy_j) + ";Joules;power/energy-pkg/\n";
  out += nmpo::format_double(reads_mib) + ";MiB;uncore_imc/data_reads/\n";
  out += nmpo::format_double(writes_mib) + ";MiB;uncore_imc/data_writes/\n";
  out += nmpo::format_double(flops) + ";;fp_arith_inst_retired.scalar_double\n";
  out += "123456;;cycles\n";
  return out;
}

inline nmpo::NmcSimResult nmc_result(double trace_energy_pj, double total_time_ns,
                                     double ipc = 0.5) {
  nmpo::NmcSimResult r;
  r.cpu_instructions = 1e6;
  r.cpu_cycles = 1e6 / ipc;
  r.ipc = ipc;
  r.total_time_ns = total_time_ns;
  r.trace_energy_pj = trace_energy_pj;
  r.avg_power_mw = trace_energy_pj / total_time_ns;
  return r;
}

/// The synthetic corpus written to disk and loaded back through ingest.
struct SynthFixture {
  TempDir dir;
  nmpo::SynthCorpus corpus;
  nmpo::PipelineConfig config;
  std::vector<nmpo::RunRecord> records;

  explicit SynthFixture(const nmpo::SynthConfig& cfg = {}) {
    corpus = nmpo::generate_synthetic_corpus(cfg);
    nmpo::write_directory_atomic(dir / "corpus", corpus.files, false);
    config = nmpo::PipelineConfig::load(dir / "corpus" / "config.json");
    records = nmpo::load_annotated_corpus(config);
  }
};

/// Small, fast search spaces for tests that only need a working model.
inline nmpo::PipelineConfig quick_config(nmpo::PipelineConfig cfg, int trees = 20) {
  cfg.search.regressor = nmpo::SearchSpace{};
  cfg.search.regressor.n_estimators = {trees};
  cfg.search.regressor.max_features = {nmpo::MaxFeatures::parse("all")};
  cfg.search.classifier = nmpo::SearchSpace{};
  cfg.search.classifier.n_estimators = {trees};
  cfg.search.classifier.max_features = {nmpo::MaxFeatures::parse("all")};
  return cfg;
}

}  // namespace testutil
