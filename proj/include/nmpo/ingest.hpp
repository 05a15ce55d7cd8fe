#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nmpo/types.hpp"

namespace nmpo {

// ---------------------------------------------------------------------------
// Host profile (perf stat -x<sep> output)
// ---------------------------------------------------------------------------

/// Which host events a profile must carry and how the wall time is found.
struct PerfSchema {
  std::vector<std::string> required_events{
      "power/energy-pkg/", "uncore_imc/data_reads/", "uncore_imc/data_writes/"};
  /// Every event whose name starts with this prefix counts as a FLOP
  /// sub-event; at least one must be present.
  std::string flop_event_prefix = "fp_arith_inst_retired";
  /// Candidate wall-time events, first match wins.
  std::vector<std::string> time_events{"duration_time", "execution_time"};
  char separator = ';';
};

struct PerfEvent {
  std::optional<double> value;  // nullopt: <not supported> / <not counted>
  std::string unit;

  bool operator==(const PerfEvent&) const = default;
};

struct PerfProfile {
  std::map<std::string, PerfEvent> events;
  int run_count = 1;
  double wall_time_s = 0.0;

  bool has_value(const std::string& name) const;
  /// Value of a present event; throws ErrorKind::Feature otherwise.
  double value(const std::string& name) const;

  bool operator==(const PerfProfile&) const = default;
};

/// Parses one already-averaged perf profile. Columns are value, unit,
/// event-name; further columns are ignored. Lines starting with '#' are
/// comments, except `# run_count: N`. Data sizes normalize to MiB, energies
/// to Joules and times to seconds.
PerfProfile parse_perf_csv(std::string_view text, const PerfSchema& schema = {});

/// Canonical text form; parse_perf_csv(format_perf_csv(p)) == p.
std::string format_perf_csv(const PerfProfile& profile, char separator = ';');

// ---------------------------------------------------------------------------
// NMC simulator statistics (Ramulator + DRAMPower)
// ---------------------------------------------------------------------------

struct NmcSimResult {
  double cpu_cycles = 0.0;
  double ipc = 0.0;
  double cpu_instructions = 0.0;
  double total_time_ns = 0.0;
  double avg_power_mw = 0.0;
  double trace_energy_pj = 0.0;

  bool operator==(const NmcSimResult&) const = default;
};

/// Parses `key value [unit] [# comment]` lines from one or more streams
/// (e.g. a Ramulator stats file plus a DRAMPower log). Unknown keys are
/// ignored.
NmcSimResult parse_ramulator_stats(const std::vector<std::string_view>& streams);
NmcSimResult parse_ramulator_stats(std::string_view text);

std::string format_ramulator_stats(const NmcSimResult& result);

// ---------------------------------------------------------------------------
// Manifest and run records
// ---------------------------------------------------------------------------

enum class RunRole { train, test };

std::string_view to_string(RunRole role);

struct RunSpec {
  std::string app;
  int dataset_level = 1;
  long long dataset_param = 1;
  int threads = 1;
  RunRole role = RunRole::train;

  bool operator==(const RunSpec&) const = default;
};

/// Join key of a run: (app, dataset_level, threads).
struct RunKey {
  std::string app;
  int dataset_level = 0;
  int threads = 0;

  auto operator<=>(const RunKey&) const = default;
};

RunKey key_of(const RunSpec& spec);
std::string describe(const RunKey& key);
void validate(const RunSpec& spec);

struct ManifestEntry {
  RunSpec spec;
  std::filesystem::path perf_path;
  std::vector<std::filesystem::path> sim_paths;  // empty: no NMC data
  std::optional<std::string> scope;
};

struct Manifest {
  static constexpr int kVersion = 1;
  std::vector<ManifestEntry> runs;
};

/// Parses manifest JSON. Relative paths resolve against `base_dir`.
/// File existence is not checked.
Manifest parse_manifest(std::string_view json_text,
                        const std::filesystem::path& base_dir);

/// Reads, validates and checks every referenced file exists.
Manifest load_manifest(const std::filesystem::path& path);

/// Serializes with paths relative to `base_dir` when possible.
std::string format_manifest(const Manifest& manifest,
                            const std::filesystem::path& base_dir);

struct RunRecord {
  RunSpec spec;
  PerfProfile host;
  std::optional<NmcSimResult> nmc;
  std::optional<DerivedFeatures> derived;
  std::optional<OffloadLabel> label;
};

/// Joins specs with profiles and (optional) simulator results, in spec order.
std::vector<RunRecord> assemble_run_records(
    const std::vector<RunSpec>& specs,
    const std::map<RunKey, PerfProfile>& profiles,
    const std::map<RunKey, NmcSimResult>& sims);

/// Reads every file named by the manifest and assembles the records.
std::vector<RunRecord> load_corpus(const Manifest& manifest,
                                   const PerfSchema& schema = {});

}  // namespace nmpo
