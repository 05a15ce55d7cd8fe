#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nmpo/ingest.hpp"
#include "nmpo/types.hpp"

namespace nmpo {

/// Event names and conversion knobs used to turn a host profile into
/// features.
struct UnitConfig {
  std::string energy_event = "power/energy-pkg/";
  std::string dram_energy_event = "power/energy-ram/";
  /// Adds the DRAM energy event to the host total energy.
  bool include_dram_energy = false;
  std::string dram_reads_event = "uncore_imc/data_reads/";
  std::string dram_writes_event = "uncore_imc/data_writes/";
  std::string flop_event_prefix = "fp_arith_inst_retired";
  /// Per-sub-event FLOP weight; sub-events not listed weigh 1.
  std::map<std::string, double> flop_weights;

  /// Events a host profile must carry for derive_features to succeed.
  std::vector<std::string> required_events() const;

  bool operator==(const UnitConfig&) const = default;
};

inline constexpr double kBytesPerMiB = 1048576.0;

/// Host and (when present) NMC features of one record.
DerivedFeatures derive_features(const RunRecord& record, const UnitConfig& cfg = {});

/// Joule-seconds. Throws ErrorKind::Domain when time <= 0 or energy < 0.
double compute_host_edp(double energy_j, double time_s);

/// Joule-seconds from picojoules and nanoseconds.
double compute_nmc_edp(double trace_energy_pj, double total_time_ns);

/// host_edp / nmc_edp.
double compute_edp_speedup(double host_edp, double nmc_edp);

/// Which class a boundary value belongs to.
enum class BoundaryConvention {
  closed_lower,  // 2 -> maybe, 1 -> no
  closed_upper,  // 2 -> yes,   1 -> maybe
};

OffloadLabel label_decision(double edp_speedup,
                            BoundaryConvention convention = BoundaryConvention::closed_lower);

/// Fills `derived` and, when an EDP speedup is available, `label`.
void annotate(RunRecord& record, const UnitConfig& cfg = {},
              BoundaryConvention convention = BoundaryConvention::closed_lower);

// ---------------------------------------------------------------------------
// Roofline
// ---------------------------------------------------------------------------

enum class RooflineRegion { compute_bound, dram_bound, l3_bound };

std::string_view to_string(RooflineRegion region);

/// Build with from_bandwidths / from_ridges so the ridge points stay
/// consistent with the roofs.
struct MachineRoofline {
  double peak_gflops = 0.0;
  double dram_bw_gbs = 0.0;
  double l3_bw_gbs = 0.0;
  double ridge_dram = 0.0;  // FLOP/B where the DRAM roof meets the peak
  double ridge_l3 = 0.0;

  /// Throws ErrorKind::Domain unless peak > 0 and l3_bw >= dram_bw > 0.
  void validate() const;

  static MachineRoofline from_bandwidths(double peak_gflops, double dram_bw_gbs,
                                         double l3_bw_gbs);
  static MachineRoofline from_ridges(double peak_gflops, double ridge_dram,
                                     double ridge_l3);
  /// Intel i9-9900K roofs: peak 300.8 GFLOP/s, ridges 7.05 and 0.73 FLOP/B.
  static MachineRoofline reference_i9();

  bool operator==(const MachineRoofline&) const = default;
};

struct RooflinePoint {
  std::string app;
  double ai = 0.0;
  double perf = 0.0;
  RooflineRegion region = RooflineRegion::l3_bound;
};

/// Attainable GFLOP/s at intensity `ai` under the DRAM roof.
double attainable_gflops(const MachineRoofline& machine, double ai);

RooflinePoint roofline_classify(std::string app, double ai, double perf,
                                const MachineRoofline& machine);

}  // namespace nmpo
