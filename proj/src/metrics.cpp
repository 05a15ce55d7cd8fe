#include "nmpo/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "nmpo/error.hpp"
#include "nmpo/io.hpp"

namespace nmpo {

std::vector<std::string> UnitConfig::required_events() const {
  std::vector<std::string> events{energy_event, dram_reads_event, dram_writes_event,
                                  flop_event_prefix};
  if (include_dram_energy) events.push_back(dram_energy_event);
  return events;
}

namespace {

void require_finite_nonnegative(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw Error(ErrorKind::Feature, std::string(name) + " is not a finite non-negative value");
  }
}

}  // namespace

DerivedFeatures derive_features(const RunRecord& record, const UnitConfig& cfg) {
  const PerfProfile& host = record.host;
  if (!(host.wall_time_s > 0.0)) {
    throw Error(ErrorKind::Feature, "host wall time must be > 0");
  }
  DerivedFeatures f;

  f.host_total_energy_j = host.value(cfg.energy_event);
  if (cfg.include_dram_energy) f.host_total_energy_j += host.value(cfg.dram_energy_event);

  const double dram_bytes =
      (host.value(cfg.dram_reads_event) + host.value(cfg.dram_writes_event)) * kBytesPerMiB;

  bool any_flop_event = false;
  double flops = 0.0;
  for (const auto& [name, event] : host.events) {
    if (!name.starts_with(cfg.flop_event_prefix) || !event.value) continue;
    const auto weight = cfg.flop_weights.find(name);
    flops += *event.value * (weight == cfg.flop_weights.end() ? 1.0 : weight->second);
    any_flop_event = true;
  }
  if (!any_flop_event) {
    throw Error(ErrorKind::Feature, "missing required event '" + cfg.flop_event_prefix + "'");
  }

  f.host_edp_js = compute_host_edp(f.host_total_energy_j, host.wall_time_s);
  f.host_dram_access_gb = dram_bytes / 1e9;
  f.host_flops = flops;
  f.host_gflops_per_s = flops / host.wall_time_s / 1e9;
  if (dram_bytes > 0.0) {
    f.host_flop_per_byte = flops / dram_bytes;
  } else if (flops > 0.0) {
    throw Error(ErrorKind::Feature, "arithmetic intensity undefined: zero DRAM traffic");
  }

  require_finite_nonnegative(f.host_total_energy_j, "host_total_energy_j");
  require_finite_nonnegative(f.host_edp_js, "host_edp_js");
  require_finite_nonnegative(f.host_flops, "host_flops");
  require_finite_nonnegative(f.host_gflops_per_s, "host_gflops_per_s");
  require_finite_nonnegative(f.host_flop_per_byte, "host_flop_per_byte");

  if (record.nmc) {
    const NmcSimResult& nmc = *record.nmc;
    f.nmc_ipc = nmc.ipc;
    f.nmc_total_time_ns = nmc.total_time_ns;
    f.nmc_trace_energy_pj = nmc.trace_energy_pj;
    f.nmc_edp_js = compute_nmc_edp(nmc.trace_energy_pj, nmc.total_time_ns);
    require_finite_nonnegative(*f.nmc_ipc, "nmc_ipc");
    require_finite_nonnegative(*f.nmc_edp_js, "nmc_edp_js");
    if (*f.nmc_edp_js > 0.0) {
      f.edp_speedup = compute_edp_speedup(f.host_edp_js, *f.nmc_edp_js);
    }
  }
  return f;
}

double compute_host_edp(double energy_j, double time_s) {
  if (!(time_s > 0.0)) throw Error(ErrorKind::Domain, "EDP needs time > 0");
  if (!(energy_j >= 0.0)) throw Error(ErrorKind::Domain, "EDP needs energy >= 0");
  return energy_j * time_s;
}

double compute_nmc_edp(double trace_energy_pj, double total_time_ns) {
  if (!(total_time_ns > 0.0)) throw Error(ErrorKind::Domain, "NMC EDP needs time > 0");
  if (!(trace_energy_pj >= 0.0)) throw Error(ErrorKind::Domain, "NMC EDP needs energy >= 0");
  return (trace_energy_pj * 1e-12) * (total_time_ns * 1e-9);
}

double compute_edp_speedup(double host_edp, double nmc_edp) {
  if (!(nmc_edp > 0.0)) throw Error(ErrorKind::Domain, "EDP speedup needs NMC EDP > 0");
  return host_edp / nmc_edp;
}

OffloadLabel label_decision(double s, BoundaryConvention convention) {
  if (!std::isfinite(s)) throw Error(ErrorKind::Domain, "EDP speedup must be finite");
  if (convention == BoundaryConvention::closed_lower) {
    if (s > 2.0) return OffloadLabel::yes;
    if (s > 1.0) return OffloadLabel::maybe;
    return OffloadLabel::no;
  }
  if (s >= 2.0) return OffloadLabel::yes;
  if (s >= 1.0) return OffloadLabel::maybe;
  return OffloadLabel::no;
}

void annotate(RunRecord& record, const UnitConfig& cfg, BoundaryConvention convention) {
  record.derived = derive_features(record, cfg);
  record.label.reset();
  if (record.derived->edp_speedup) {
    record.label = label_decision(*record.derived->edp_speedup, convention);
  }
}

// ---------------------------------------------------------------------------

std::string_view to_string(RooflineRegion region) {
  switch (region) {
    case RooflineRegion::compute_bound: return "compute_bound";
    case RooflineRegion::dram_bound: return "dram_bound";
    case RooflineRegion::l3_bound: return "l3_bound";
  }
  return "l3_bound";
}

void MachineRoofline::validate() const {
  if (!(peak_gflops > 0.0) || !std::isfinite(peak_gflops)) {
    throw Error(ErrorKind::Domain, "roofline peak must be > 0");
  }
  if (!(dram_bw_gbs > 0.0) || !(l3_bw_gbs >= dram_bw_gbs) || !std::isfinite(l3_bw_gbs)) {
    throw Error(ErrorKind::Domain, "roofline needs l3_bw >= dram_bw > 0");
  }
  if (!(ridge_l3 <= ridge_dram) || !(ridge_l3 > 0.0)) {
    throw Error(ErrorKind::Domain, "roofline needs 0 < ridge_l3 <= ridge_dram");
  }
}

MachineRoofline MachineRoofline::from_bandwidths(double peak, double dram_bw, double l3_bw) {
  MachineRoofline m{peak, dram_bw, l3_bw, peak / dram_bw, peak / l3_bw};
  m.validate();
  return m;
}

MachineRoofline MachineRoofline::from_ridges(double peak, double ridge_dram, double ridge_l3) {
  MachineRoofline m{peak, peak / ridge_dram, peak / ridge_l3, ridge_dram, ridge_l3};
  m.validate();
  return m;
}

MachineRoofline MachineRoofline::reference_i9() {
  return from_ridges(300.8, 7.05, 0.73);
}

double attainable_gflops(const MachineRoofline& machine, double ai) {
  return std::min(machine.peak_gflops, machine.dram_bw_gbs * ai);
}

RooflinePoint roofline_classify(std::string app, double ai, double perf,
                                const MachineRoofline& machine) {
  if (!(ai > 0.0) || !std::isfinite(ai)) {
    throw Error(ErrorKind::Domain, "arithmetic intensity must be > 0 (got " +
                                       format_double(ai) + ")");
  }
  if (!(perf > 0.0) || !std::isfinite(perf)) {
    throw Error(ErrorKind::Domain, "achieved performance must be > 0");
  }
  RooflinePoint point{std::move(app), ai, perf, RooflineRegion::l3_bound};
  if (ai >= machine.ridge_dram) {
    point.region = RooflineRegion::compute_bound;
  } else if (ai >= machine.ridge_l3) {
    point.region = RooflineRegion::dram_bound;
  }
  return point;
}

}  // namespace nmpo
