#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace nmpo {

/// Offload decision. Declaration order is also the vote tie-break priority.
enum class OffloadLabel { yes = 0, maybe = 1, no = 2 };

inline constexpr std::array<OffloadLabel, 3> kAllLabels{
    OffloadLabel::yes, OffloadLabel::maybe, OffloadLabel::no};

std::string_view to_string(OffloadLabel label);
OffloadLabel parse_label(std::string_view text);

inline constexpr int label_index(OffloadLabel label) {
  return static_cast<int>(label);
}

/// Per-run features. Host-side fields are always set; NMC-side fields only
/// when simulator statistics were available.
struct DerivedFeatures {
  double host_total_energy_j = 0.0;
  double host_edp_js = 0.0;
  double host_dram_access_gb = 0.0;
  double host_flops = 0.0;
  double host_gflops_per_s = 0.0;
  double host_flop_per_byte = 0.0;
  std::optional<double> nmc_ipc;
  std::optional<double> nmc_total_time_ns;
  std::optional<double> nmc_trace_energy_pj;
  std::optional<double> nmc_edp_js;
  std::optional<double> edp_speedup;

  bool operator==(const DerivedFeatures&) const = default;
};

}  // namespace nmpo
