#include "nmpo/synth.hpp"

#include <cmath>
#include <map>
#include <set>

#include "nmpo/error.hpp"
#include "nmpo/rng.hpp"

namespace nmpo {

using nlohmann::json;

namespace {

// Dataset parameters per level (7 training levels, then the test level).
const std::map<std::string, std::vector<long long>>& known_params() {
  static const std::map<std::string, std::vector<long long>> params{
      {"atax", {4000, 6000, 8000, 10000, 12000, 14000, 16000, 17000}},
      {"chol", {1024, 1500, 2000, 2200, 2600, 3000, 3400, 4000}},
      {"doit", {75, 100, 128, 150, 200, 256, 300, 350}},
      {"gemv", {4000, 6000, 8000, 10000, 12000, 14000, 16000, 18000}},
      {"gesu", {4000, 6000, 8000, 10000, 12000, 14000, 16000, 18000}},
      {"mvt", {4000, 6000, 8000, 10000, 12000, 14000, 16000, 18000}},
      {"syrk", {1024, 1500, 2000, 2500, 2750, 3000, 3500, 4000}},
      {"syr2k", {1024, 1500, 2000, 2500, 2750, 3000, 3500, 4000}},
      {"trmm", {1024, 1500, 2000, 2500, 2750, 3000, 3500, 4000}},
      {"grid", {128, 256, 512, 2048, 2560, 3072, 3584, 4096}},
      {"degrid", {128, 256, 512, 2048, 2560, 3072, 3584, 4096}},
  };
  return params;
}

long long dataset_param(const std::string& app, int level, int levels_per_app, int total_levels) {
  const auto& known = known_params();
  if (const auto it = known.find(app);
      it != known.end() && levels_per_app == 7 && total_levels <= 8) {
    return it->second[static_cast<std::size_t>(level - 1)];
  }
  return 1000LL * level;
}

[[noreturn]] void invalid(const std::string& what) {
  throw Error(ErrorKind::Config, "synth config: " + what);
}

// Standard normal truncated to [-3, 3].
double truncated_normal(Rng& rng) {
  for (;;) {
    const double z = rng.normal();
    if (std::fabs(z) <= 3.0) return z;
  }
}

std::string run_stem(const RunSpec& s) {
  return s.app + "_L" + std::to_string(s.dataset_level) + "_T" + std::to_string(s.threads);
}

std::string line(double value, const char* unit, const char* event) {
  return format_double(value) + ";" + unit + ";" + event + "\n";
}

}  // namespace

double SynthMapping::center(OffloadLabel label) const {
  switch (label) {
    case OffloadLabel::yes: return center_yes;
    case OffloadLabel::maybe: return center_maybe;
    case OffloadLabel::no: return center_no;
  }
  return center_no;
}

OffloadLabel planted_label(std::size_t app_index, int level, int levels_per_app) {
  switch (app_index % 4) {
    case 0: return OffloadLabel::no;
    case 1: {
      // Three equal level buckets: no, maybe, yes.
      const int bucket = std::min(2, 3 * (level - 1) / levels_per_app);
      return bucket == 0 ? OffloadLabel::no : bucket == 1 ? OffloadLabel::maybe : OffloadLabel::yes;
    }
    case 2: return OffloadLabel::yes;
    default: return 2 * level <= levels_per_app ? OffloadLabel::maybe : OffloadLabel::yes;
  }
}

void SynthConfig::validate() const {
  if (apps.size() < 2) invalid("need at least 2 apps");
  if (std::set<std::string>(apps.begin(), apps.end()).size() != apps.size()) {
    invalid("app names must be distinct");
  }
  for (const auto& a : apps) {
    if (a.empty() || a.find_first_of("/\\ ") != std::string::npos) invalid("bad app name '" + a + "'");
  }
  if (levels_per_app < 2) invalid("levels_per_app must be >= 2");
  if (test_levels < 0) invalid("test_levels must be >= 0");
  if (threads.empty()) invalid("threads must not be empty");
  if (std::set<int>(threads.begin(), threads.end()).size() != threads.size()) {
    invalid("thread counts must be distinct");
  }
  for (int t : threads) {
    if (t < 1) invalid("thread counts must be >= 1");
  }
  if (!(noise_sigma >= 0.0) || noise_sigma >= 1.0 / 3.0) invalid("noise_sigma must be in [0, 1/3)");

  const SynthMapping& m = mapping;
  if (!std::isfinite(m.ipc_alpha) || m.ipc_alpha == 0.0 || !std::isfinite(m.fpb_slope) ||
      m.fpb_slope == 0.0) {
    invalid("mapping is not injective (zero or non-finite slope)");
  }
  if (!(m.half_width >= 0.0)) invalid("half_width must be >= 0");

  // Extreme noisy speedups of every band must stay inside the band's class.
  const double k = 3.0 * noise_sigma;
  const auto check = [&](OffloadLabel label, double lo_bound, double hi_bound) {
    const double c = m.center(label);
    const double lo = (c - m.half_width) * (1.0 - k);
    const double hi = (c + m.half_width) * (1.0 + k);
    if (!(lo > lo_bound && hi <= hi_bound)) {
      invalid(std::string("the '") + std::string(to_string(label)) +
              "' band can cross a label boundary at this noise level");
    }
    for (double s : {c - m.half_width, c + m.half_width}) {
      const double ipc = m.ipc_for(s);
      if (!(ipc > 0.0)) invalid("mapping yields non-positive IPC");
      if (!(m.fpb_intercept + m.fpb_slope * ipc > 0.0)) {
        invalid("mapping yields non-positive FLOP/byte");
      }
    }
  };
  check(OffloadLabel::no, 0.0, 1.0);
  check(OffloadLabel::maybe, 1.0, 2.0);
  check(OffloadLabel::yes, 2.0, HUGE_VAL);

  std::set<OffloadLabel> seen;
  for (std::size_t a = 0; a < apps.size(); ++a) {
    for (int level = 1; level <= levels_per_app + test_levels; ++level) {
      seen.insert(planted_label(a, level, levels_per_app));
    }
  }
  if (seen.size() != 3) invalid("the generated runs do not span all three classes");
}

SynthConfig SynthConfig::from_json(const json& j) {
  if (!j.is_object()) invalid("expected a JSON object");
  static const std::set<std::string> keys{"apps",        "n_apps", "levels_per_app", "test_levels",
                                          "threads",     "noise_sigma", "seed",      "mapping"};
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) invalid("unknown key '" + key + "'");
  }
  SynthConfig cfg;
  try {
    if (j.contains("apps")) {
      cfg.apps = j.at("apps").get<std::vector<std::string>>();
    } else if (j.contains("n_apps")) {
      const int n = j.at("n_apps").get<int>();
      if (n < 2) invalid("n_apps must be >= 2");
      // Known kernels first, then generic names.
      std::vector<std::string> names;
      const SynthConfig defaults;
      for (int i = 0; i < n; ++i) {
        names.push_back(static_cast<std::size_t>(i) < defaults.apps.size()
                            ? defaults.apps[static_cast<std::size_t>(i)]
                            : "app" + std::to_string(i + 1));
      }
      cfg.apps = std::move(names);
    }
    if (j.contains("levels_per_app")) cfg.levels_per_app = j.at("levels_per_app").get<int>();
    if (j.contains("test_levels")) cfg.test_levels = j.at("test_levels").get<int>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<std::vector<int>>();
    if (j.contains("noise_sigma")) cfg.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mapping")) {
      const json& m = j.at("mapping");
      SynthMapping& p = cfg.mapping;
      static const std::map<std::string, double SynthMapping::*> fields{
          {"ipc_alpha", &SynthMapping::ipc_alpha},       {"ipc_beta", &SynthMapping::ipc_beta},
          {"fpb_intercept", &SynthMapping::fpb_intercept}, {"fpb_slope", &SynthMapping::fpb_slope},
          {"center_no", &SynthMapping::center_no},       {"center_maybe", &SynthMapping::center_maybe},
          {"center_yes", &SynthMapping::center_yes},     {"half_width", &SynthMapping::half_width}};
      if (!m.is_object()) invalid("mapping must be an object");
      for (const auto& [key, value] : m.items()) {
        const auto it = fields.find(key);
        if (it == fields.end()) invalid("unknown mapping key '" + key + "'");
        p.*(it->second) = value.get<double>();
      }
    }
  } catch (const json::exception& e) {
    invalid(std::string("wrong value type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json SynthConfig::to_json() const {
  const SynthMapping& m = mapping;
  return json{{"apps", apps},
              {"levels_per_app", levels_per_app},
              {"test_levels", test_levels},
              {"threads", threads},
              {"noise_sigma", noise_sigma},
              {"seed", seed},
              {"mapping",
               {{"ipc_alpha", m.ipc_alpha},
                {"ipc_beta", m.ipc_beta},
                {"fpb_intercept", m.fpb_intercept},
                {"fpb_slope", m.fpb_slope},
                {"center_no", m.center_no},
                {"center_maybe", m.center_maybe},
                {"center_yes", m.center_yes},
                {"half_width", m.half_width}}}};
}

SynthCorpus generate_synthetic_corpus(const SynthConfig& cfg) {
  cfg.validate();
  const SynthMapping& m = cfg.mapping;
  const int total_levels = cfg.levels_per_app + cfg.test_levels;
  Rng rng(cfg.seed);

  SynthCorpus corpus;
  Manifest manifest;
  std::string truth_csv =
      "app,dataset_level,dataset_param,threads,role,planted_speedup,planted_ipc,label\n";

  for (std::size_t a = 0; a < cfg.apps.size(); ++a) {
    const std::string& app = cfg.apps[a];
    // Per-app character: data volume, host throughput, package power and NMC
    // run-time ratio.
    const double volume = rng.uniform(0.5, 2.0);
    const double rate = rng.uniform(4.0, 20.0);
    const double power = rng.uniform(35.0, 85.0);
    const double nmc_time_factor = rng.uniform(0.2, 2.0);

    for (int level = 1; level <= total_levels; ++level) {
      const long long param = dataset_param(app, level, cfg.levels_per_app, total_levels);
      const OffloadLabel label = planted_label(a, level, cfg.levels_per_app);
      for (int threads : cfg.threads) {
        RunSpec spec{app, level, param, threads,
                     level > cfg.levels_per_app ? RunRole::test : RunRole::train};
        const double speedup = m.center(label) + m.half_width * rng.uniform(-1.0, 1.0);
        const double ipc = m.ipc_for(speedup);
        const double fpb = m.fpb_intercept + m.fpb_slope * ipc;

        // Host side.
        const double mib = 64.0 * static_cast<double>(param) / 1000.0 * volume * rng.uniform(0.9, 1.1);
        const double reads = 0.7 * mib, writes = mib - reads;
        const double flops = std::round(fpb * mib * 1048576.0);
        const double scalar = std::round(0.25 * flops), packed = flops - scalar;
        const double time_ns =
            std::round(flops / (rate * std::sqrt(threads / 8.0)) * rng.uniform(0.95, 1.05));
        const double time_s = time_ns * 1e-9;
        const double energy_j = power * time_s;
        const double instructions = std::round(1.3 * flops + 1e6);

        std::string perf = "# perf stat -x; -r 5 (synthetic)\n# run_count: 5\n";
        perf += line(time_ns, "ns", "duration_time");
        perf += line(energy_j, "Joules", "power/energy-pkg/");
        perf += line(0.2 * energy_j, "Joules", "power/energy-ram/");
        perf += line(reads, "MiB", "uncore_imc/data_reads/");
        perf += line(writes, "MiB", "uncore_imc/data_writes/");
        perf += line(scalar, "", "fp_arith_inst_retired.scalar_double");
        perf += line(packed, "", "fp_arith_inst_retired.256b_packed_double");
        perf += line(std::round(instructions / 1.7), "", "cycles");
        perf += line(instructions, "", "instructions");
        perf += line(std::round(mib * 1048576.0 / 64.0 * 0.6), "", "LLC-load-misses");
        perf += line(std::round(instructions * 0.002), "", "branch-misses");

        // NMC side: noise on trace energy moves the speedup, noise on IPC
        // moves the regression target; neither can change the label.
        const double noisy_speedup = speedup * (1.0 + cfg.noise_sigma * truncated_normal(rng));
        const double noisy_ipc = ipc * (1.0 + cfg.noise_sigma * truncated_normal(rng));
        const double host_edp = energy_j * time_s;
        const double nmc_time_ns = time_ns * nmc_time_factor;
        const double nmc_edp = host_edp / noisy_speedup;
        const double trace_energy_pj = nmc_edp / (nmc_time_ns * 1e-9) / 1e-12;
        const double nmc_instr = instructions;
        const double cycles = std::max(1.0, std::round(nmc_instr / noisy_ipc));

        std::string ram = "# Ramulator statistics (synthetic)\n";
        ram += "ramulator.cpu_cycles " + format_double(cycles) + "  # CPU cycles\n";
        ram += "ramulator.cpu_instructions " + format_double(nmc_instr) + "  # retired instructions\n";
        // The reported IPC is the planted one; the rounded counters agree to well within 1%.
        ram += "ramulator.ipc " + format_double(noisy_ipc) + "  # instructions per cycle\n";
        ram += "ramulator.total_time " + format_double(nmc_time_ns) + " ns  # simulated time\n";
        std::string drampower = "# DRAMPower summary (synthetic)\n";
        drampower += "Total Trace Energy: " + format_double(trace_energy_pj) + " pJ\n";
        drampower += "Average Power: " + format_double(trace_energy_pj / nmc_time_ns) + " mW\n";

        const std::string stem = run_stem(spec);
        corpus.files["perf/" + stem + ".csv"] = std::move(perf);
        corpus.files["sim/" + stem + ".ramulator.txt"] = std::move(ram);
        corpus.files["sim/" + stem + ".drampower.txt"] = std::move(drampower);
        manifest.runs.push_back(ManifestEntry{spec,
                                              "perf/" + stem + ".csv",
                                              {"sim/" + stem + ".ramulator.txt",
                                               "sim/" + stem + ".drampower.txt"},
                                              std::nullopt});

        truth_csv += app + "," + std::to_string(level) + "," + std::to_string(param) + "," +
                     std::to_string(threads) + "," + std::string(to_string(spec.role)) + "," +
                     format_double(speedup) + "," + format_double(ipc) + "," +
                     std::string(to_string(label)) + "\n";
        corpus.truth.push_back(SynthRun{spec, speedup, ipc, label});
      }
    }
  }

  corpus.files["manifest.json"] = format_manifest(manifest, "");
  corpus.files["ground_truth.csv"] = std::move(truth_csv);
  corpus.files["synth_config.json"] = cfg.to_json().dump(2) + "\n";
  corpus.files["config.json"] =
      json{{"manifest", "manifest.json"}, {"seed", cfg.seed}, {"cv_folds", 5}}.dump(2) + "\n";
  return corpus;
}

double planted_ipc_scale(const std::vector<SynthRun>& truth) {
  if (truth.empty()) throw Error(ErrorKind::Domain, "empty ground truth");
  double sum = 0.0;
  for (const auto& r : truth) sum += r.ipc;
  return sum / static_cast<double>(truth.size());
}

}  // namespace nmpo
