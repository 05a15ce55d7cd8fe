#include "nmpo/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "json.hpp"

#include "nmpo/error.hpp"
#include "nmpo/io.hpp"

namespace nmpo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = line.find(sep, start);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

struct UnitScale {
  std::string_view unit;
  std::string_view canonical;
  double factor;
};

// Declared units that are folded into a canonical one at parse time.
constexpr UnitScale kUnitScales[] = {
    {"B", "MiB", 1.0 / 1048576.0},   {"bytes", "MiB", 1.0 / 1048576.0},
    {"KiB", "MiB", 1.0 / 1024.0},    {"MiB", "MiB", 1.0},
    {"GiB", "MiB", 1024.0},          {"Joules", "Joules", 1.0},
    {"J", "Joules", 1.0},            {"mJ", "Joules", 1e-3},
    {"uJ", "Joules", 1e-6},          {"ns", "s", 1e-9},
    {"us", "s", 1e-6},               {"ms", "s", 1e-3},
    {"msec", "s", 1e-3},             {"s", "s", 1.0},
    {"sec", "s", 1.0},               {"seconds", "s", 1.0},
};

void normalize_unit(PerfEvent& event) {
  for (const auto& scale : kUnitScales) {
    if (event.unit == scale.unit) {
      if (event.value) *event.value *= scale.factor;
      event.unit = std::string(scale.canonical);
      return;
    }
  }
}

bool parse_run_count(std::string_view comment, int& out) {
  comment = trim(comment.substr(1));
  constexpr std::string_view key = "run_count";
  if (comment.substr(0, key.size()) != key) return false;
  comment = trim(comment.substr(key.size()));
  if (comment.empty() || (comment.front() != ':' && comment.front() != '=')) return false;
  comment = trim(comment.substr(1));
  double v = 0;
  if (!parse_double(comment, v) || v < 1 || v != std::floor(v)) return false;
  out = static_cast<int>(v);
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------

bool PerfProfile::has_value(const std::string& name) const {
  const auto it = events.find(name);
  return it != events.end() && it->second.value.has_value();
}

double PerfProfile::value(const std::string& name) const {
  const auto it = events.find(name);
  if (it == events.end() || !it->second.value) {
    throw Error(ErrorKind::Feature, "missing required event '" + name + "'");
  }
  return *it->second.value;
}

PerfProfile parse_perf_csv(std::string_view text, const PerfSchema& schema) {
  PerfProfile profile;
  std::size_t parsed = 0;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    if (line.front() == '#') {
      int runs = 0;
      if (parse_run_count(line, runs)) profile.run_count = runs;
      continue;
    }
    const auto fields = split_fields(line, schema.separator);
    if (fields.size() < 3 || trim(fields[2]).empty()) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) +
                                        ": expected value, unit and event name");
    }
    const std::string name(trim(fields[2]));
    PerfEvent event;
    event.unit = std::string(trim(fields[1]));
    const std::string_view raw = trim(fields[0]);
    if (raw == "<not supported>" || raw == "<not counted>") {
      event.value.reset();
    } else {
      double v = 0.0;
      if (!parse_double(raw, v)) {
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) +
                                          ": malformed value '" + std::string(raw) +
                                          "' for event '" + name + "'");
      }
      if (v < 0.0) {
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) +
                                          ": negative value for event '" + name + "'");
      }
      event.value = v;
    }
    normalize_unit(event);
    if (!profile.events.emplace(name, std::move(event)).second) {
      throw Error(ErrorKind::Ambiguous, "line " + std::to_string(line_no) +
                                            ": duplicate event '" + name + "'");
    }
    ++parsed;
  }
  if (parsed == 0) throw Error(ErrorKind::EmptyInput, "no parseable perf records");

  for (const auto& name : schema.required_events) {
    profile.events.try_emplace(name, PerfEvent{});
  }
  const bool has_flop_event = std::any_of(
      profile.events.begin(), profile.events.end(), [&](const auto& kv) {
        return kv.first.starts_with(schema.flop_event_prefix);
      });
  if (!has_flop_event) profile.events.try_emplace(schema.flop_event_prefix, PerfEvent{});

  bool found_time = false;
  for (const auto& name : schema.time_events) {
    const auto it = profile.events.find(name);
    if (it == profile.events.end() || !it->second.value) continue;
    if (it->second.unit != "s") {
      throw Error(ErrorKind::Validation,
                  "time event '" + name + "' has non-time unit '" + it->second.unit + "'");
    }
    profile.wall_time_s = *it->second.value;
    found_time = true;
    break;
  }
  if (!found_time) throw Error(ErrorKind::Validation, "profile has no execution-time event");
  if (!(profile.wall_time_s > 0.0)) {
    throw Error(ErrorKind::Validation, "execution time must be > 0");
  }
  return profile;
}

std::string format_perf_csv(const PerfProfile& profile, char separator) {
  std::string out = "# run_count: " + std::to_string(profile.run_count) + "\n";
  for (const auto& [name, event] : profile.events) {
    out += event.value ? format_double(*event.value) : std::string("<not counted>");
    out += separator;
    out += event.unit;
    out += separator;
    out += name;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct StatField {
  std::string_view key;
  double NmcSimResult::*member;
};

constexpr StatField kStatFields[] = {
    {"ramulator.cpu_cycles", &NmcSimResult::cpu_cycles},
    {"ramulator.ipc", &NmcSimResult::ipc},
    {"ramulator.cpu_instructions", &NmcSimResult::cpu_instructions},
    {"ramulator.total_time", &NmcSimResult::total_time_ns},
    {"Average Power", &NmcSimResult::avg_power_mw},
    {"Total Trace Energy", &NmcSimResult::trace_energy_pj},
};

double stat_unit_factor(std::string_view key, std::string_view unit) {
  if (unit.empty()) return 1.0;
  if (key == "Average Power") {
    if (unit == "mW") return 1.0;
    if (unit == "W") return 1e3;
    if (unit == "uW") return 1e-3;
  } else if (key == "Total Trace Energy") {
    if (unit == "pJ") return 1.0;
    if (unit == "nJ") return 1e3;
    if (unit == "uJ") return 1e6;
    if (unit == "mJ") return 1e9;
    if (unit == "J") return 1e12;
  } else if (key == "ramulator.total_time") {
    if (unit == "ns") return 1.0;
    if (unit == "us") return 1e3;
    if (unit == "ms") return 1e6;
    if (unit == "s") return 1e9;
  } else {
    return 1.0;
  }
  throw Error(ErrorKind::Parse, "unsupported unit '" + std::string(unit) +
                                    "' for '" + std::string(key) + "'");
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

}  // namespace

NmcSimResult parse_ramulator_stats(const std::vector<std::string_view>& streams) {
  NmcSimResult result;
  std::set<std::string_view> seen;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const auto lines = split_lines(streams[s]);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string_view line = lines[i];
      if (const auto hash = line.find('#'); hash != std::string_view::npos) {
        line = line.substr(0, hash);
      }
      const auto tokens = split_ws(line);
      std::size_t value_at = tokens.size();
      double value = 0.0;
      for (std::size_t t = 1; t < tokens.size(); ++t) {
        if (parse_double(tokens[t], value)) {
          value_at = t;
          break;
        }
      }
      if (value_at == tokens.size()) continue;
      std::string key;
      for (std::size_t t = 0; t < value_at; ++t) {
        if (t) key += ' ';
        key += tokens[t];
      }
      while (!key.empty() && key.back() == ':') key.pop_back();
      const auto field = std::find_if(std::begin(kStatFields), std::end(kStatFields),
                                      [&](const StatField& f) { return f.key == key; });
      if (field == std::end(kStatFields)) continue;
      const std::string where = "stream " + std::to_string(s + 1) + " line " +
                                std::to_string(i + 1);
      if (!seen.insert(field->key).second) {
        throw Error(ErrorKind::Ambiguous, where + ": duplicate statistic '" + key + "'");
      }
      if (value < 0.0) {
        throw Error(ErrorKind::Parse, where + ": negative value for '" + key + "'");
      }
      const std::string_view unit = value_at + 1 < tokens.size() ? tokens[value_at + 1] : "";
      result.*(field->member) = value * stat_unit_factor(field->key, unit);
    }
  }
  std::string absent;
  for (const auto& field : kStatFields) {
    if (!seen.contains(field.key)) {
      if (!absent.empty()) absent += ", ";
      absent += field.key;
    }
  }
  if (!absent.empty()) {
    throw Error(ErrorKind::MissingStatistic, "missing statistics: " + absent);
  }
  if (result.cpu_cycles > 0.0) {
    const double expected = result.cpu_instructions / result.cpu_cycles;
    if (std::abs(result.ipc - expected) > 0.01 * expected) {
      throw Error(ErrorKind::Validation,
                  "ramulator.ipc " + format_double(result.ipc) +
                      " inconsistent with instructions/cycles " + format_double(expected));
    }
  }
  return result;
}

NmcSimResult parse_ramulator_stats(std::string_view text) {
  return parse_ramulator_stats(std::vector<std::string_view>{text});
}

std::string format_ramulator_stats(const NmcSimResult& result) {
  std::string out;
  for (const auto& field : kStatFields) {
    out += field.key;
    out += ' ';
    out += format_double(result.*(field.member));
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(RunRole role) {
  return role == RunRole::train ? "train" : "test";
}

RunKey key_of(const RunSpec& spec) {
  return {spec.app, spec.dataset_level, spec.threads};
}

std::string describe(const RunKey& key) {
  return key.app + "/L" + std::to_string(key.dataset_level) + "/T" +
         std::to_string(key.threads);
}

void validate(const RunSpec& spec) {
  if (spec.app.empty()) throw Error(ErrorKind::Validation, "run has empty app name");
  const std::string who = describe(key_of(spec));
  if (spec.dataset_level < 1) throw Error(ErrorKind::Validation, who + ": dataset_level must be >= 1");
  if (spec.dataset_param < 1) throw Error(ErrorKind::Validation, who + ": dataset_param must be >= 1");
  if (spec.threads < 1) throw Error(ErrorKind::Validation, who + ": threads must be >= 1");
}

namespace {

template <typename T>
T require_field(const json& entry, const char* name, std::size_t index) {
  const auto it = entry.find(name);
  if (it == entry.end()) {
    throw Error(ErrorKind::Validation, "runs[" + std::to_string(index) +
                                           "]: missing field '" + name + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Validation, "runs[" + std::to_string(index) +
                                           "]: field '" + name + "' has wrong type");
  }
}

long long require_positive_integer(const json& entry, const char* name, std::size_t index) {
  const auto it = entry.find(name);
  if (it == entry.end() || !it->is_number_integer()) {
    throw Error(ErrorKind::Validation, "runs[" + std::to_string(index) + "]: field '" +
                                           name + "' must be an integer");
  }
  return it->get<long long>();
}

}  // namespace

Manifest parse_manifest(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Validation, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::Validation, "manifest must be a JSON object");
  const auto version = doc.find("manifest_version");
  if (version == doc.end() || !version->is_number_integer()) {
    throw Error(ErrorKind::Validation, "manifest lacks integer 'manifest_version'");
  }
  if (version->get<long long>() != Manifest::kVersion) {
    throw Error(ErrorKind::Validation,
                "unsupported manifest_version " + std::to_string(version->get<long long>()));
  }
  const auto runs = doc.find("runs");
  if (runs == doc.end() || !runs->is_array()) {
    throw Error(ErrorKind::Validation, "manifest lacks array 'runs'");
  }

  Manifest manifest;
  std::set<RunKey> keys;
  for (std::size_t i = 0; i < runs->size(); ++i) {
    const json& entry = (*runs)[i];
    if (!entry.is_object()) {
      throw Error(ErrorKind::Validation, "runs[" + std::to_string(i) + "] is not an object");
    }
    ManifestEntry run;
    run.spec.app = require_field<std::string>(entry, "app", i);
    run.spec.dataset_level = static_cast<int>(require_positive_integer(entry, "dataset_level", i));
    run.spec.dataset_param = require_positive_integer(entry, "dataset_param", i);
    run.spec.threads = static_cast<int>(require_positive_integer(entry, "threads", i));
    const auto role = require_field<std::string>(entry, "role", i);
    if (role == "train") {
      run.spec.role = RunRole::train;
    } else if (role == "test") {
      run.spec.role = RunRole::test;
    } else {
      throw Error(ErrorKind::Validation,
                  "runs[" + std::to_string(i) + "]: role must be 'train' or 'test'");
    }
    validate(run.spec);
    run.perf_path = base_dir / require_field<std::string>(entry, "perf", i);
    if (const auto sim = entry.find("sim"); sim != entry.end() && !sim->is_null()) {
      if (sim->is_string()) {
        run.sim_paths.push_back(base_dir / sim->get<std::string>());
      } else if (sim->is_array()) {
        for (const auto& p : *sim) {
          if (!p.is_string()) {
            throw Error(ErrorKind::Validation,
                        "runs[" + std::to_string(i) + "]: 'sim' entries must be strings");
          }
          run.sim_paths.push_back(base_dir / p.get<std::string>());
        }
      } else {
        throw Error(ErrorKind::Validation,
                    "runs[" + std::to_string(i) + "]: 'sim' must be a string or array");
      }
    }
    if (const auto scope = entry.find("scope"); scope != entry.end() && scope->is_string()) {
      run.scope = scope->get<std::string>();
    }
    if (!keys.insert(key_of(run.spec)).second) {
      throw Error(ErrorKind::Duplicate,
                  "duplicate run " + describe(key_of(run.spec)) + " in manifest");
    }
    manifest.runs.push_back(std::move(run));
  }
  return manifest;
}

Manifest load_manifest(const fs::path& path) {
  const std::string text = read_text_file(path);
  Manifest manifest = parse_manifest(text, path.parent_path());
  for (const auto& run : manifest.runs) {
    const std::string who = describe(key_of(run.spec));
    if (!fs::is_regular_file(run.perf_path)) {
      throw Error(ErrorKind::Io, who + ": perf file '" + run.perf_path.string() + "' not found");
    }
    for (const auto& sim : run.sim_paths) {
      if (!fs::is_regular_file(sim)) {
        throw Error(ErrorKind::Io, who + ": simulator file '" + sim.string() + "' not found");
      }
    }
  }
  return manifest;
}

std::string format_manifest(const Manifest& manifest, const fs::path& base_dir) {
  const auto rel = [&](const fs::path& p) {
    const fs::path r = p.lexically_relative(base_dir);
    return (r.empty() ? p : r).generic_string();
  };
  json runs = json::array();
  for (const auto& run : manifest.runs) {
    json entry = {{"app", run.spec.app},
                  {"dataset_level", run.spec.dataset_level},
                  {"dataset_param", run.spec.dataset_param},
                  {"threads", run.spec.threads},
                  {"role", std::string(to_string(run.spec.role))},
                  {"perf", rel(run.perf_path)}};
    if (run.sim_paths.size() == 1) {
      entry["sim"] = rel(run.sim_paths.front());
    } else if (!run.sim_paths.empty()) {
      json sims = json::array();
      for (const auto& p : run.sim_paths) sims.push_back(rel(p));
      entry["sim"] = std::move(sims);
    }
    if (run.scope) entry["scope"] = *run.scope;
    runs.push_back(std::move(entry));
  }
  json doc = {{"manifest_version", Manifest::kVersion}, {"runs", std::move(runs)}};
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::vector<RunRecord> assemble_run_records(const std::vector<RunSpec>& specs,
                                            const std::map<RunKey, PerfProfile>& profiles,
                                            const std::map<RunKey, NmcSimResult>& sims) {
  std::vector<RunRecord> records;
  records.reserve(specs.size());
  for (const auto& spec : specs) {
    const RunKey key = key_of(spec);
    const auto profile = profiles.find(key);
    if (profile == profiles.end()) {
      throw Error(ErrorKind::Join, "no host profile for run " + describe(key));
    }
    RunRecord record{spec, profile->second, std::nullopt, std::nullopt, std::nullopt};
    if (const auto sim = sims.find(key); sim != sims.end()) record.nmc = sim->second;
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<RunRecord> load_corpus(const Manifest& manifest, const PerfSchema& schema) {
  std::vector<RunSpec> specs;
  std::map<RunKey, PerfProfile> profiles;
  std::map<RunKey, NmcSimResult> sims;
  for (const auto& run : manifest.runs) {
    const RunKey key = key_of(run.spec);
    try {
      specs.push_back(run.spec);
      profiles.emplace(key, parse_perf_csv(read_text_file(run.perf_path), schema));
      if (!run.sim_paths.empty()) {
        std::vector<std::string> texts;
        for (const auto& p : run.sim_paths) texts.push_back(read_text_file(p));
        const std::vector<std::string_view> views(texts.begin(), texts.end());
        sims.emplace(key, parse_ramulator_stats(views));
      }
    } catch (const Error& e) {
      rethrow_with_context(e, "run " + describe(key));
    }
  }
  return assemble_run_records(specs, profiles, sims);
}

}  // namespace nmpo
