#include "nmpo/pipeline.hpp"

#include <algorithm>

#include "nmpo/error.hpp"
#include "nmpo/rng.hpp"

namespace nmpo {

using nlohmann::json;

namespace {

[[noreturn]] void bad_config(const std::string& what) {
  throw Error(ErrorKind::Usage, "config: " + what);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      bad_config("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T read(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad_config(where + "." + key + " has the wrong type");
  }
}

}  // namespace

std::string_view to_string(BoundaryConvention convention) {
  return convention == BoundaryConvention::closed_lower ? "closed_lower" : "closed_upper";
}

BoundaryConvention parse_boundary(std::string_view text) {
  if (text == "closed_lower") return BoundaryConvention::closed_lower;
  if (text == "closed_upper") return BoundaryConvention::closed_upper;
  throw Error(ErrorKind::Usage, "unknown label boundary convention '" + std::string(text) + "'");
}

json to_json(const UnitConfig& u) {
  return json{{"energy_event", u.energy_event},
              {"dram_energy_event", u.dram_energy_event},
              {"include_dram_energy", u.include_dram_energy},
              {"dram_reads_event", u.dram_reads_event},
              {"dram_writes_event", u.dram_writes_event},
              {"flop_event_prefix", u.flop_event_prefix},
              {"flop_weights", u.flop_weights}};
}

UnitConfig units_from_json(const json& j) {
  const std::string where = "units";
  check_keys(j, where,
             {"energy_event", "dram_energy_event", "include_dram_energy", "dram_reads_event",
              "dram_writes_event", "flop_event_prefix", "flop_weights"});
  UnitConfig u;
  u.energy_event = read(j, "energy_event", where, u.energy_event);
  u.dram_energy_event = read(j, "dram_energy_event", where, u.dram_energy_event);
  u.include_dram_energy = read(j, "include_dram_energy", where, u.include_dram_energy);
  u.dram_reads_event = read(j, "dram_reads_event", where, u.dram_reads_event);
  u.dram_writes_event = read(j, "dram_writes_event", where, u.dram_writes_event);
  u.flop_event_prefix = read(j, "flop_event_prefix", where, u.flop_event_prefix);
  u.flop_weights = read(j, "flop_weights", where, u.flop_weights);
  return u;
}

json to_json(const MachineRoofline& m) {
  return json{{"peak_gflops", m.peak_gflops}, {"dram_bw_gbs", m.dram_bw_gbs},
              {"l3_bw_gbs", m.l3_bw_gbs},     {"ridge_dram", m.ridge_dram},
              {"ridge_l3", m.ridge_l3}};
}

MachineRoofline roofline_from_json(const json& j) {
  const std::string where = "roofline";
  check_keys(j, where, {"peak_gflops", "dram_bw_gbs", "l3_bw_gbs", "ridge_dram", "ridge_l3"});
  const auto get = [&](const char* key) { return read<double>(j, key, where, 0.0); };
  if (!j.contains("peak_gflops")) bad_config("roofline.peak_gflops is required");
  const bool ridges = j.contains("ridge_dram") && j.contains("ridge_l3");
  const bool bandwidths = j.contains("dram_bw_gbs") && j.contains("l3_bw_gbs");
  MachineRoofline m;
  if (ridges && bandwidths) {
    // Fully specified (as written by to_json): keep every value verbatim.
    m = MachineRoofline{get("peak_gflops"), get("dram_bw_gbs"), get("l3_bw_gbs"),
                        get("ridge_dram"), get("ridge_l3")};
    m.validate();
  } else if (ridges) {
    m = MachineRoofline::from_ridges(get("peak_gflops"), get("ridge_dram"), get("ridge_l3"));
  } else if (bandwidths) {
    m = MachineRoofline::from_bandwidths(get("peak_gflops"), get("dram_bw_gbs"), get("l3_bw_gbs"));
  } else {
    bad_config("roofline needs ridge_dram/ridge_l3 or dram_bw_gbs/l3_bw_gbs");
  }
  return m;
}

SearchSpace default_regressor_space() {
  SearchSpace s;
  s.max_features = {MaxFeatures::parse("third"), MaxFeatures::parse("sqrt"),
                    MaxFeatures::parse("all")};
  return s;
}

SearchSpace default_classifier_space() {
  SearchSpace s;
  s.max_features = {MaxFeatures::parse("sqrt"), MaxFeatures::parse("all")};
  return s;
}

PerfSchema PipelineConfig::perf_schema() const {
  PerfSchema schema;
  schema.required_events = {units.energy_event, units.dram_reads_event, units.dram_writes_event};
  if (units.include_dram_energy) schema.required_events.push_back(units.dram_energy_event);
  schema.flop_event_prefix = units.flop_event_prefix;
  return schema;
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "config",
             {"manifest", "roofline", "units", "selection", "search", "cv_folds", "seed",
              "direct_classifier", "evaluate_loo", "label_boundary", "timings"});
  PipelineConfig cfg;
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (!j.contains("manifest")) bad_config("'manifest' is required");
  cfg.manifest = resolve(read<std::string>(j, "manifest", "config", ""));
  if (j.contains("timings")) cfg.timings = resolve(read<std::string>(j, "timings", "config", ""));
  if (j.contains("roofline")) cfg.roofline = roofline_from_json(j.at("roofline"));
  if (j.contains("units")) cfg.units = units_from_json(j.at("units"));

  if (j.contains("selection")) {
    const json& s = j.at("selection");
    check_keys(s, "selection", {"target", "threshold", "must_keep", "leakage", "extra_features"});
    cfg.selection.target = read(s, "target", "selection", cfg.selection.target);
    cfg.selection.threshold = read(s, "threshold", "selection", cfg.selection.threshold);
    cfg.selection.must_keep = read(s, "must_keep", "selection", cfg.selection.must_keep);
    cfg.selection.leakage = read(s, "leakage", "selection", cfg.selection.leakage);
    cfg.selection.extra_features =
        read(s, "extra_features", "selection", cfg.selection.extra_features);
    if (!(cfg.selection.threshold >= 0.0)) {
      throw Error(ErrorKind::Config, "selection.threshold must be >= 0");
    }
  }
  if (j.contains("search")) {
    const json& s = j.at("search");
    check_keys(s, "search", {"method", "n_draws", "regressor", "classifier"});
    const auto method = read<std::string>(s, "method", "search", "grid");
    if (method == "grid") {
      cfg.search.method = SearchMethod::grid;
    } else if (method == "random") {
      cfg.search.method = SearchMethod::random;
    } else {
      bad_config("search.method must be 'grid' or 'random'");
    }
    cfg.search.n_draws = read(s, "n_draws", "search", cfg.search.n_draws);
    if (cfg.search.n_draws < 1) throw Error(ErrorKind::Config, "search.n_draws must be >= 1");
    if (s.contains("regressor")) cfg.search.regressor = SearchSpace::from_json(s.at("regressor"));
    if (s.contains("classifier")) cfg.search.classifier = SearchSpace::from_json(s.at("classifier"));
  }
  cfg.cv_folds = read(j, "cv_folds", "config", cfg.cv_folds);
  if (cfg.cv_folds < 2) throw Error(ErrorKind::Config, "cv_folds must be >= 2");
  cfg.seed = read(j, "seed", "config", cfg.seed);
  cfg.direct_classifier = read(j, "direct_classifier", "config", cfg.direct_classifier);
  cfg.evaluate_loo = read(j, "evaluate_loo", "config", cfg.evaluate_loo);
  if (j.contains("label_boundary")) {
    cfg.label_boundary = parse_boundary(read<std::string>(j, "label_boundary", "config", ""));
  }
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Usage, path.string() + ": " + e.what());
  }
  try {
    return from_json(j, path.parent_path());
  } catch (const Error& e) {
    rethrow_with_context(e, path.string());
  }
}

json PipelineConfig::to_json() const {
  json j{{"manifest", manifest.string()},
         {"roofline", nmpo::to_json(roofline)},
         {"units", nmpo::to_json(units)},
         {"selection",
          {{"target", selection.target},
           {"threshold", selection.threshold},
           {"must_keep", selection.must_keep},
           {"leakage", selection.leakage},
           {"extra_features", selection.extra_features}}},
         {"search",
          {{"method", search.method == SearchMethod::grid ? "grid" : "random"},
           {"n_draws", search.n_draws},
           {"regressor", search.regressor.to_json()},
           {"classifier", search.classifier.to_json()}}},
         {"cv_folds", cv_folds},
         {"seed", seed},
         {"direct_classifier", direct_classifier},
         {"evaluate_loo", evaluate_loo},
         {"label_boundary", std::string(to_string(label_boundary))}};
  if (timings) j["timings"] = timings->string();
  return j;
}

// ---------------------------------------------------------------------------

void annotate_all(std::vector<RunRecord>& records, const UnitConfig& units,
                  BoundaryConvention convention) {
  for (auto& r : records) {
    try {
      annotate(r, units, convention);
    } catch (const Error& e) {
      rethrow_with_context(e, describe(key_of(r.spec)));
    }
  }
}

std::vector<RunRecord> load_annotated_corpus(const PipelineConfig& cfg) {
  auto records = load_corpus(load_manifest(cfg.manifest), cfg.perf_schema());
  annotate_all(records, cfg.units, cfg.label_boundary);
  return records;
}

// ---------------------------------------------------------------------------

SelectionSummary select_host_features(const std::vector<RunRecord>& labeled,
                                      const SelectionConfig& selection,
                                      CorrelationMatrix* correlation) {
  std::vector<std::string> candidates = default_feature_columns();
  for (const auto& extra : selection.extra_features) {
    if (std::find(candidates.begin(), candidates.end(), extra) == candidates.end()) {
      candidates.push_back(extra);
    }
  }
  for (const auto& name : selection.must_keep) {
    if (std::find(candidates.begin(), candidates.end(), name) == candidates.end()) {
      throw Error(ErrorKind::Name, "must_keep feature '" + name + "' is not a candidate column");
    }
  }
  const FeatureMatrix m = corpus_feature_matrix(labeled, candidates, selection.target);
  CorrelationMatrix cm = correlation_matrix(m);

  SelectionOptions options;
  options.threshold = selection.threshold;
  options.must_keep = selection.must_keep;
  options.excluded = selection.leakage;
  if (options.excluded.empty()) {
    options.excluded.insert(nmc_feature_columns().begin(), nmc_feature_columns().end());
  }
  options.excluded.insert(selection.target);

  SelectionSummary summary;
  summary.target = selection.target;
  summary.threshold = selection.threshold;
  summary.candidates = candidates;
  summary.selected = select_features(cm, selection.target, options);
  for (const auto& name : candidates) {
    if (name != selection.target) summary.r_with_target[name] = cm.at(name, selection.target);
  }
  summary.undefined = cm.undefined;
  for (const auto& name : summary.selected) {
    if (is_nmc_feature(name)) {
      throw Error(ErrorKind::Feature, "NMC-side column '" + name + "' cannot be a model input");
    }
  }
  if (summary.selected.empty()) {
    throw Error(ErrorKind::Feature, "no host feature reaches |r| >= threshold with " +
                                        selection.target);
  }
  if (correlation) *correlation = std::move(cm);
  return summary;
}

namespace {

SearchResult run_search(const Eigen::MatrixXd& X, const Targets& y, const SearchSpace& space,
                        const PipelineConfig& cfg, std::uint64_t seed, unsigned threads) {
  if (cfg.search.method == SearchMethod::grid) {
    return grid_search(X, y, space, cfg.cv_folds, seed, threads);
  }
  return random_search(X, y, space, cfg.search.n_draws, cfg.cv_folds, seed, threads);
}

template <typename F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    rethrow_with_context(e, name);
  }
}

}  // namespace

std::vector<LooResult> evaluate_leave_one_app_out(const std::vector<RunRecord>& records,
                                                  const SelectionConfig& selection,
                                                  const StageHyperparams& hp, unsigned threads) {
  const auto labeled = labeled_records(records);
  std::vector<LooResult> results;
  for (const auto& app : app_names(labeled)) {
    std::vector<RunRecord> others;
    for (const auto& r : labeled) {
      if (r.spec.app != app) others.push_back(r);
    }
    try {
      const auto chosen = select_host_features(others, selection);
      results.push_back(leave_one_app_out(records, app, chosen.selected, hp, threads));
    } catch (const Error& e) {
      rethrow_with_context(e, "leave-one-out '" + app + "'");
    }
  }
  return results;
}

TrainResult train_on_records(const std::vector<RunRecord>& records, const PipelineConfig& cfg,
                             const TrainOptions& options) {
  std::vector<RunRecord> labeled;
  for (auto& r : labeled_records(records)) {
    if (r.spec.role == RunRole::train) labeled.push_back(std::move(r));
  }
  const auto apps = app_names(labeled);
  if (apps.size() < 2) {
    throw Error(ErrorKind::Corpus, "training needs labeled runs of at least 2 applications (found " +
                                       std::to_string(apps.size()) + ")");
  }

  TrainResult result;
  TrainReport& rep = result.report;
  rep.training_rows = labeled.size();
  for (OffloadLabel l : kAllLabels) rep.class_counts[std::string(to_string(l))] = 0;
  for (const auto& r : labeled) ++rep.class_counts[std::string(to_string(*r.label))];
  for (const auto& [label, count] : rep.class_counts) {
    if (count * 10 < static_cast<int>(labeled.size())) {
      rep.warnings.push_back("class imbalance: '" + label + "' has " + std::to_string(count) +
                             " of " + std::to_string(labeled.size()) + " training rows (< 10%)");
    }
  }
  if (rep.class_counts["no"] == static_cast<int>(labeled.size())) {
    rep.warnings.push_back("every training label is 'no'; the classifier is constant");
  }

  rep.selection = stage("feature selection", [&] {
    return select_host_features(labeled, cfg.selection, &rep.correlation);
  });
  const StageData data = stage_data(labeled, rep.selection.selected);

  rep.regressor_search = stage("stage 1 search", [&] {
    return run_search(data.host, Targets::regression(data.ipc), cfg.search.regressor, cfg,
                      derive_seed(cfg.seed, 1), options.threads);
  });
  rep.classifier_search = stage("stage 2 search", [&] {
    return run_search(data.with_ipc, Targets::classification(data.classes, 3),
                      cfg.search.classifier, cfg, derive_seed(cfg.seed, 2), options.threads);
  });
  const StageHyperparams hp{rep.regressor_search.best, rep.classifier_search.best};

  ModelBundle& bundle = result.bundle;
  bundle.model = stage("final fit", [&] {
    return fit_two_stage(labeled, rep.selection.selected, hp, cfg.direct_classifier,
                         options.threads);
  });
  bundle.selection = rep.selection;
  bundle.units = cfg.units;
  bundle.roofline = cfg.roofline;
  bundle.label_boundary = cfg.label_boundary;
  bundle.created_at = options.created_at;

  const auto fitted = predict_class_rows(bundle.model.classifier, data.with_ipc);
  rep.classifier_training_accuracy = accuracy<int>(fitted, data.classes);

  if (cfg.evaluate_loo) {
    rep.loo = stage("leave-one-app-out evaluation", [&] {
      return evaluate_leave_one_app_out(records, cfg.selection, hp, options.threads);
    });
  }
  return result;
}

TrainResult train_pipeline(const PipelineConfig& cfg, const TrainOptions& options) {
  const auto records = stage("ingest", [&] { return load_annotated_corpus(cfg); });
  return train_on_records(records, cfg, options);
}

// ---------------------------------------------------------------------------

std::string_view decision_text(OffloadLabel label) {
  switch (label) {
    case OffloadLabel::yes: return "offload";
    case OffloadLabel::maybe: return "user decision";
    case OffloadLabel::no: return "keep on host";
  }
  return "keep on host";
}

Prediction predict_offload(const ModelBundle& bundle, const PerfProfile& host, const RunSpec& spec) {
  std::vector<std::string> absent;
  for (const auto& event : bundle.units.required_events()) {
    if (event == bundle.units.flop_event_prefix) {
      const bool any = std::any_of(host.events.begin(), host.events.end(), [&](const auto& e) {
        return e.first.starts_with(event) && e.second.value.has_value();
      });
      if (!any) absent.push_back(event);
    } else if (!host.has_value(event)) {
      absent.push_back(event);
    }
  }
  for (const auto& name : bundle.host_features()) {
    if (name.starts_with(kRawEventPrefix)) {
      const std::string event = name.substr(std::char_traits<char>::length(kRawEventPrefix));
      if (!host.has_value(event)) absent.push_back(event);
    }
  }
  if (!absent.empty()) {
    std::string list;
    for (const auto& a : absent) list += (list.empty() ? "" : ", ") + a;
    throw Error(ErrorKind::Schema, "host profile lacks events required by the model: " + list);
  }

  RunRecord host_only;
  host_only.spec = spec;
  host_only.host = host;
  const DerivedFeatures derived = derive_features(host_only, bundle.units);
  const auto row = host_feature_row(bundle.host_features(), spec, host, derived);
  const StagePrediction p = predict_two_stage(bundle.model, row);

  Prediction out;
  out.app = spec.app;
  out.spec = spec;
  out.predicted_ipc = p.ipc;
  out.label = p.label;
  out.probabilities = p.probabilities;
  if (bundle.model.direct_classifier) {
    const auto proba = predict_proba(*bundle.model.direct_classifier, row);
    out.direct_probabilities.emplace();
    std::copy(proba.begin(), proba.end(), out.direct_probabilities->begin());
    out.direct_label =
        kAllLabels[static_cast<std::size_t>(predict_class(*bundle.model.direct_classifier, row))];
  }
  out.arithmetic_intensity = derived.host_flop_per_byte;
  out.gflops = derived.host_gflops_per_s;
  if (out.arithmetic_intensity > 0.0 && out.gflops > 0.0) {
    out.roofline_region =
        roofline_classify(spec.app, out.arithmetic_intensity, out.gflops, bundle.roofline).region;
  }
  out.model_hash = bundle_hash(bundle);
  return out;
}

Prediction predict_offload(const ModelBundle& bundle, const RunRecord& record) {
  return predict_offload(bundle, record.host, record.spec);
}

json Prediction::to_json() const {
  const auto probs = [](const std::array<double, 3>& p) {
    return json{{"yes", p[0]}, {"maybe", p[1]}, {"no", p[2]}};
  };
  json j{{"app", app},
         {"spec",
          {{"app", spec.app},
           {"dataset_level", spec.dataset_level},
           {"dataset_param", spec.dataset_param},
           {"threads", spec.threads},
           {"role", std::string(nmpo::to_string(spec.role))}}},
         {"predicted_ipc", predicted_ipc},
         {"label", std::string(nmpo::to_string(label))},
         {"decision", std::string(decision_text(label))},
         {"probabilities", probs(probabilities)},
         {"arithmetic_intensity", arithmetic_intensity},
         {"gflops", gflops},
         {"roofline_region",
          roofline_region ? json(std::string(nmpo::to_string(*roofline_region))) : json(nullptr)},
         {"model_hash", model_hash}};
  if (direct_probabilities) {
    j["direct_classifier"] = {{"label", std::string(nmpo::to_string(*direct_label))},
                              {"probabilities", probs(*direct_probabilities)}};
  }
  return j;
}

}  // namespace nmpo
