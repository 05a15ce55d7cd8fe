#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nmpo/eval.hpp"
#include "nmpo/forest.hpp"
#include "nmpo/ingest.hpp"
#include "nmpo/io.hpp"
#include "nmpo/metrics.hpp"
#include "nmpo/model.hpp"
#include "nmpo/stats.hpp"

namespace nmpo {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SelectionConfig {
  std::string target = "edp_speedup";
  double threshold = 0.3;
  std::set<std::string> must_keep{"threads"};
  /// Columns that must never become model inputs.
  std::set<std::string> leakage;  // defaults to every NMC-side column
  /// Additional host columns to consider ("dataset_param", "perf:<event>").
  std::vector<std::string> extra_features;
};

enum class SearchMethod { grid, random };

/// Default spaces vary only the per-node feature count.
SearchSpace default_regressor_space();
SearchSpace default_classifier_space();

struct SearchConfig {
  SearchSpace regressor = default_regressor_space();
  SearchSpace classifier = default_classifier_space();
  SearchMethod method = SearchMethod::grid;
  int n_draws = 10;
};

struct PipelineConfig {
  std::filesystem::path manifest;
  MachineRoofline roofline = MachineRoofline::reference_i9();
  UnitConfig units;
  SelectionConfig selection;
  SearchConfig search;
  int cv_folds = 5;
  std::uint64_t seed = 0;
  bool direct_classifier = false;
  /// Run leave-one-app-out evaluation as part of training.
  bool evaluate_loo = true;
  BoundaryConvention label_boundary = BoundaryConvention::closed_lower;
  /// Paired profiler timings for the overhead report.
  std::optional<std::filesystem::path> timings;

  PerfSchema perf_schema() const;

  /// Relative paths resolve against `base_dir`. Throws ErrorKind::Usage for
  /// malformed documents and ErrorKind::Config for invalid values.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

nlohmann::json to_json(const UnitConfig& units);
UnitConfig units_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MachineRoofline& roofline);
MachineRoofline roofline_from_json(const nlohmann::json& j);
std::string_view to_string(BoundaryConvention convention);
BoundaryConvention parse_boundary(std::string_view text);

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

/// Loads the manifest and annotates every record with features and labels.
std::vector<RunRecord> load_annotated_corpus(const PipelineConfig& cfg);
void annotate_all(std::vector<RunRecord>& records, const UnitConfig& units,
                  BoundaryConvention convention);

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

struct SelectionSummary {
  std::string target;
  double threshold = 0.0;
  std::vector<std::string> candidates;
  std::vector<std::string> selected;
  std::map<std::string, double> r_with_target;
  std::vector<std::string> undefined;

  bool operator==(const SelectionSummary&) const = default;
};

struct ModelBundle {
  static constexpr int kFormatVersion = 1;

  TwoStageModel model;  // host feature schema lives in model.host_features
  SelectionSummary selection;
  UnitConfig units;
  MachineRoofline roofline;
  BoundaryConvention label_boundary = BoundaryConvention::closed_lower;
  std::string created_at;

  const std::vector<std::string>& host_features() const { return model.host_features; }

  bool operator==(const ModelBundle&) const = default;
};

nlohmann::json to_json(const ModelBundle& bundle);
/// Throws ErrorKind::Version or ErrorKind::Integrity (with a location).
ModelBundle bundle_from_json(const nlohmann::json& j);
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(std::string_view text);
/// Hex FNV-1a of the serialized bundle.
std::string bundle_hash(const ModelBundle& bundle);

void save_model(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string created_at = "1970-01-01T00:00:00Z";
  unsigned threads = 0;
};

struct TrainReport {
  CorrelationMatrix correlation;
  SelectionSummary selection;
  SearchResult regressor_search;
  SearchResult classifier_search;
  double classifier_training_accuracy = 0.0;
  std::vector<LooResult> loo;  // empty unless evaluated
  std::vector<std::string> warnings;
  std::map<std::string, int> class_counts;
  std::size_t training_rows = 0;

  /// Report documents keyed by file name.
  FileSet files() const;
};

struct TrainResult {
  ModelBundle bundle;
  TrainReport report;
};

/// Selects features, tunes and fits both stages on the train-role labeled
/// records. Throws ErrorKind::Corpus with fewer than 2 labeled apps.
TrainResult train_on_records(const std::vector<RunRecord>& records, const PipelineConfig& cfg,
                             const TrainOptions& options = {});
TrainResult train_pipeline(const PipelineConfig& cfg, const TrainOptions& options = {});

/// Host features chosen by correlation on `labeled`.
SelectionSummary select_host_features(const std::vector<RunRecord>& labeled,
                                      const SelectionConfig& selection,
                                      CorrelationMatrix* correlation = nullptr);

/// Leave-one-app-out over every app, re-selecting features on each training
/// split.
std::vector<LooResult> evaluate_leave_one_app_out(const std::vector<RunRecord>& records,
                                                  const SelectionConfig& selection,
                                                  const StageHyperparams& hp,
                                                  unsigned threads = 0);

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

struct Prediction {
  std::string app;
  RunSpec spec;
  double predicted_ipc = 0.0;
  OffloadLabel label = OffloadLabel::no;
  std::array<double, 3> probabilities{};  // yes, maybe, no
  std::optional<OffloadLabel> direct_label;
  std::optional<std::array<double, 3>> direct_probabilities;
  double arithmetic_intensity = 0.0;
  double gflops = 0.0;
  std::optional<RooflineRegion> roofline_region;  // absent when ai or perf is 0
  std::string model_hash;

  nlohmann::json to_json() const;
};

/// Uses host data only. Throws ErrorKind::Schema listing every absent
/// event the bundle needs.
Prediction predict_offload(const ModelBundle& bundle, const PerfProfile& host, const RunSpec& spec);
/// Same, reading only `record.spec` and `record.host`.
Prediction predict_offload(const ModelBundle& bundle, const RunRecord& record);

/// "offload", "user decision" or "keep on host".
std::string_view decision_text(OffloadLabel label);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct TimingPair {
  std::string app;
  long long dataset = 0;
  double perf_s = 0.0;
  double reference_s = 0.0;
};

/// CSV with header app,dataset,perf_s,pisa_s.
std::vector<TimingPair> parse_timings_csv(std::string_view text);

struct OverheadRow {
  TimingPair pair;
  double speedup = 0.0;
  bool below_two_orders = false;  // speedup < 100
};

std::vector<OverheadRow> profiler_overhead(const std::vector<TimingPair>& pairs);

struct ReportOptions {
  MachineRoofline roofline = MachineRoofline::reference_i9();
  std::vector<TimingPair> timings;
};

/// Roofline, energy/time and EDP tables for the records; with a bundle also
/// the confusion matrix, probabilities and per-app accuracy over the
/// test-role labeled records (all labeled records when there are none).
FileSet report(const std::vector<RunRecord>& records, const ModelBundle* bundle,
               const ReportOptions& options);

}  // namespace nmpo
