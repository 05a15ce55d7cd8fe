#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nmpo/eval.hpp"
#include "nmpo/forest.hpp"
#include "nmpo/ingest.hpp"
#include "nmpo/stats.hpp"

namespace nmpo {

// ---------------------------------------------------------------------------
// Feature columns
// ---------------------------------------------------------------------------

/// Host-side columns available at prediction time.
const std::vector<std::string>& default_host_features();
/// Columns that need simulator output and are never model inputs.
const std::vector<std::string>& nmc_feature_columns();
/// default_host_features() followed by nmc_feature_columns().
const std::vector<std::string>& default_feature_columns();

/// Name of the stage-2 input that carries the (predicted) IPC.
inline constexpr const char* kPredictedIpcSlot = "predicted_ipc";
/// Prefix for raw host events used as features, e.g. "perf:LLC-load-misses".
inline constexpr const char* kRawEventPrefix = "perf:";

bool is_nmc_feature(const std::string& name);

/// Value of a host-side feature: a derived host metric, "threads",
/// "dataset_param" or a raw event ("perf:<event>"). Throws ErrorKind::Name for
/// NMC-side or unknown names and ErrorKind::Feature for absent raw events.
double host_feature_value(const std::string& name, const RunSpec& spec, const PerfProfile& host,
                          const DerivedFeatures& derived);

Eigen::RowVectorXd host_feature_row(const std::vector<std::string>& names, const RunSpec& spec,
                                    const PerfProfile& host, const DerivedFeatures& derived);

/// Feature table of labeled records over `columns` (host or NMC names); the
/// target column name is recorded but its values come from `columns` too.
FeatureMatrix corpus_feature_matrix(const std::vector<RunRecord>& records,
                                    const std::vector<std::string>& columns,
                                    const std::string& target = "edp_speedup");

/// Records with a label (and therefore complete host and NMC data).
std::vector<RunRecord> labeled_records(const std::vector<RunRecord>& records);
/// Distinct app names, first-appearance order.
std::vector<std::string> app_names(const std::vector<RunRecord>& records);

// ---------------------------------------------------------------------------
// Two-stage model
// ---------------------------------------------------------------------------

struct StageHyperparams {
  Hyperparams regressor;
  Hyperparams classifier;
};

/// Stage 1 maps host features to NMC IPC. Stage 2 classifies host features
/// plus IPC (true IPC when fitting, predicted IPC when predicting).
struct TwoStageModel {
  std::vector<std::string> host_features;
  RandomForestModel ipc_regressor;
  RandomForestModel classifier;
  std::optional<RandomForestModel> direct_classifier;  // host features only

  bool operator==(const TwoStageModel&) const = default;
};

struct StagePrediction {
  double ipc = 0.0;
  std::array<double, 3> probabilities{};  // yes, maybe, no
  OffloadLabel label = OffloadLabel::no;
};

/// Class labels in the order used by every classifier.
const std::vector<std::string>& classifier_labels();

/// Stage-1 inputs, stage-1 targets, stage-2 inputs and class targets of
/// labeled records.
struct StageData {
  Eigen::MatrixXd host;
  Eigen::VectorXd ipc;
  Eigen::MatrixXd with_ipc;
  std::vector<int> classes;
};
StageData stage_data(const std::vector<RunRecord>& labeled,
                     const std::vector<std::string>& host_features);

TwoStageModel fit_two_stage(const std::vector<RunRecord>& labeled,
                            const std::vector<std::string>& host_features,
                            const StageHyperparams& hp, bool direct_classifier = false,
                            unsigned threads = 0);

StagePrediction predict_two_stage(const TwoStageModel& model, const Eigen::RowVectorXd& host_row);
/// Stage 2 alone, with a caller-supplied IPC.
StagePrediction classify_with_ipc(const TwoStageModel& model, const Eigen::RowVectorXd& host_row,
                                  double ipc);

// ---------------------------------------------------------------------------
// Leave-one-application-out
// ---------------------------------------------------------------------------

struct LooResult {
  std::string app;
  std::vector<RunKey> rows;
  std::vector<OffloadLabel> actual;
  std::vector<OffloadLabel> predicted;
  std::vector<std::array<double, 3>> probabilities;
  std::vector<double> predicted_ipc;
  std::vector<double> true_ipc;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  /// App of every training row, in training-matrix order.
  std::vector<std::string> training_apps;
  TwoStageModel model;
};

/// Trains on the labeled records of every other app and scores the labeled
/// records of `app`.
LooResult leave_one_app_out(const std::vector<RunRecord>& records, const std::string& app,
                            const std::vector<std::string>& host_features,
                            const StageHyperparams& hp, unsigned threads = 0);

/// Mean of the per-app accuracies and accuracy over all scored rows.
struct LooSummary {
  double mean_app_accuracy = 0.0;
  double row_accuracy = 0.0;
  ConfusionMatrix confusion;  // all rows pooled
};
LooSummary summarize(const std::vector<LooResult>& results);

}  // namespace nmpo
