#include "nmpo/model.hpp"

#include <algorithm>

#include "nmpo/error.hpp"

namespace nmpo {

const std::vector<std::string>& default_host_features() {
  static const std::vector<std::string> names{
      "host_total_energy_j", "host_edp_js",       "host_dram_access_gb", "host_flops",
      "host_gflops_per_s",   "host_flop_per_byte", "threads"};
  return names;
}

const std::vector<std::string>& nmc_feature_columns() {
  static const std::vector<std::string> names{"nmc_ipc", "nmc_total_time_ns", "nmc_trace_energy_pj",
                                              "nmc_edp_js", "edp_speedup"};
  return names;
}

const std::vector<std::string>& default_feature_columns() {
  static const std::vector<std::string> names = [] {
    auto all = default_host_features();
    const auto& nmc = nmc_feature_columns();
    all.insert(all.end(), nmc.begin(), nmc.end());
    return all;
  }();
  return names;
}

bool is_nmc_feature(const std::string& name) {
  const auto& nmc = nmc_feature_columns();
  return std::find(nmc.begin(), nmc.end(), name) != nmc.end();
}

double host_feature_value(const std::string& name, const RunSpec& spec, const PerfProfile& host,
                          const DerivedFeatures& d) {
  if (name == "host_total_energy_j") return d.host_total_energy_j;
  if (name == "host_edp_js") return d.host_edp_js;
  if (name == "host_dram_access_gb") return d.host_dram_access_gb;
  if (name == "host_flops") return d.host_flops;
  if (name == "host_gflops_per_s") return d.host_gflops_per_s;
  if (name == "host_flop_per_byte") return d.host_flop_per_byte;
  if (name == "threads") return spec.threads;
  if (name == "dataset_param") return static_cast<double>(spec.dataset_param);
  if (name.starts_with(kRawEventPrefix)) {
    return host.value(name.substr(std::char_traits<char>::length(kRawEventPrefix)));
  }
  if (is_nmc_feature(name)) {
    throw Error(ErrorKind::Name, "'" + name + "' is an NMC-side feature, not a host feature");
  }
  throw Error(ErrorKind::Name, "unknown feature '" + name + "'");
}

Eigen::RowVectorXd host_feature_row(const std::vector<std::string>& names, const RunSpec& spec,
                                    const PerfProfile& host, const DerivedFeatures& derived) {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    row(static_cast<Eigen::Index>(i)) = host_feature_value(names[i], spec, host, derived);
  }
  return row;
}

namespace {

double record_value(const std::string& name, const RunRecord& r) {
  const DerivedFeatures& d = *r.derived;
  const auto need = [&](const std::optional<double>& v) {
    if (!v) throw Error(ErrorKind::Feature, describe(key_of(r.spec)) + ": no value for " + name);
    return *v;
  };
  if (name == "nmc_ipc") return need(d.nmc_ipc);
  if (name == "nmc_total_time_ns") return need(d.nmc_total_time_ns);
  if (name == "nmc_trace_energy_pj") return need(d.nmc_trace_energy_pj);
  if (name == "nmc_edp_js") return need(d.nmc_edp_js);
  if (name == "edp_speedup") return need(d.edp_speedup);
  return host_feature_value(name, r.spec, r.host, d);
}

void require_labeled(const RunRecord& r) {
  if (!r.derived || !r.label) {
    throw Error(ErrorKind::Corpus, describe(key_of(r.spec)) + ": record is not labeled");
  }
}

}  // namespace

FeatureMatrix corpus_feature_matrix(const std::vector<RunRecord>& records,
                                    const std::vector<std::string>& columns,
                                    const std::string& target) {
  FeatureMatrix m;
  m.columns = columns;
  m.target = target;
  m.values.resize(static_cast<Eigen::Index>(records.size()),
                  static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    require_labeled(records[i]);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          record_value(columns[j], records[i]);
    }
  }
  m.validate();
  return m;
}

std::vector<RunRecord> labeled_records(const std::vector<RunRecord>& records) {
  std::vector<RunRecord> out;
  for (const auto& r : records) {
    if (r.label && r.derived && r.derived->nmc_ipc) out.push_back(r);
  }
  return out;
}

std::vector<std::string> app_names(const std::vector<RunRecord>& records) {
  std::vector<std::string> apps;
  for (const auto& r : records) {
    if (std::find(apps.begin(), apps.end(), r.spec.app) == apps.end()) apps.push_back(r.spec.app);
  }
  return apps;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& classifier_labels() {
  static const std::vector<std::string> labels{"yes", "maybe", "no"};
  return labels;
}

StageData stage_data(const std::vector<RunRecord>& labeled,
                     const std::vector<std::string>& host_features) {
  if (labeled.empty()) throw Error(ErrorKind::Corpus, "no labeled records to train on");
  if (host_features.empty()) throw Error(ErrorKind::Feature, "no host features selected");
  const auto n = static_cast<Eigen::Index>(labeled.size());
  const auto p = static_cast<Eigen::Index>(host_features.size());
  StageData d;
  d.host.resize(n, p);
  d.ipc.resize(n);
  d.classes.resize(labeled.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const RunRecord& r = labeled[static_cast<std::size_t>(i)];
    require_labeled(r);
    d.host.row(i) = host_feature_row(host_features, r.spec, r.host, *r.derived);
    d.ipc(i) = record_value("nmc_ipc", r);
    d.classes[static_cast<std::size_t>(i)] = label_index(*r.label);
  }
  d.with_ipc.resize(n, p + 1);
  d.with_ipc << d.host, d.ipc;
  return d;
}

TwoStageModel fit_two_stage(const std::vector<RunRecord>& labeled,
                            const std::vector<std::string>& host_features,
                            const StageHyperparams& hp, bool direct_classifier,
                            unsigned threads) {
  const StageData d = stage_data(labeled, host_features);
  std::vector<std::string> stage2_names = host_features;
  stage2_names.push_back(kPredictedIpcSlot);

  TwoStageModel model;
  model.host_features = host_features;
  model.ipc_regressor =
      fit_forest(d.host, Targets::regression(d.ipc), hp.regressor, {host_features, {}}, threads);
  const Targets classes = Targets::classification(d.classes, 3);
  model.classifier =
      fit_forest(d.with_ipc, classes, hp.classifier, {stage2_names, classifier_labels()}, threads);
  if (direct_classifier) {
    model.direct_classifier =
        fit_forest(d.host, classes, hp.classifier, {host_features, classifier_labels()}, threads);
  }
  return model;
}

StagePrediction classify_with_ipc(const TwoStageModel& model, const Eigen::RowVectorXd& host_row,
                                  double ipc) {
  if (host_row.size() != static_cast<Eigen::Index>(model.host_features.size())) {
    throw Error(ErrorKind::Shape, "host feature row has the wrong length");
  }
  Eigen::RowVectorXd row(host_row.size() + 1);
  row << host_row, ipc;
  StagePrediction out;
  out.ipc = ipc;
  const auto proba = predict_proba(model.classifier, row);
  std::copy(proba.begin(), proba.end(), out.probabilities.begin());
  out.label = kAllLabels[static_cast<std::size_t>(predict_class(model.classifier, row))];
  return out;
}

StagePrediction predict_two_stage(const TwoStageModel& model, const Eigen::RowVectorXd& host_row) {
  if (host_row.size() != static_cast<Eigen::Index>(model.host_features.size())) {
    throw Error(ErrorKind::Shape, "host feature row has the wrong length");
  }
  return classify_with_ipc(model, host_row, predict_regression(model.ipc_regressor, host_row));
}

// ---------------------------------------------------------------------------

LooResult leave_one_app_out(const std::vector<RunRecord>& records, const std::string& app,
                            const std::vector<std::string>& host_features,
                            const StageHyperparams& hp, unsigned threads) {
  const bool present = std::any_of(records.begin(), records.end(),
                                   [&](const RunRecord& r) { return r.spec.app == app; });
  if (!present) throw Error(ErrorKind::Name, "application '" + app + "' is not in the corpus");

  std::vector<RunRecord> train, test;
  for (const auto& r : labeled_records(records)) {
    (r.spec.app == app ? test : train).push_back(r);
  }
  if (train.empty()) {
    throw Error(ErrorKind::Corpus, "no labeled records outside '" + app + "' to train on");
  }
  if (test.empty()) throw Error(ErrorKind::Corpus, "application '" + app + "' has no labeled records");

  LooResult result;
  result.app = app;
  for (const auto& r : train) result.training_apps.push_back(r.spec.app);
  try {
    result.model = fit_two_stage(train, host_features, hp, false, threads);
  } catch (const Error& e) {
    rethrow_with_context(e, "leave-one-out '" + app + "'");
  }
  for (const auto& r : test) {
    const auto row = host_feature_row(host_features, r.spec, r.host, *r.derived);
    const StagePrediction p = predict_two_stage(result.model, row);
    result.rows.push_back(key_of(r.spec));
    result.actual.push_back(*r.label);
    result.predicted.push_back(p.label);
    result.probabilities.push_back(p.probabilities);
    result.predicted_ipc.push_back(p.ipc);
    result.true_ipc.push_back(*r.derived->nmc_ipc);
  }
  result.accuracy = accuracy(result.predicted, result.actual);
  result.confusion = confusion(result.predicted, result.actual);
  return result;
}

LooSummary summarize(const std::vector<LooResult>& results) {
  if (results.empty()) throw Error(ErrorKind::Domain, "no leave-one-out results");
  LooSummary s;
  std::vector<double> per_app;
  for (const auto& r : results) {
    per_app.push_back(r.accuracy);
    s.confusion.counts += r.confusion.counts;
  }
  s.mean_app_accuracy = mean_score(per_app);
  s.row_accuracy = s.confusion.accuracy();
  return s;
}

}  // namespace nmpo
