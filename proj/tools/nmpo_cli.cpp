#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "nmpo/error.hpp"
#include "nmpo/io.hpp"
#include "nmpo/pipeline.hpp"
#include "nmpo/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool quiet = false;
};

void add_globals(CLI::App& app, Globals& g) {
  app.add_option("--config", g.config, "Pipeline configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the master seed");
  app.add_flag("--force", g.force, "Overwrite existing outputs");
  app.add_flag("--quiet", g.quiet, "Suppress diagnostics on stderr");
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

void note(const Globals& g, const std::string& text) {
  if (!g.quiet) std::cerr << "nmpo: " << text << "\n";
}

nmpo::PipelineConfig load_config(const Globals& g) {
  if (g.config.empty()) throw nmpo::Error(nmpo::ErrorKind::Usage, "--config is required");
  auto cfg = nmpo::PipelineConfig::load(g.config);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

// SOURCE_DATE_EPOCH keeps bundles reproducible; otherwise the current time.
std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string digest(const nmpo::FileSet& files) {
  std::string all;
  for (const auto& [name, content] : files) {
    all += name;
    all += '\0';
    all += content;
    all += '\0';
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(nmpo::fnv1a64(all)));
  return buf;
}

json file_list(const nmpo::FileSet& files) {
  json names = json::array();
  for (const auto& [name, content] : files) names.push_back(name);
  return names;
}

nmpo::RunSpec parse_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    try {
      j = json::parse(nmpo::read_text_file(text));
    } catch (const json::parse_error& e) {
      throw nmpo::Error(nmpo::ErrorKind::Validation, "--spec: " + std::string(e.what()));
    }
  }
  if (!j.is_object()) throw nmpo::Error(nmpo::ErrorKind::Validation, "--spec must be a JSON object");
  nmpo::RunSpec spec;
  try {
    spec.app = j.at("app").get<std::string>();
    spec.dataset_level = j.value("dataset_level", 1);
    spec.dataset_param = j.value("dataset_param", 1LL);
    spec.threads = j.at("threads").get<int>();
    spec.role = j.value("role", std::string("test")) == "train" ? nmpo::RunRole::train
                                                                : nmpo::RunRole::test;
  } catch (const json::exception& e) {
    throw nmpo::Error(nmpo::ErrorKind::Validation, "--spec: " + std::string(e.what()));
  }
  nmpo::validate(spec);
  return spec;
}

int run(int argc, char** argv) {
  CLI::App app{"Near-memory offload predictor: profile ingestion, EDP labeling and two-stage "
               "random-forest models"};
  app.require_subcommand(1);
  Globals g;
  add_globals(app, g);

  std::string out, model, perf, spec_text, reports, synth_config;

  auto* train = app.add_subcommand("train", "Tune, fit and save the two-stage model");
  add_globals(*train, g);
  train->add_option("--out", out, "Model bundle to write")->required();
  train->add_option("--reports", reports, "Report directory (default: <out>.reports)");

  auto* predict = app.add_subcommand("predict", "Predict offload suitability from a host profile");
  add_globals(*predict, g);
  predict->add_option("--model", model, "Model bundle")->required();
  predict->add_option("--perf", perf, "Host profile (perf stat -x; output)")->required();
  predict->add_option("--spec", spec_text, "Run spec as inline JSON or a JSON file")->required();

  auto* correlate = app.add_subcommand("correlate", "Correlation matrix and feature selection");
  add_globals(*correlate, g);
  correlate->add_option("--out", out, "Directory for correlation.csv and selection.json");

  auto* rep = app.add_subcommand("report", "Roofline, energy, EDP and model reports");
  add_globals(*rep, g);
  rep->add_option("--model", model, "Model bundle (adds confusion matrix and accuracy)");
  rep->add_option("--out", out, "Report directory")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  add_globals(*synth, g);
  synth->add_option("--synth-config", synth_config, "Generator configuration (JSON)");
  synth->add_option("--out", out, "Corpus directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (train->parsed()) {
    const auto cfg = load_config(g);
    const fs::path bundle_path = out;
    const fs::path report_dir = reports.empty() ? fs::path(out + ".reports") : fs::path(reports);
    if (fs::exists(bundle_path) && !g.force) {
      throw nmpo::Error(nmpo::ErrorKind::Usage,
                        bundle_path.string() + " exists (use --force to overwrite)");
    }
    if (fs::exists(report_dir) && !g.force) {
      throw nmpo::Error(nmpo::ErrorKind::Usage,
                        report_dir.string() + " exists (use --force to overwrite)");
    }
    note(g, "training on " + cfg.manifest.string());
    const auto result = nmpo::train_pipeline(cfg, {timestamp(), 0});
    for (const auto& w : result.report.warnings) note(g, "warning: " + w);
    const auto files = result.report.files();
    nmpo::write_directory_atomic(report_dir, files, g.force);
    nmpo::save_model(result.bundle, bundle_path);
    json summary{{"bundle", bundle_path.string()},
                 {"model_hash", nmpo::bundle_hash(result.bundle)},
                 {"reports", report_dir.string()},
                 {"host_features", result.bundle.host_features()},
                 {"training_rows", result.report.training_rows},
                 {"regressor_cv_rmse", result.report.regressor_search.report.cv_score},
                 {"classifier_cv_accuracy", result.report.classifier_search.report.cv_accuracy},
                 {"warnings", result.report.warnings}};
    if (!result.report.loo.empty()) {
      const auto s = nmpo::summarize(result.report.loo);
      summary["loo_mean_app_accuracy"] = s.mean_app_accuracy;
      summary["loo_row_accuracy"] = s.row_accuracy;
    }
    emit(summary);
  } else if (predict->parsed()) {
    const auto bundle = nmpo::load_model(model);
    const auto spec = parse_spec(spec_text);
    nmpo::PerfSchema schema;
    schema.required_events = {};
    schema.flop_event_prefix = bundle.units.flop_event_prefix;
    const auto profile = nmpo::parse_perf_csv(nmpo::read_text_file(perf), schema);
    emit(nmpo::predict_offload(bundle, profile, spec).to_json());
  } else if (correlate->parsed()) {
    const auto cfg = load_config(g);
    const auto records = nmpo::labeled_records(nmpo::load_annotated_corpus(cfg));
    nmpo::CorrelationMatrix cm;
    const auto selection = nmpo::select_host_features(records, cfg.selection, &cm);
    json selected{{"target", selection.target},
                  {"threshold", selection.threshold},
                  {"selected", selection.selected},
                  {"r_with_target", selection.r_with_target},
                  {"undefined", selection.undefined}};
    json result{{"names", cm.names}, {"rows", records.size()}, {"selection", selected}};
    if (!out.empty()) {
      nmpo::write_directory_atomic(
          out, {{"correlation.csv", cm.to_csv()}, {"selection.json", selected.dump(2) + "\n"}},
          g.force);
      result["out"] = out;
    } else {
      json matrix = json::array();
      for (Eigen::Index i = 0; i < cm.r.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < cm.r.cols(); ++j) row.push_back(cm.r(i, j));
        matrix.push_back(std::move(row));
      }
      result["r"] = std::move(matrix);
    }
    emit(result);
  } else if (rep->parsed()) {
    const auto cfg = load_config(g);
    std::optional<nmpo::ModelBundle> bundle;
    if (!model.empty()) bundle = nmpo::load_model(model);
    const auto records = nmpo::load_annotated_corpus(cfg);
    nmpo::ReportOptions options;
    options.roofline = cfg.roofline;
    if (cfg.timings) options.timings = nmpo::parse_timings_csv(nmpo::read_text_file(*cfg.timings));
    const auto files = nmpo::report(records, bundle ? &*bundle : nullptr, options);
    nmpo::write_directory_atomic(out, files, g.force);
    emit(json{{"out", out}, {"files", file_list(files)}});
  } else if (synth->parsed()) {
    nmpo::SynthConfig cfg;
    if (!synth_config.empty()) {
      json j;
      try {
        j = json::parse(nmpo::read_text_file(synth_config));
      } catch (const json::parse_error& e) {
        throw nmpo::Error(nmpo::ErrorKind::Usage, synth_config + ": " + e.what());
      }
      cfg = nmpo::SynthConfig::from_json(j);
    }
    if (g.seed) cfg.seed = *g.seed;
    const auto corpus = nmpo::generate_synthetic_corpus(cfg);
    nmpo::write_directory_atomic(out, corpus.files, g.force);
    emit(json{{"out", out},
              {"runs", corpus.truth.size()},
              {"files", corpus.files.size()},
              {"digest", digest(corpus.files)}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const nmpo::Error& e) {
    std::cerr << "nmpo: " << nmpo::to_string(e.kind()) << ": " << e.what() << "\n";
    return nmpo::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "nmpo: internal error: " << e.what() << "\n";
    return 4;
  }
}
