#include <sstream>

#include "nmpo/error.hpp"
#include "nmpo/pipeline.hpp"

namespace nmpo {

using nlohmann::json;

namespace {

// A table rendered twice: CSV for humans and spreadsheets, JSON for tools.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  std::string csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        const json& v = row[i];
        if (v.is_number_float()) {
          out += format_double(v.get<double>());
        } else if (v.is_string()) {
          const auto s = v.get<std::string>();
          out += s.find_first_of(",\"\n") == std::string::npos ? s : json(s).dump();
        } else if (v.is_null()) {
          // empty cell
        } else {
          out += v.dump();
        }
      }
      out += '\n';
    }
    return out;
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& row : rows) {
      json obj = json::object();
      for (std::size_t i = 0; i < row.size(); ++i) obj[columns[i]] = row[i];
      arr.push_back(std::move(obj));
    }
    return arr;
  }
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void add_table(FileSet& files, const std::string& stem, const Table& t, json meta = nullptr) {
  files[stem + ".csv"] = t.csv();
  json doc{{"columns", t.columns}, {"rows", t.to_json()}};
  if (!meta.is_null()) doc["meta"] = std::move(meta);
  files[stem + ".json"] = dump(doc);
}

std::vector<json> run_cells(const RunSpec& s) {
  return {s.app, s.dataset_level, s.threads, std::string(to_string(s.role))};
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json loo_document(const std::vector<LooResult>& loo) {
  const LooSummary s = summarize(loo);
  json per_app = json::array();
  for (const auto& r : loo) {
    per_app.push_back({{"app", r.app},
                       {"rows", r.rows.size()},
                       {"accuracy", r.accuracy},
                       {"confusion", r.confusion.to_json()}});
  }
  return json{{"mean_app_accuracy", s.mean_app_accuracy},
              {"row_accuracy", s.row_accuracy},
              {"confusion", s.confusion.to_json()},
              {"per_app", std::move(per_app)}};
}

Table loo_predictions(const std::vector<LooResult>& loo) {
  Table t{{"app", "dataset_level", "threads", "actual", "predicted", "p_yes", "p_maybe", "p_no",
           "true_ipc", "predicted_ipc"},
          {}};
  for (const auto& r : loo) {
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      const auto& p = r.probabilities[i];
      t.rows.push_back({r.rows[i].app, r.rows[i].dataset_level, r.rows[i].threads,
                        std::string(to_string(r.actual[i])), std::string(to_string(r.predicted[i])),
                        p[0], p[1], p[2], r.true_ipc[i], r.predicted_ipc[i]});
    }
  }
  return t;
}

json search_document(const SearchResult& s) {
  json evaluated = json::array();
  for (std::size_t i = 0; i < s.evaluated.size(); ++i) {
    json e = s.evaluated[i].to_json();
    e["point"] = s.evaluated_points[i];
    evaluated.push_back(std::move(e));
  }
  return json{{"best_point", s.best_index},
              {"best", s.report.to_json()},
              {"evaluated", std::move(evaluated)}};
}

}  // namespace

FileSet TrainReport::files() const {
  FileSet files;
  files["correlation.csv"] = correlation.to_csv();
  files["selection.json"] = dump(json{{"target", selection.target},
                                      {"threshold", selection.threshold},
                                      {"selected", selection.selected},
                                      {"r_with_target", selection.r_with_target},
                                      {"undefined", selection.undefined}});
  files["cv_regressor.json"] = dump(search_document(regressor_search));
  files["cv_classifier.json"] = dump(search_document(classifier_search));
  files["training_report.json"] =
      dump(json{{"training_rows", training_rows},
                {"class_counts", class_counts},
                {"warnings", warnings},
                {"classifier_training_accuracy", classifier_training_accuracy},
                {"regressor_cv_rmse", regressor_search.report.cv_score},
                {"classifier_cv_accuracy", classifier_search.report.cv_accuracy},
                {"note", "stage 2 is fitted on true NMC IPC; predictions feed it predicted IPC"}});
  if (!loo.empty()) {
    files["loo.json"] = dump(loo_document(loo));
    Table per_app{{"app", "rows", "correct", "accuracy"}, {}};
    for (const auto& r : loo) {
      per_app.rows.push_back({r.app, r.rows.size(), r.confusion.correct(), r.accuracy});
    }
    files["loo_per_app.csv"] = per_app.csv();
    files["loo_predictions.csv"] = loo_predictions(loo).csv();
  }
  return files;
}

// ---------------------------------------------------------------------------

std::vector<TimingPair> parse_timings_csv(std::string_view text) {
  std::vector<TimingPair> pairs;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("app,", 0) == 0) continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    TimingPair p;
    double dataset = 0.0;
    if (cells.size() != 4 || cells[0].empty() || !parse_double(cells[1], dataset) ||
        !parse_double(cells[2], p.perf_s) || !parse_double(cells[3], p.reference_s)) {
      throw Error(ErrorKind::Parse, "timings line " + std::to_string(line_no) +
                                        ": expected app,dataset,perf_s,pisa_s");
    }
    if (!(p.perf_s > 0.0) || !(p.reference_s > 0.0)) {
      throw Error(ErrorKind::Domain, "timings line " + std::to_string(line_no) +
                                         ": timings must be positive");
    }
    p.app = cells[0];
    p.dataset = static_cast<long long>(dataset);
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw Error(ErrorKind::EmptyInput, "timings: no rows");
  return pairs;
}

std::vector<OverheadRow> profiler_overhead(const std::vector<TimingPair>& pairs) {
  std::vector<OverheadRow> rows;
  for (const auto& p : pairs) {
    const double s = p.reference_s / p.perf_s;
    rows.push_back({p, s, s < 100.0});
  }
  return rows;
}

FileSet report(const std::vector<RunRecord>& records, const ModelBundle* bundle,
               const ReportOptions& options) {
  if (records.empty()) throw Error(ErrorKind::EmptyInput, "report: no records");
  FileSet files;

  Table roofline{{"app", "dataset_level", "threads", "role", "ai_flop_per_byte", "gflops", "region"}, {}};
  Table energy{{"app", "dataset_level", "threads", "role", "host_time_s", "host_energy_j",
                "nmc_time_s", "nmc_energy_j"},
               {}};
  Table edp{{"app", "dataset_level", "threads", "role", "host_edp_js", "nmc_edp_js", "edp_speedup",
             "label", "decision"},
            {}};
  for (const auto& r : records) {
    if (!r.derived) throw Error(ErrorKind::Internal, "report: record was not annotated");
    const DerivedFeatures& d = *r.derived;
    auto row = run_cells(r.spec);
    const double ai = d.host_flop_per_byte, perf = d.host_gflops_per_s;
    row.insert(row.end(), {ai, perf,
                           ai > 0.0 && perf > 0.0
                               ? json(std::string(to_string(
                                     roofline_classify(r.spec.app, ai, perf, options.roofline).region)))
                               : json("undefined")});
    roofline.rows.push_back(std::move(row));

    row = run_cells(r.spec);
    row.insert(row.end(), {r.host.wall_time_s, d.host_total_energy_j,
                           d.nmc_total_time_ns ? json(*d.nmc_total_time_ns * 1e-9) : json(nullptr),
                           d.nmc_trace_energy_pj ? json(*d.nmc_trace_energy_pj * 1e-12) : json(nullptr)});
    energy.rows.push_back(std::move(row));

    row = run_cells(r.spec);
    row.insert(row.end(), {d.host_edp_js, opt(d.nmc_edp_js), opt(d.edp_speedup),
                           r.label ? json(std::string(to_string(*r.label))) : json(nullptr),
                           r.label ? json(std::string(decision_text(*r.label))) : json(nullptr)});
    edp.rows.push_back(std::move(row));
  }
  add_table(files, "roofline", roofline, json{{"machine", to_json(options.roofline)}});
  add_table(files, "energy_time", energy);
  add_table(files, "edp_speedup", edp,
            json{{"labels", "yes: speedup > 2, maybe: 1 < speedup <= 2, no: speedup <= 1"},
                 {"maybe", "user decision"}});

  if (bundle) {
    std::vector<const RunRecord*> scored;
    for (const auto& r : records) {
      if (r.label && r.spec.role == RunRole::test) scored.push_back(&r);
    }
    const bool test_rows = !scored.empty();
    if (!test_rows) {
      for (const auto& r : records) {
        if (r.label) scored.push_back(&r);
      }
    }
    if (!scored.empty()) {
      Table probs{{"app", "dataset_level", "threads", "role", "actual", "predicted", "p_yes",
                   "p_maybe", "p_no", "predicted_ipc", "decision"},
                  {}};
      std::vector<OffloadLabel> predicted, actual;
      std::map<std::string, std::pair<std::vector<OffloadLabel>, std::vector<OffloadLabel>>> by_app;
      std::vector<std::string> app_order;
      for (const RunRecord* r : scored) {
        const Prediction p = predict_offload(*bundle, *r);
        predicted.push_back(p.label);
        actual.push_back(*r->label);
        if (!by_app.count(r->spec.app)) app_order.push_back(r->spec.app);
        by_app[r->spec.app].first.push_back(p.label);
        by_app[r->spec.app].second.push_back(*r->label);
        auto row = run_cells(r->spec);
        row.insert(row.end(), {std::string(to_string(*r->label)), std::string(to_string(p.label)),
                               p.probabilities[0], p.probabilities[1], p.probabilities[2],
                               p.predicted_ipc, std::string(decision_text(p.label))});
        probs.rows.push_back(std::move(row));
      }
      const ConfusionMatrix cm = confusion(predicted, actual);
      files["confusion.csv"] = "# rows=actual, columns=predicted\n" + cm.to_csv();
      files["confusion.json"] = dump(cm.to_json());
      add_table(files, "probabilities", probs);

      Table per_app{{"app", "rows", "correct", "accuracy"}, {}};
      std::vector<double> app_acc;
      for (const auto& app : app_order) {
        const auto& [p, a] = by_app[app];
        const double acc = accuracy(p, a);
        app_acc.push_back(acc);
        per_app.rows.push_back({app, p.size(), confusion(p, a).correct(), acc});
      }
      add_table(files, "per_app_accuracy", per_app,
                json{{"rows_scored", test_rows ? "test" : "all labeled"},
                     {"mean_app_accuracy", mean_score(app_acc)},
                     {"row_accuracy", cm.accuracy()},
                     {"model_hash", bundle_hash(*bundle)}});
    }
  }

  if (!options.timings.empty()) {
    Table overhead{{"app", "dataset", "perf_s", "pisa_s", "speedup", "below_100x"}, {}};
    for (const auto& row : profiler_overhead(options.timings)) {
      overhead.rows.push_back({row.pair.app, row.pair.dataset, row.pair.perf_s,
                               row.pair.reference_s, row.speedup, row.below_two_orders});
    }
    add_table(files, "profiler_overhead", overhead,
              json{{"speedup", "pisa_s / perf_s"}, {"flag", "below_100x marks ratios under 10^2"}});
  }
  return files;
}

}  // namespace nmpo
