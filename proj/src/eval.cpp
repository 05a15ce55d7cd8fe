#include "nmpo/eval.hpp"

#include <numeric>

#include "nmpo/io.hpp"
#include "nmpo/rng.hpp"

namespace nmpo {

using nlohmann::json;

double mean_score(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorKind::Domain, "mean of no scores");
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

double ConfusionMatrix::accuracy() const {
  const int n = total();
  return n > 0 ? static_cast<double>(correct()) / static_cast<double>(n) : 0.0;
}

std::string ConfusionMatrix::to_csv() const {
  std::string out = "actual\\predicted,yes,maybe,no\n";
  for (OffloadLabel actual : kAllLabels) {
    out += to_string(actual);
    for (OffloadLabel predicted : kAllLabels) out += "," + std::to_string(at(actual, predicted));
    out += '\n';
  }
  return out;
}

json ConfusionMatrix::to_json() const {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({counts(i, 0), counts(i, 1), counts(i, 2)});
  return json{{"orientation", "rows=actual, columns=predicted"},
              {"labels", {"yes", "maybe", "no"}},
              {"counts", std::move(rows)},
              {"total", total()},
              {"accuracy", accuracy()}};
}

ConfusionMatrix confusion(const std::vector<OffloadLabel>& predictions,
                          const std::vector<OffloadLabel>& actuals) {
  if (predictions.size() != actuals.size()) throw Error(ErrorKind::Shape, "confusion: length mismatch");
  if (predictions.empty()) throw Error(ErrorKind::Domain, "confusion: no predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ++cm.counts(label_index(actuals[i]), label_index(predictions[i]));
  }
  return cm;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FoldAssignment::rows_in(int f) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] == f) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldAssignment::rows_not_in(int f) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] != f) rows.push_back(i);
  }
  return rows;
}

FoldAssignment kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorKind::Config, "k-fold needs 2 <= k <= n (k=" + std::to_string(k) +
                                       ", n=" + std::to_string(n) + ")");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  FoldAssignment folds{k, std::vector<int>(n, 0)};
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) folds.fold[order[pos++]] = f;
  }
  return folds;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Targets take_targets(const Targets& y, const std::vector<std::size_t>& rows) {
  if (y.mode == ForestMode::regression) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      v(static_cast<Eigen::Index>(i)) = y.values(static_cast<Eigen::Index>(rows[i]));
    }
    return Targets::regression(std::move(v));
  }
  std::vector<int> c(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) c[i] = y.classes[rows[i]];
  return Targets::classification(std::move(c), y.n_classes);
}

json hp_or_null(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

CvReport cross_validate(const Eigen::MatrixXd& X, const Targets& y, const Hyperparams& hp, int k,
                        std::uint64_t seed, unsigned threads) {
  hp.validate();
  if (y.size() != X.rows()) throw Error(ErrorKind::Shape, "targets and matrix row counts differ");
  const FoldAssignment folds = kfold_split(static_cast<std::size_t>(X.rows()), k, seed);
  CvReport report;
  report.mode = y.mode;
  report.hp = hp;
  for (int f = 0; f < k; ++f) {
    try {
      const auto train = folds.rows_not_in(f);
      const auto test = folds.rows_in(f);
      const auto model = fit_forest(take_rows(X, train), take_targets(y, train), hp, {}, threads);
      const Eigen::MatrixXd X_test = take_rows(X, test);
      if (y.mode == ForestMode::regression) {
        const Eigen::VectorXd predicted = predict_regression_rows(model, X_test);
        report.per_fold_rmse.push_back(rmse(predicted, take_targets(y, test).values));
      } else {
        const auto predicted = predict_class_rows(model, X_test);
        const auto actual = take_targets(y, test).classes;
        report.per_fold_accuracy.push_back(accuracy<int>(predicted, actual));
      }
    } catch (const Error& e) {
      rethrow_with_context(e, "fold " + std::to_string(f));
    }
  }
  if (y.mode == ForestMode::regression) {
    report.cv_score = mean_score(report.per_fold_rmse);
  } else {
    report.cv_accuracy = mean_score(report.per_fold_accuracy);
  }
  return report;
}

json CvReport::to_json() const {
  json j{{"mode", std::string(nmpo::to_string(mode))}, {"hyperparams", nmpo::to_json(hp)}};
  if (mode == ForestMode::regression) {
    j["per_fold_rmse"] = per_fold_rmse;
    j["cv_score"] = cv_score;
  } else {
    j["per_fold_accuracy"] = per_fold_accuracy;
    j["cv_accuracy"] = cv_accuracy;
  }
  return j;
}

// ---------------------------------------------------------------------------

std::size_t SearchSpace::size() const {
  return n_estimators.size() * max_features.size() * max_depth.size() *
         min_samples_split.size() * min_samples_leaf.size() * bootstrap.size();
}

Hyperparams SearchSpace::at(std::size_t index, std::uint64_t seed) const {
  if (index >= size()) throw Error(ErrorKind::Config, "search point out of range");
  Hyperparams hp;
  std::size_t rest = index;
  const auto pick = [&rest](const auto& values) {
    const auto& v = values[rest % values.size()];
    rest /= values.size();
    return v;
  };
  // Fastest-varying dimension first.
  hp.bootstrap = pick(bootstrap);
  hp.min_samples_leaf = pick(min_samples_leaf);
  hp.min_samples_split = pick(min_samples_split);
  hp.max_depth = pick(max_depth);
  hp.max_features = pick(max_features);
  hp.n_estimators = pick(n_estimators);
  hp.seed = derive_seed(seed, index);
  return hp;
}

SearchSpace SearchSpace::single(const Hyperparams& hp) {
  SearchSpace s;
  s.n_estimators = {hp.n_estimators};
  s.max_features = {hp.max_features};
  s.max_depth = {hp.max_depth};
  s.min_samples_split = {hp.min_samples_split};
  s.min_samples_leaf = {hp.min_samples_leaf};
  s.bootstrap = {hp.bootstrap};
  return s;
}

SearchSpace SearchSpace::from_json(const json& j) {
  SearchSpace s;
  if (!j.is_object()) throw Error(ErrorKind::Config, "search space must be an object");
  try {
    if (j.contains("n_estimators")) s.n_estimators = j.at("n_estimators").get<std::vector<int>>();
    if (j.contains("max_features")) {
      s.max_features.clear();
      for (const auto& v : j.at("max_features")) {
        s.max_features.push_back(v.is_number_integer()
                                     ? MaxFeatures{MaxFeatures::Kind::fixed, v.get<int>()}
                                     : MaxFeatures::parse(v.get<std::string>()));
      }
    }
    if (j.contains("max_depth")) {
      s.max_depth.clear();
      for (const auto& v : j.at("max_depth")) {
        s.max_depth.push_back(v.is_null() ? std::nullopt : std::optional<int>(v.get<int>()));
      }
    }
    if (j.contains("min_samples_split")) {
      s.min_samples_split = j.at("min_samples_split").get<std::vector<int>>();
    }
    if (j.contains("min_samples_leaf")) {
      s.min_samples_leaf = j.at("min_samples_leaf").get<std::vector<int>>();
    }
    if (j.contains("bootstrap")) s.bootstrap = j.at("bootstrap").get<std::vector<bool>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("invalid search space: ") + e.what());
  }
  if (s.size() == 0) throw Error(ErrorKind::Config, "search space is empty");
  for (std::size_t i = 0; i < s.size(); ++i) s.at(i, 0).validate();
  return s;
}

json SearchSpace::to_json() const {
  json mf = json::array(), md = json::array();
  for (const auto& m : max_features) mf.push_back(m.to_string());
  for (const auto& d : max_depth) md.push_back(hp_or_null(d));
  return json{{"n_estimators", n_estimators},  {"max_features", mf},
              {"max_depth", md},                {"min_samples_split", min_samples_split},
              {"min_samples_leaf", min_samples_leaf}, {"bootstrap", bootstrap}};
}

namespace {

bool better(const CvReport& candidate, const CvReport& incumbent) {
  if (candidate.mode == ForestMode::regression) return candidate.cv_score < incumbent.cv_score;
  return candidate.cv_accuracy > incumbent.cv_accuracy;
}

SearchResult search_points(const Eigen::MatrixXd& X, const Targets& y, const SearchSpace& space,
                           const std::vector<std::size_t>& points, int k, std::uint64_t seed,
                           unsigned threads) {
  SearchResult result;
  for (std::size_t index : points) {
    const Hyperparams hp = space.at(index, seed);
    CvReport report;
    try {
      report = cross_validate(X, y, hp, k, seed, threads);
    } catch (const Error& e) {
      rethrow_with_context(e, "search point " + std::to_string(index));
    }
    if (result.evaluated.empty() || better(report, result.report)) {
      result.best = hp;
      result.report = report;
      result.best_index = index;
    }
    result.evaluated_points.push_back(index);
    result.evaluated.push_back(std::move(report));
  }
  return result;
}

}  // namespace

SearchResult grid_search(const Eigen::MatrixXd& X, const Targets& y, const SearchSpace& space,
                         int k, std::uint64_t seed, unsigned threads) {
  if (space.size() == 0) throw Error(ErrorKind::Config, "search space is empty");
  std::vector<std::size_t> points(space.size());
  std::iota(points.begin(), points.end(), std::size_t{0});
  return search_points(X, y, space, points, k, seed, threads);
}

std::vector<std::size_t> random_search_draws(std::size_t space_size, int n_draws,
                                             std::uint64_t seed) {
  if (space_size == 0) throw Error(ErrorKind::Config, "search space is empty");
  if (n_draws < 1) throw Error(ErrorKind::Config, "random search needs n_draws >= 1");
  Rng rng(derive_seed(seed, 0x7261'6e64ULL));
  std::vector<std::size_t> points(static_cast<std::size_t>(n_draws));
  for (auto& p : points) p = static_cast<std::size_t>(rng.below(space_size));
  return points;
}

SearchResult random_search(const Eigen::MatrixXd& X, const Targets& y, const SearchSpace& space,
                           int n_draws, int k, std::uint64_t seed, unsigned threads) {
  return search_points(X, y, space, random_search_draws(space.size(), n_draws, seed), k, seed,
                       threads);
}

}  // namespace nmpo
