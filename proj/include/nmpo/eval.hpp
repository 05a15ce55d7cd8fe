#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "nmpo/error.hpp"
#include "nmpo/forest.hpp"
#include "nmpo/types.hpp"

namespace nmpo {

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// sqrt(sum((p - a)^2) / N).
template <typename DerivedP, typename DerivedA>
typename DerivedP::Scalar rmse(const Eigen::MatrixBase<DerivedP>& predicted,
                               const Eigen::MatrixBase<DerivedA>& actual) {
  if (predicted.size() != actual.size()) {
    throw Error(ErrorKind::Shape, "rmse: length mismatch");
  }
  if (predicted.size() == 0) throw Error(ErrorKind::Domain, "rmse: empty input");
  using Scalar = typename DerivedP::Scalar;
  return std::sqrt((predicted - actual).squaredNorm() / static_cast<Scalar>(predicted.size()));
}

/// Arithmetic mean, summed in order.
double mean_score(std::span<const double> scores);

/// Correct / total. Throws ErrorKind::Domain when empty, ErrorKind::Shape on
/// length mismatch.
template <typename T>
double accuracy(std::span<const T> predictions, std::span<const T> actuals) {
  if (predictions.size() != actuals.size()) throw Error(ErrorKind::Shape, "accuracy: length mismatch");
  if (predictions.empty()) throw Error(ErrorKind::Domain, "accuracy: no predictions");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == actuals[i];
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

inline double accuracy(const std::vector<OffloadLabel>& predictions,
                       const std::vector<OffloadLabel>& actuals) {
  return accuracy<OffloadLabel>(predictions, actuals);
}

/// Rows are ACTUAL labels, columns PREDICTED, both in yes/maybe/no order.
struct ConfusionMatrix {
  Eigen::Matrix3i counts = Eigen::Matrix3i::Zero();

  int total() const { return counts.sum(); }
  int correct() const { return counts.trace(); }
  /// trace / total (0 when empty).
  double accuracy() const;
  int at(OffloadLabel actual, OffloadLabel predicted) const {
    return counts(label_index(actual), label_index(predicted));
  }
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

ConfusionMatrix confusion(const std::vector<OffloadLabel>& predictions,
                          const std::vector<OffloadLabel>& actuals);

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct FoldAssignment {
  int k = 0;
  std::vector<int> fold;  // row -> fold id

  std::vector<std::size_t> rows_in(int f) const;
  std::vector<std::size_t> rows_not_in(int f) const;
};

/// Seeded shuffle, then a contiguous split into k folds whose sizes differ by
/// at most one (the first n % k folds are the larger ones).
FoldAssignment kfold_split(std::size_t n, int k, std::uint64_t seed);

struct CvReport {
  ForestMode mode = ForestMode::regression;
  std::vector<double> per_fold_rmse;      // regression
  double cv_score = 0.0;                  // mean of per_fold_rmse
  std::vector<double> per_fold_accuracy;  // classification
  double cv_accuracy = 0.0;               // mean of per_fold_accuracy
  Hyperparams hp;

  nlohmann::json to_json() const;
};

/// Fits on k-1 folds and scores the held-out fold, for every fold.
CvReport cross_validate(const Eigen::MatrixXd& X, const Targets& y, const Hyperparams& hp, int k,
                        std::uint64_t seed, unsigned threads = 0);

/// Cartesian hyper-parameter space. Points are enumerated lexicographically
/// with n_estimators varying slowest and bootstrap fastest.
struct SearchSpace {
  std::vector<int> n_estimators{100};
  std::vector<MaxFeatures> max_features{MaxFeatures{}};
  std::vector<std::optional<int>> max_depth{std::nullopt};
  std::vector<int> min_samples_split{2};
  std::vector<int> min_samples_leaf{1};
  std::vector<bool> bootstrap{true};

  std::size_t size() const;
  /// Point `index` of the enumeration; its forest seed is
  /// derive_seed(seed, index).
  Hyperparams at(std::size_t index, std::uint64_t seed) const;

  static SearchSpace single(const Hyperparams& hp);
  static SearchSpace from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SearchResult {
  Hyperparams best;
  CvReport report;
  std::size_t best_index = 0;
  std::vector<std::size_t> evaluated_points;  // in evaluation order
  std::vector<CvReport> evaluated;
};

/// Every point, scored by k-fold CV on the same folds. Regression keeps the
/// lowest cv_score, classification the highest cv_accuracy; ties keep the
/// first point evaluated.
SearchResult grid_search(const Eigen::MatrixXd& X, const Targets& y, const SearchSpace& space,
                         int k, std::uint64_t seed, unsigned threads = 0);

/// n_draws uniform draws (with replacement) of point indices, otherwise as
/// grid_search.
SearchResult random_search(const Eigen::MatrixXd& X, const Targets& y, const SearchSpace& space,
                           int n_draws, int k, std::uint64_t seed, unsigned threads = 0);

/// The point indices random_search evaluates.
std::vector<std::size_t> random_search_draws(std::size_t space_size, int n_draws,
                                             std::uint64_t seed);

}  // namespace nmpo
