#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "nmpo/rng.hpp"

namespace nmpo {

enum class ForestMode { regression, classification };

std::string_view to_string(ForestMode mode);

/// Number of features sampled at each node.
struct MaxFeatures {
  enum class Kind { automatic, sqrt, third, all, fixed };
  Kind kind = Kind::automatic;
  int k = 0;  // only for Kind::fixed

  /// automatic: sqrt(p) for classification, p/3 for regression. Always in
  /// [1, p].
  int resolve(int n_features, ForestMode mode) const;

  std::string to_string() const;
  static MaxFeatures parse(std::string_view text);

  bool operator==(const MaxFeatures&) const = default;
};

struct Hyperparams {
  int n_estimators = 100;
  MaxFeatures max_features;
  std::optional<int> max_depth;  // nullopt: unbounded
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  /// Throws ErrorKind::Config.
  void validate() const;

  bool operator==(const Hyperparams&) const = default;
};

nlohmann::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

/// Training responses: continuous values or class indices in [0, n_classes).
struct Targets {
  ForestMode mode = ForestMode::regression;
  Eigen::VectorXd values;
  std::vector<int> classes;
  int n_classes = 0;

  static Targets regression(Eigen::VectorXd values);
  static Targets classification(std::vector<int> classes, int n_classes);

  Eigen::Index size() const {
    return mode == ForestMode::regression ? values.size()
                                          : static_cast<Eigen::Index>(classes.size());
  }
  /// Throws ErrorKind::Data for non-finite values or out-of-range classes.
  void validate() const;
};

/// A row of a (column-major) feature matrix, or any row vector.
using RowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// Internal nodes send `x[feature] <= threshold` left. Leaves have
/// feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;             // regression leaf: mean target
  std::vector<int> class_counts;  // classification: per-class counts
  int samples = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class DecisionTree {
 public:
  ForestMode mode = ForestMode::regression;
  int n_features = 0;
  int n_classes = 0;
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(const RowRef& row) const;
  double predict_value(const RowRef& row) const;
  /// Majority class of the leaf; ties go to the lowest class index.
  int predict_class(const RowRef& row) const;
  int depth() const;
  int leaf_count() const;

  bool operator==(const DecisionTree&) const = default;
};

/// Greedy CART over the multiset `rows` of X (duplicates allowed).
DecisionTree fit_tree(const Eigen::MatrixXd& X, const Targets& y,
                      std::span<const std::size_t> rows, const Hyperparams& hp, Rng& rng);
DecisionTree fit_tree(const Eigen::MatrixXd& X, const Targets& y, const Hyperparams& hp,
                      Rng& rng);

struct RandomForestModel {
  static constexpr int kFormatVersion = 1;

  ForestMode mode = ForestMode::regression;
  Hyperparams hp;
  std::vector<std::uint64_t> tree_seeds;
  std::vector<DecisionTree> trees;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_labels;  // priority order for vote ties

  int n_features() const { return static_cast<int>(feature_names.size()); }

  bool operator==(const RandomForestModel&) const = default;
};

/// Seed of tree `index`: derive_seed(hp.seed, index).
std::uint64_t tree_seed(std::uint64_t forest_seed, std::size_t index);

/// The bootstrap multiset drawn for a tree with generator seed `seed`. This
/// is the first use of the tree's generator in fit_forest.
std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t seed);

/// Thread cap from NMPO_THREADS (0 or unset: hardware concurrency).
unsigned default_thread_count();

struct ForestSchema {
  std::vector<std::string> feature_names;  // empty: f0, f1, ...
  std::vector<std::string> class_labels;   // classification only
};

/// Trains hp.n_estimators trees, in parallel over up to `threads` workers
/// (0: default_thread_count()). The result does not depend on `threads`.
RandomForestModel fit_forest(const Eigen::MatrixXd& X, const Targets& y, const Hyperparams& hp,
                             ForestSchema schema = {}, unsigned threads = 0);

double predict_regression(const RandomForestModel& model, const RowRef& row);
/// Per-class vote counts, indexed like model.class_labels.
std::vector<int> predict_votes(const RandomForestModel& model, const RowRef& row);
/// votes / n_estimators.
std::vector<double> predict_proba(const RandomForestModel& model, const RowRef& row);
/// argmax of the votes; ties go to the earliest class label.
int predict_class(const RandomForestModel& model, const RowRef& row);

Eigen::VectorXd predict_regression_rows(const RandomForestModel& model, const Eigen::MatrixXd& X);
std::vector<int> predict_class_rows(const RandomForestModel& model, const Eigen::MatrixXd& X);

nlohmann::json to_json(const RandomForestModel& model);
/// Throws ErrorKind::Version / ErrorKind::Integrity.
RandomForestModel forest_from_json(const nlohmann::json& j, const std::string& where = "forest");

std::string serialize_forest(const RandomForestModel& model);
RandomForestModel deserialize_forest(std::string_view text);

}  // namespace nmpo
