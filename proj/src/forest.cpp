#include "nmpo/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "nmpo/error.hpp"

namespace nmpo {

std::string_view to_string(ForestMode mode) {
  return mode == ForestMode::regression ? "regression" : "classification";
}

int MaxFeatures::resolve(int p, ForestMode mode) const {
  int m = p;
  switch (kind) {
    case Kind::automatic:
      m = mode == ForestMode::classification
              ? static_cast<int>(std::floor(std::sqrt(static_cast<double>(p))))
              : p / 3;
      break;
    case Kind::sqrt: m = static_cast<int>(std::floor(std::sqrt(static_cast<double>(p)))); break;
    case Kind::third: m = p / 3; break;
    case Kind::all: m = p; break;
    case Kind::fixed: m = k; break;
  }
  return std::clamp(m, 1, std::max(p, 1));
}

std::string MaxFeatures::to_string() const {
  switch (kind) {
    case Kind::automatic: return "auto";
    case Kind::sqrt: return "sqrt";
    case Kind::third: return "third";
    case Kind::all: return "all";
    case Kind::fixed: return std::to_string(k);
  }
  return "auto";
}

MaxFeatures MaxFeatures::parse(std::string_view text) {
  if (text == "auto") return {Kind::automatic, 0};
  if (text == "sqrt") return {Kind::sqrt, 0};
  if (text == "third") return {Kind::third, 0};
  if (text == "all") return {Kind::all, 0};
  int k = 0;
  for (char c : text) {
    if (c < '0' || c > '9' || k > 1'000'000) {
      throw Error(ErrorKind::Config, "invalid max_features '" + std::string(text) + "'");
    }
    k = k * 10 + (c - '0');
  }
  if (text.empty() || k < 1) {
    throw Error(ErrorKind::Config, "invalid max_features '" + std::string(text) + "'");
  }
  return {Kind::fixed, k};
}

void Hyperparams::validate() const {
  if (n_estimators < 1) throw Error(ErrorKind::Config, "n_estimators must be >= 1");
  if (max_depth && *max_depth < 1) throw Error(ErrorKind::Config, "max_depth must be >= 1");
  if (min_samples_split < 2) throw Error(ErrorKind::Config, "min_samples_split must be >= 2");
  if (min_samples_leaf < 1) throw Error(ErrorKind::Config, "min_samples_leaf must be >= 1");
  if (max_features.kind == MaxFeatures::Kind::fixed && max_features.k < 1) {
    throw Error(ErrorKind::Config, "max_features must be >= 1");
  }
}

Targets Targets::regression(Eigen::VectorXd values) {
  Targets t;
  t.mode = ForestMode::regression;
  t.values = std::move(values);
  return t;
}

Targets Targets::classification(std::vector<int> classes, int n_classes) {
  Targets t;
  t.mode = ForestMode::classification;
  t.classes = std::move(classes);
  t.n_classes = n_classes;
  return t;
}

void Targets::validate() const {
  if (mode == ForestMode::regression) {
    if (!values.allFinite()) throw Error(ErrorKind::Data, "non-finite regression target");
    return;
  }
  if (n_classes < 1) throw Error(ErrorKind::Data, "classification needs n_classes >= 1");
  for (int c : classes) {
    if (c < 0 || c >= n_classes) throw Error(ErrorKind::Data, "class index out of range");
  }
}

// ---------------------------------------------------------------------------
// DecisionTree
// ---------------------------------------------------------------------------

const TreeNode& DecisionTree::leaf_for(const RowRef& row) const {
  if (row.size() != n_features) {
    throw Error(ErrorKind::Shape, "row has " + std::to_string(row.size()) +
                                      " features, tree expects " + std::to_string(n_features));
  }
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    node = &nodes[static_cast<std::size_t>(row(node->feature) <= node->threshold ? node->left
                                                                                  : node->right)];
  }
  return *node;
}

double DecisionTree::predict_value(const RowRef& row) const { return leaf_for(row).value; }

int DecisionTree::predict_class(const RowRef& row) const {
  const auto& counts = leaf_for(row).class_counts;
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

int DecisionTree::depth() const {
  std::vector<int> depth(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, depth[i]);
    if (!nodes[i].is_leaf()) {
      depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return deepest;
}

int DecisionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(),
                                        [](const TreeNode& n) { return n.is_leaf(); }));
}

// ---------------------------------------------------------------------------
// CART
// ---------------------------------------------------------------------------

namespace {

struct Candidate {
  double impurity;
  int feature;
  double threshold;
};

double midpoint(double a, double b) {
  const double m = (a + b) / 2.0;
  return m < b ? m : a;
}

// Lowest weighted impurity; near-ties (1e-10 relative) go to the lowest
// feature index, then the lowest threshold.
Candidate select_candidate(const std::vector<Candidate>& candidates) {
  double best = candidates.front().impurity;
  for (const auto& c : candidates) best = std::min(best, c.impurity);
  const double tol = 1e-10 * std::max(1.0, std::abs(best));
  const Candidate* pick = nullptr;
  for (const auto& c : candidates) {
    if (c.impurity > best + tol) continue;
    if (!pick || c.feature < pick->feature ||
        (c.feature == pick->feature && c.threshold < pick->threshold)) {
      pick = &c;
    }
  }
  return *pick;
}

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Targets& y, const Hyperparams& hp, Rng& rng)
      : X_(X), y_(y), hp_(hp), rng_(rng),
        n_features_(static_cast<int>(X.cols())),
        max_features_(hp.max_features.resolve(static_cast<int>(X.cols()), y.mode)) {
    tree_.mode = y.mode;
    tree_.n_features = n_features_;
    tree_.n_classes = y.mode == ForestMode::classification ? y.n_classes : 0;
  }

  DecisionTree build(std::vector<std::size_t> rows) {
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(make_leaf(rows));

    const bool depth_left = !hp_.max_depth || depth < *hp_.max_depth;
    if (!depth_left || static_cast<int>(rows.size()) < hp_.min_samples_split || is_pure(rows)) {
      return id;
    }
    const auto best = best_split(rows);
    if (!best) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      (X_(static_cast<Eigen::Index>(r), best->feature) <= best->threshold ? left : right)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best->feature;
    node.threshold = best->threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  TreeNode make_leaf(const std::vector<std::size_t>& rows) const {
    TreeNode leaf;
    leaf.samples = static_cast<int>(rows.size());
    if (y_.mode == ForestMode::regression) {
      double sum = 0.0;
      for (std::size_t r : rows) sum += y_.values(static_cast<Eigen::Index>(r));
      leaf.value = sum / static_cast<double>(rows.size());
    } else {
      leaf.class_counts.assign(static_cast<std::size_t>(y_.n_classes), 0);
      for (std::size_t r : rows) ++leaf.class_counts[static_cast<std::size_t>(y_.classes[r])];
    }
    return leaf;
  }

  bool is_pure(const std::vector<std::size_t>& rows) const {
    if (y_.mode == ForestMode::regression) {
      const double first = y_.values(static_cast<Eigen::Index>(rows.front()));
      return std::all_of(rows.begin(), rows.end(), [&](std::size_t r) {
        return y_.values(static_cast<Eigen::Index>(r)) == first;
      });
    }
    const int first = y_.classes[rows.front()];
    return std::all_of(rows.begin(), rows.end(),
                       [&](std::size_t r) { return y_.classes[r] == first; });
  }

  // Features are visited in a random order until max_features of them have
  // been found non-constant within the node.
  std::optional<Candidate> best_split(const std::vector<std::size_t>& rows) {
    std::vector<int> order(static_cast<std::size_t>(n_features_));
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(std::span<int>(order));

    std::vector<Candidate> candidates;
    std::vector<std::pair<double, std::size_t>> sorted(rows.size());
    int visited = 0;
    for (int f : order) {
      if (visited >= max_features_) break;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        sorted[i] = {X_(static_cast<Eigen::Index>(rows[i]), f), rows[i]};
      }
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;
      ++visited;
      scan_feature(f, sorted, candidates);
    }
    if (candidates.empty()) return std::nullopt;
    return select_candidate(candidates);
  }

  void scan_feature(int f, const std::vector<std::pair<double, std::size_t>>& sorted,
                    std::vector<Candidate>& out) const {
    const std::size_t n = sorted.size();
    const auto min_leaf = static_cast<std::size_t>(hp_.min_samples_leaf);
    const double nd = static_cast<double>(n);
    if (y_.mode == ForestMode::regression) {
      // Centering on the node mean keeps the running sums well conditioned.
      double mean = 0.0;
      for (const auto& [x, r] : sorted) mean += y_.values(static_cast<Eigen::Index>(r));
      mean /= nd;
      double total = 0.0, total_sq = 0.0;
      for (const auto& [x, r] : sorted) {
        const double v = y_.values(static_cast<Eigen::Index>(r)) - mean;
        total += v;
        total_sq += v * v;
      }
      double left = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double v = y_.values(static_cast<Eigen::Index>(sorted[i].second)) - mean;
        left += v;
        left_sq += v * v;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right = total - left, right_sq = total_sq - left_sq;
        const double sse_l = std::max(0.0, left_sq - left * left / static_cast<double>(nl));
        const double sse_r = std::max(0.0, right_sq - right * right / static_cast<double>(nr));
        out.push_back({(sse_l + sse_r) / nd, f, midpoint(sorted[i].first, sorted[i + 1].first)});
      }
      return;
    }
    const auto k = static_cast<std::size_t>(y_.n_classes);
    std::vector<double> total(k, 0.0), left(k, 0.0);
    for (const auto& [x, r] : sorted) total[static_cast<std::size_t>(y_.classes[r])] += 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left[static_cast<std::size_t>(y_.classes[sorted[i].second])] += 1.0;
      if (sorted[i].first == sorted[i + 1].first) continue;
      const std::size_t nl = i + 1, nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      double sq_l = 0.0, sq_r = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        sq_l += left[c] * left[c];
        const double rc = total[c] - left[c];
        sq_r += rc * rc;
      }
      const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
      // n_l * gini_l + n_r * gini_r, divided by n.
      const double weighted = (dl - sq_l / dl) + (dr - sq_r / dr);
      out.push_back({weighted / nd, f, midpoint(sorted[i].first, sorted[i + 1].first)});
    }
  }

  const Eigen::MatrixXd& X_;
  const Targets& y_;
  const Hyperparams& hp_;
  Rng& rng_;
  int n_features_;
  int max_features_;
  DecisionTree tree_;

};

}  // namespace

DecisionTree fit_tree(const Eigen::MatrixXd& X, const Targets& y,
                      std::span<const std::size_t> rows, const Hyperparams& hp, Rng& rng) {
  hp.validate();
  y.validate();
  if (rows.empty() || X.rows() == 0) throw Error(ErrorKind::Fit, "cannot fit a tree on zero rows");
  if (X.cols() == 0) throw Error(ErrorKind::Fit, "cannot fit a tree on zero features");
  if (y.size() != X.rows()) {
    throw Error(ErrorKind::Shape, "targets have " + std::to_string(y.size()) + " rows, matrix " +
                                      std::to_string(X.rows()));
  }
  if (!X.allFinite()) throw Error(ErrorKind::Data, "feature matrix has non-finite cells");
  for (std::size_t r : rows) {
    if (r >= static_cast<std::size_t>(X.rows())) throw Error(ErrorKind::Shape, "row index out of range");
  }
  return TreeBuilder(X, y, hp, rng).build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

DecisionTree fit_tree(const Eigen::MatrixXd& X, const Targets& y, const Hyperparams& hp,
                      Rng& rng) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return fit_tree(X, y, rows, hp, rng);
}

// ---------------------------------------------------------------------------
// Forest
// ---------------------------------------------------------------------------

std::uint64_t tree_seed(std::uint64_t forest_seed, std::size_t index) {
  return derive_seed(forest_seed, index);
}

namespace {

std::vector<std::size_t> draw_bootstrap(std::size_t n, Rng& rng) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
  return rows;
}

}  // namespace

std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return draw_bootstrap(n, rng);
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("NMPO_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RandomForestModel fit_forest(const Eigen::MatrixXd& X, const Targets& y, const Hyperparams& hp,
                             ForestSchema schema, unsigned threads) {
  hp.validate();
  y.validate();
  if (X.rows() == 0) throw Error(ErrorKind::Fit, "cannot fit a forest on zero rows");
  if (y.size() != X.rows()) throw Error(ErrorKind::Shape, "targets and matrix row counts differ");

  RandomForestModel model;
  model.mode = y.mode;
  model.hp = hp;
  model.feature_names = std::move(schema.feature_names);
  if (model.feature_names.empty()) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) model.feature_names.push_back("f" + std::to_string(j));
  }
  if (static_cast<Eigen::Index>(model.feature_names.size()) != X.cols()) {
    throw Error(ErrorKind::Shape, "feature name count does not match matrix columns");
  }
  if (y.mode == ForestMode::classification) {
    model.class_labels = std::move(schema.class_labels);
    if (model.class_labels.empty()) {
      for (int c = 0; c < y.n_classes; ++c) model.class_labels.push_back(std::to_string(c));
    }
    if (static_cast<int>(model.class_labels.size()) != y.n_classes) {
      throw Error(ErrorKind::Shape, "class label count does not match n_classes");
    }
  }

  const auto n_trees = static_cast<std::size_t>(hp.n_estimators);
  const auto n = static_cast<std::size_t>(X.rows());
  model.tree_seeds.resize(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) model.tree_seeds[t] = tree_seed(hp.seed, t);
  model.trees.resize(n_trees);

  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});

  const auto train_one = [&](std::size_t t) {
    Rng rng(model.tree_seeds[t]);
    if (hp.bootstrap) {
      const auto rows = draw_bootstrap(n, rng);
      model.trees[t] = fit_tree(X, y, rows, hp, rng);
    } else {
      model.trees[t] = fit_tree(X, y, all_rows, hp, rng);
    }
  };

  if (threads == 0) threads = default_thread_count();
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(threads, n_trees));
  if (workers <= 1) {
    for (std::size_t t = 0; t < n_trees; ++t) train_one(t);
    return model;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < n_trees; t = next++) {
          try {
            train_one(t);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return model;
}

double predict_regression(const RandomForestModel& model, const RowRef& row) {
  if (model.mode != ForestMode::regression) {
    throw Error(ErrorKind::Shape, "predict_regression on a classification model");
  }
  double sum = 0.0;
  for (const auto& tree : model.trees) sum += tree.predict_value(row);
  return sum / static_cast<double>(model.trees.size());
}

std::vector<int> predict_votes(const RandomForestModel& model, const RowRef& row) {
  if (model.mode != ForestMode::classification) {
    throw Error(ErrorKind::Shape, "class prediction on a regression model");
  }
  std::vector<int> votes(model.class_labels.size(), 0);
  for (const auto& tree : model.trees) ++votes[static_cast<std::size_t>(tree.predict_class(row))];
  return votes;
}

std::vector<double> predict_proba(const RandomForestModel& model, const RowRef& row) {
  const auto votes = predict_votes(model, row);
  std::vector<double> proba(votes.size());
  const double n = static_cast<double>(model.trees.size());
  for (std::size_t c = 0; c < votes.size(); ++c) proba[c] = static_cast<double>(votes[c]) / n;
  return proba;
}

int predict_class(const RandomForestModel& model, const RowRef& row) {
  const auto votes = predict_votes(model, row);
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

Eigen::VectorXd predict_regression_rows(const RandomForestModel& model, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict_regression(model, X.row(i));
  return out;
}

std::vector<int> predict_class_rows(const RandomForestModel& model, const Eigen::MatrixXd& X) {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = predict_class(model, X.row(i));
  }
  return out;
}

}  // namespace nmpo
