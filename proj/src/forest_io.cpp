#include <set>

#include "nmpo/error.hpp"
#include "nmpo/forest.hpp"

namespace nmpo {

using nlohmann::json;

namespace {

[[noreturn]] void corrupt(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Integrity, where + ": " + what);
}

const json& field(const json& j, const char* name, const std::string& where) {
  if (!j.is_object()) corrupt(where, "expected an object");
  const auto it = j.find(name);
  if (it == j.end()) corrupt(where, std::string("missing '") + name + "'");
  return *it;
}

template <typename T>
T get_as(const json& j, const char* name, const std::string& where) {
  const json& v = field(j, name, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    corrupt(where + "/" + name, "wrong type");
  }
}

template <typename T>
std::vector<T> get_array(const json& j, const char* name, const std::string& where) {
  const json& v = field(j, name, where);
  if (!v.is_array()) corrupt(where + "/" + name, "expected an array");
  try {
    return v.get<std::vector<T>>();
  } catch (const json::exception&) {
    corrupt(where + "/" + name, "wrong element type");
  }
}

}  // namespace

json to_json(const Hyperparams& hp) {
  return json{{"n_estimators", hp.n_estimators},
              {"max_features", hp.max_features.to_string()},
              {"max_depth", hp.max_depth ? json(*hp.max_depth) : json(nullptr)},
              {"min_samples_split", hp.min_samples_split},
              {"min_samples_leaf", hp.min_samples_leaf},
              {"bootstrap", hp.bootstrap},
              {"seed", hp.seed}};
}

Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams hp;
  if (!j.is_object()) throw Error(ErrorKind::Config, "hyper-parameters must be an object");
  try {
    if (j.contains("n_estimators")) hp.n_estimators = j.at("n_estimators").get<int>();
    if (j.contains("max_features")) {
      const auto& mf = j.at("max_features");
      hp.max_features = mf.is_number_integer()
                            ? MaxFeatures{MaxFeatures::Kind::fixed, mf.get<int>()}
                            : MaxFeatures::parse(mf.get<std::string>());
    }
    if (j.contains("max_depth") && !j.at("max_depth").is_null()) {
      hp.max_depth = j.at("max_depth").get<int>();
    }
    if (j.contains("min_samples_split")) hp.min_samples_split = j.at("min_samples_split").get<int>();
    if (j.contains("min_samples_leaf")) hp.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    if (j.contains("bootstrap")) hp.bootstrap = j.at("bootstrap").get<bool>();
    if (j.contains("seed")) hp.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("invalid hyper-parameters: ") + e.what());
  }
  hp.validate();
  return hp;
}

json to_json(const RandomForestModel& model) {
  json trees = json::array();
  for (const auto& tree : model.trees) {
    json feature = json::array(), threshold = json::array(), left = json::array(),
         right = json::array(), value = json::array(), samples = json::array(),
         counts = json::array();
    for (const auto& node : tree.nodes) {
      feature.push_back(node.feature);
      threshold.push_back(node.threshold);
      left.push_back(node.left);
      right.push_back(node.right);
      value.push_back(node.value);
      samples.push_back(node.samples);
      counts.push_back(node.class_counts);
    }
    trees.push_back(json{{"n_features", tree.n_features},
                         {"n_classes", tree.n_classes},
                         {"feature", std::move(feature)},
                         {"threshold", std::move(threshold)},
                         {"left", std::move(left)},
                         {"right", std::move(right)},
                         {"value", std::move(value)},
                         {"samples", std::move(samples)},
                         {"class_counts", std::move(counts)}});
  }
  return json{{"format", "nmpo-forest"},
              {"format_version", RandomForestModel::kFormatVersion},
              {"mode", std::string(to_string(model.mode))},
              {"hyperparams", to_json(model.hp)},
              {"feature_names", model.feature_names},
              {"class_labels", model.class_labels},
              {"tree_seeds", model.tree_seeds},
              {"trees", std::move(trees)}};
}

RandomForestModel forest_from_json(const json& j, const std::string& where) {
  const json& version = field(j, "format_version", where);
  if (!version.is_number_integer() || version.get<long long>() != RandomForestModel::kFormatVersion) {
    throw Error(ErrorKind::Version, where + ": unsupported format_version " + version.dump());
  }
  if (get_as<std::string>(j, "format", where) != "nmpo-forest") {
    corrupt(where, "not a forest document");
  }
  RandomForestModel model;
  const auto mode = get_as<std::string>(j, "mode", where);
  if (mode == "regression") {
    model.mode = ForestMode::regression;
  } else if (mode == "classification") {
    model.mode = ForestMode::classification;
  } else {
    corrupt(where + "/mode", "unknown mode '" + mode + "'");
  }
  try {
    model.hp = hyperparams_from_json(field(j, "hyperparams", where));
  } catch (const Error& e) {
    corrupt(where + "/hyperparams", e.what());
  }
  model.feature_names = get_array<std::string>(j, "feature_names", where);
  model.class_labels = get_array<std::string>(j, "class_labels", where);
  model.tree_seeds = get_array<std::uint64_t>(j, "tree_seeds", where);

  const json& trees = field(j, "trees", where);
  if (!trees.is_array()) corrupt(where + "/trees", "expected an array");
  if (static_cast<int>(trees.size()) != model.hp.n_estimators ||
      model.tree_seeds.size() != trees.size()) {
    corrupt(where, "tree count does not match n_estimators / tree_seeds");
  }
  if (std::set<std::uint64_t>(model.tree_seeds.begin(), model.tree_seeds.end()).size() !=
      model.tree_seeds.size()) {
    corrupt(where + "/tree_seeds", "seeds are not pairwise distinct");
  }
  const int n_classes = static_cast<int>(model.class_labels.size());
  if (model.mode == ForestMode::classification && n_classes < 1) {
    corrupt(where + "/class_labels", "classification model without classes");
  }

  for (std::size_t t = 0; t < trees.size(); ++t) {
    const std::string at = where + "/trees/" + std::to_string(t);
    const json& tj = trees[t];
    DecisionTree tree;
    tree.mode = model.mode;
    tree.n_features = get_as<int>(tj, "n_features", at);
    tree.n_classes = get_as<int>(tj, "n_classes", at);
    if (tree.n_features != model.n_features()) corrupt(at, "feature count mismatch");
    if (model.mode == ForestMode::classification && tree.n_classes != n_classes) {
      corrupt(at, "class count mismatch");
    }
    const auto feature = get_array<int>(tj, "feature", at);
    const auto threshold = get_array<double>(tj, "threshold", at);
    const auto left = get_array<int>(tj, "left", at);
    const auto right = get_array<int>(tj, "right", at);
    const auto value = get_array<double>(tj, "value", at);
    const auto samples = get_array<int>(tj, "samples", at);
    const auto counts = get_array<std::vector<int>>(tj, "class_counts", at);
    const std::size_t n = feature.size();
    if (n == 0) corrupt(at, "tree has no nodes");
    if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
        samples.size() != n || counts.size() != n) {
      corrupt(at, "node arrays have different lengths");
    }
    tree.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      TreeNode& node = tree.nodes[i];
      node.feature = feature[i];
      node.threshold = threshold[i];
      node.left = left[i];
      node.right = right[i];
      node.value = value[i];
      node.samples = samples[i];
      node.class_counts = counts[i];
      const std::string nat = at + "/node/" + std::to_string(i);
      if (node.feature >= tree.n_features || node.feature < -1) corrupt(nat, "feature out of range");
      if (!node.is_leaf()) {
        // Children are stored after their parent, which also rules out cycles.
        const auto in_range = [&](int c) {
          return c > static_cast<int>(i) && c < static_cast<int>(n);
        };
        if (!in_range(node.left) || !in_range(node.right) || node.left == node.right) {
          corrupt(nat, "child index out of range");
        }
      }
      if (model.mode == ForestMode::classification &&
          static_cast<int>(node.class_counts.size()) != n_classes) {
        corrupt(nat, "class_counts length mismatch");
      }
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::string serialize_forest(const RandomForestModel& model) { return to_json(model).dump(1) + "\n"; }

RandomForestModel deserialize_forest(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Integrity, std::string("forest: ") + e.what());
  }
  return forest_from_json(j);
}

}  // namespace nmpo
