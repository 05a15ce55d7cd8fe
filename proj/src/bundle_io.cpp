#include <cstdio>

#include "nmpo/error.hpp"
#include "nmpo/pipeline.hpp"

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
  try {
    return field(j, name, where).get<T>();
  } catch (const json::exception&) {
    corrupt(where + "/" + name, "wrong type");
  }
}

json selection_json(const SelectionSummary& s) {
  return json{{"target", s.target},
              {"threshold", s.threshold},
              {"candidates", s.candidates},
              {"selected", s.selected},
              {"r_with_target", s.r_with_target},
              {"undefined", s.undefined}};
}

SelectionSummary selection_from(const json& j, const std::string& where) {
  SelectionSummary s;
  s.target = get_as<std::string>(j, "target", where);
  s.threshold = get_as<double>(j, "threshold", where);
  s.candidates = get_as<std::vector<std::string>>(j, "candidates", where);
  s.selected = get_as<std::vector<std::string>>(j, "selected", where);
  s.r_with_target = get_as<std::map<std::string, double>>(j, "r_with_target", where);
  s.undefined = get_as<std::vector<std::string>>(j, "undefined", where);
  return s;
}

}  // namespace

json to_json(const ModelBundle& b) {
  return json{{"format", "nmpo-bundle"},
              {"format_version", ModelBundle::kFormatVersion},
              {"created_at", b.created_at},
              {"feature_schema",
               {{"host_features", b.model.host_features}, {"predicted_ipc_slot", kPredictedIpcSlot}}},
              {"ipc_regressor", to_json(b.model.ipc_regressor)},
              {"suitability_classifier", to_json(b.model.classifier)},
              {"direct_classifier",
               b.model.direct_classifier ? to_json(*b.model.direct_classifier) : json(nullptr)},
              {"selection", selection_json(b.selection)},
              {"units", to_json(b.units)},
              {"roofline", to_json(b.roofline)},
              {"label_boundary", std::string(to_string(b.label_boundary))}};
}

ModelBundle bundle_from_json(const json& j) {
  const std::string where = "bundle";
  const json& version = field(j, "format_version", where);
  if (!version.is_number_integer() || version.get<long long>() != ModelBundle::kFormatVersion) {
    throw Error(ErrorKind::Version, "bundle: unsupported format_version " + version.dump());
  }
  if (get_as<std::string>(j, "format", where) != "nmpo-bundle") corrupt(where, "not a model bundle");

  ModelBundle b;
  b.created_at = get_as<std::string>(j, "created_at", where);
  const json& schema = field(j, "feature_schema", where);
  b.model.host_features = get_as<std::vector<std::string>>(schema, "host_features", where + "/feature_schema");
  if (get_as<std::string>(schema, "predicted_ipc_slot", where + "/feature_schema") != kPredictedIpcSlot) {
    corrupt(where + "/feature_schema", "unexpected predicted_ipc_slot");
  }
  b.model.ipc_regressor = forest_from_json(field(j, "ipc_regressor", where), where + "/ipc_regressor");
  b.model.classifier =
      forest_from_json(field(j, "suitability_classifier", where), where + "/suitability_classifier");
  const json& direct = field(j, "direct_classifier", where);
  if (!direct.is_null()) b.model.direct_classifier = forest_from_json(direct, where + "/direct_classifier");

  b.selection = selection_from(field(j, "selection", where), where + "/selection");
  try {
    b.units = units_from_json(field(j, "units", where));
    b.roofline = roofline_from_json(field(j, "roofline", where));
    b.label_boundary = parse_boundary(get_as<std::string>(j, "label_boundary", where));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Integrity) throw;
    corrupt(where, e.what());
  }

  // Both stages must agree on the host-side schema.
  auto stage2 = b.model.host_features;
  stage2.push_back(kPredictedIpcSlot);
  if (b.model.ipc_regressor.mode != ForestMode::regression ||
      b.model.ipc_regressor.feature_names != b.model.host_features) {
    corrupt(where + "/ipc_regressor", "does not match the feature schema");
  }
  if (b.model.classifier.mode != ForestMode::classification ||
      b.model.classifier.feature_names != stage2 ||
      b.model.classifier.class_labels != classifier_labels()) {
    corrupt(where + "/suitability_classifier", "does not match the feature schema");
  }
  if (b.model.direct_classifier &&
      (b.model.direct_classifier->mode != ForestMode::classification ||
       b.model.direct_classifier->feature_names != b.model.host_features ||
       b.model.direct_classifier->class_labels != classifier_labels())) {
    corrupt(where + "/direct_classifier", "does not match the feature schema");
  }
  return b;
}

std::string serialize_bundle(const ModelBundle& bundle) { return to_json(bundle).dump(1) + "\n"; }

ModelBundle deserialize_bundle(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Integrity, std::string("bundle: ") + e.what());
  }
  return bundle_from_json(j);
}

std::string bundle_hash(const ModelBundle& bundle) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_bundle(bundle))));
  return buf;
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_bundle(bundle));
}

ModelBundle load_model(const std::filesystem::path& path) {
  try {
    return deserialize_bundle(read_text_file(path));
  } catch (const Error& e) {
    rethrow_with_context(e, path.string());
  }
}

}  // namespace nmpo
