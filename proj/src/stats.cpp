#include "nmpo/stats.hpp"

#include <algorithm>

#include "nmpo/io.hpp"

namespace nmpo {

Eigen::Index FeatureMatrix::index_of(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorKind::Name, "unknown feature '" + name + "'");
  return static_cast<Eigen::Index>(it - columns.begin());
}

Eigen::MatrixXd FeatureMatrix::select(const std::vector<std::string>& names) const {
  Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = values.col(index_of(names[j]));
  }
  return out;
}

void FeatureMatrix::validate() const {
  if (values.cols() != static_cast<Eigen::Index>(columns.size())) {
    throw Error(ErrorKind::Shape, "feature matrix has " + std::to_string(values.cols()) +
                                      " columns but " + std::to_string(columns.size()) +
                                      " names");
  }
  if (!values.allFinite()) throw Error(ErrorKind::Data, "feature matrix has non-finite cells");
}

Eigen::Index CorrelationMatrix::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorKind::Name, "unknown feature '" + name + "'");
  return static_cast<Eigen::Index>(it - names.begin());
}

double CorrelationMatrix::at(const std::string& a, const std::string& b) const {
  return r(index_of(a), index_of(b));
}

std::string CorrelationMatrix::to_csv() const {
  std::string out;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (j) out += ',';
    out += names[j];
  }
  out += '\n';
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      if (j) out += ',';
      out += format_double(r(i, j));
    }
    out += '\n';
  }
  return out;
}

CorrelationMatrix correlation_matrix(const FeatureMatrix& m) {
  m.validate();
  if (m.rows() < 2) {
    throw Error(ErrorKind::SampleSize, "correlation needs at least 2 rows, got " +
                                           std::to_string(m.rows()));
  }
  const Eigen::Index p = m.values.cols();
  CorrelationMatrix cm;
  cm.names = m.columns;
  cm.r = Eigen::MatrixXd::Zero(p, p);
  std::vector<bool> constant(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    constant[static_cast<std::size_t>(j)] = is_constant(m.values.col(j));
    if (constant[static_cast<std::size_t>(j)]) cm.undefined.push_back(m.columns[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < p; ++i) {
    if (constant[static_cast<std::size_t>(i)]) continue;
    cm.r(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < p; ++j) {
      if (constant[static_cast<std::size_t>(j)]) continue;
      const double r = pearson(m.values.col(i), m.values.col(j));
      cm.r(i, j) = r;
      cm.r(j, i) = r;
    }
  }
  return cm;
}

std::vector<std::string> select_features(const CorrelationMatrix& cm, const std::string& target,
                                         const SelectionOptions& options) {
  const Eigen::Index t = cm.index_of(target);
  if (!(options.threshold >= 0.0)) {
    throw Error(ErrorKind::Config, "selection threshold must be >= 0");
  }
  for (const auto& name : options.must_keep) cm.index_of(name);

  std::vector<std::pair<double, std::string>> picked;
  for (std::size_t j = 0; j < cm.names.size(); ++j) {
    const std::string& name = cm.names[j];
    if (static_cast<Eigen::Index>(j) == t || options.excluded.contains(name)) continue;
    const double strength = std::abs(cm.r(t, static_cast<Eigen::Index>(j)));
    if (strength >= options.threshold || options.must_keep.contains(name)) {
      picked.emplace_back(strength, name);
    }
  }
  std::sort(picked.begin(), picked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  out.reserve(picked.size());
  for (auto& [strength, name] : picked) out.push_back(std::move(name));
  return out;
}

}  // namespace nmpo
