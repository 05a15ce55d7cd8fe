#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nmpo/error.hpp"

namespace nmpo {

/// Column-named numeric matrix; one row per run.
struct FeatureMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns
  std::string target;

  Eigen::Index rows() const { return values.rows(); }
  /// Throws ErrorKind::Name for an unknown column.
  Eigen::Index index_of(const std::string& name) const;
  auto column(const std::string& name) const { return values.col(index_of(name)); }
  /// Copies the named columns, in the given order.
  Eigen::MatrixXd select(const std::vector<std::string>& names) const;
  /// Checks shape and that every cell is finite.
  void validate() const;
};

/// Whether every coefficient equals the first one.
template <typename Derived>
bool is_constant(const Eigen::MatrixBase<Derived>& x) {
  return x.size() == 0 || (x.array() == x.coeff(0)).all();
}

/// Sample Pearson correlation coefficient, clamped to [-1, 1].
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar pearson(const Eigen::MatrixBase<DerivedX>& x,
                                  const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != y.size()) {
    throw Error(ErrorKind::Shape, "pearson: length mismatch " + std::to_string(x.size()) +
                                      " vs " + std::to_string(y.size()));
  }
  if (x.size() < 2) throw Error(ErrorKind::SampleSize, "pearson: need at least 2 samples");
  if (is_constant(x) || is_constant(y)) {
    throw Error(ErrorKind::DegenerateVariance, "pearson: constant input vector");
  }
  const auto xc = (x.array() - x.mean()).eval();
  const auto yc = (y.array() - y.mean()).eval();
  const Scalar r = (xc * yc).sum() / std::sqrt(xc.square().sum() * yc.square().sum());
  return std::clamp(r, Scalar(-1), Scalar(1));
}

/// Symmetric matrix of pairwise coefficients. Pairs involving a constant
/// column are undefined; they are stored as 0 and the column is listed in
/// `undefined`.
struct CorrelationMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd r;
  std::vector<std::string> undefined;

  Eigen::Index index_of(const std::string& name) const;
  double at(const std::string& a, const std::string& b) const;
  /// Header row of names, then one row of coefficients per name.
  std::string to_csv() const;
};

CorrelationMatrix correlation_matrix(const FeatureMatrix& m);

struct SelectionOptions {
  double threshold = 0.3;
  std::set<std::string> must_keep;
  /// Never selected, even when listed in must_keep.
  std::set<std::string> excluded;
};

/// Features with |r(feature, target)| >= threshold plus must_keep, minus the
/// target and excluded names, ordered by descending |r| then name.
std::vector<std::string> select_features(const CorrelationMatrix& cm, const std::string& target,
                                         const SelectionOptions& options);

}  // namespace nmpo
