#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "nmpo/error.hpp"
#include "nmpo/eval.hpp"
#include "nmpo/model.hpp"

using namespace nmpo;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an nmpo::Error");
  return ErrorKind::Internal;
}

Hyperparams memorizer() {
  Hyperparams hp;
  hp.n_estimators = 1;
  hp.bootstrap = false;
  hp.max_features = MaxFeatures::parse("all");
  return hp;
}

struct Dataset {
  Eigen::MatrixXd X;
  Targets y;
};

Dataset noisy_regression(std::uint64_t seed, Eigen::Index n = 40) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  Dataset d;
  d.X.resize(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.X(i, 0) = u(gen);
    d.X(i, 1) = u(gen);
    y(i) = d.X(i, 0) * d.X(i, 0) - d.X(i, 1) + noise(gen);
  }
  d.y = Targets::regression(y);
  return d;
}

StageHyperparams quick_stage_hp() {
  StageHyperparams hp;
  hp.regressor.n_estimators = 10;
  hp.regressor.max_features = MaxFeatures::parse("all");
  hp.classifier.n_estimators = 10;
  hp.classifier.max_features = MaxFeatures::parse("all");
  return hp;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("rmse hand values") {
    const Eigen::Vector2d p(1, 3), a(2, 2);
    CHECK(rmse(p, a) == 1.0);
    const Eigen::Vector3d z(0, 0, 0), b(3, 0, 0);
    CHECK(std::abs(rmse(z, b) - std::sqrt(3.0)) <= 1e-12 * std::sqrt(3.0));
    CHECK(rmse(b, b) == 0.0);
    CHECK(kind_of([&] { rmse(Eigen::VectorXd(p), Eigen::VectorXd(b)); }) == ErrorKind::Shape);
    CHECK(kind_of([] { rmse(Eigen::VectorXd(0), Eigen::VectorXd(0)); }) == ErrorKind::Domain);
  }

  TEST_CASE("mean score and accuracy") {
    const std::vector<double> folds{1.0, 2.0, 3.0};
    CHECK(mean_score(folds) == 2.0);
    CHECK(kind_of([] { mean_score(std::vector<double>{}); }) == ErrorKind::Domain);
    const std::vector<int> pred{0, 1, 1, 2, 0, 0, 1, 2, 2, 0}, act{0, 1, 1, 2, 0, 0, 1, 2, 1, 1};
    CHECK(accuracy<int>(pred, act) == 0.8);
    CHECK(accuracy<int>(act, act) == 1.0);
    CHECK(kind_of([] { accuracy(std::vector<OffloadLabel>{}, std::vector<OffloadLabel>{}); }) ==
          ErrorKind::Domain);
    CHECK(kind_of([] {
            accuracy(std::vector<OffloadLabel>{OffloadLabel::no}, std::vector<OffloadLabel>{});
          }) == ErrorKind::Shape);
  }

  TEST_CASE("confusion row for nine actual-yes runs") {
    std::vector<OffloadLabel> actual(9, OffloadLabel::yes), predicted(8, OffloadLabel::yes);
    predicted.push_back(OffloadLabel::maybe);
    const auto cm = confusion(predicted, actual);
    CHECK(cm.counts.row(0) == Eigen::RowVector3i(8, 1, 0));
    CHECK(cm.at(OffloadLabel::yes, OffloadLabel::maybe) == 1);
    CHECK(cm.total() == 9);
    CHECK(cm.correct() == 8);
    CHECK(cm.accuracy() == 8.0 / 9.0);
    const auto csv = cm.to_csv();
    CHECK(csv.find("actual\\predicted,yes,maybe,no") == 0);
    CHECK(csv.find("yes,8,1,0") != std::string::npos);
    const auto j = cm.to_json();
    CHECK(j.at("counts")[0] == nlohmann::json::array({8, 1, 0}));
    CHECK(j.at("orientation").get<std::string>().find("actual") != std::string::npos);
  }

  TEST_CASE("perfect predictions give a diagonal matrix") {
    std::vector<OffloadLabel> labels{OffloadLabel::yes, OffloadLabel::no, OffloadLabel::maybe,
                                     OffloadLabel::no};
    const auto cm = confusion(labels, labels);
    CHECK(cm.counts == Eigen::Matrix3i(Eigen::Vector3i(1, 1, 2).asDiagonal()));
    CHECK(kind_of([] { confusion({}, {}); }) == ErrorKind::Domain);
  }

  TEST_CASE("accuracy equals trace over total for random pairings") {
    std::mt19937_64 gen(17);
    for (int t = 0; t < 1000; ++t) {
      const std::size_t n = 1 + gen() % 50;
      std::vector<OffloadLabel> p(n), a(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = kAllLabels[gen() % 3];
        a[i] = kAllLabels[gen() % 3];
      }
      const auto cm = confusion(p, a);
      CHECK(cm.total() == static_cast<int>(n));
      CHECK((cm.counts.array() >= 0).all());
      CHECK(accuracy(p, a) == static_cast<double>(cm.counts.trace()) / static_cast<double>(cm.total()));
      CHECK(cm.accuracy() == accuracy(p, a));
    }
  }

  TEST_CASE("fold sizes and coverage") {
    const auto five = kfold_split(10, 5, 1);
    for (int f = 0; f < 5; ++f) CHECK(five.rows_in(f).size() == 2);
    const auto three = kfold_split(10, 3, 1);
    CHECK(three.rows_in(0).size() == 4);
    CHECK(three.rows_in(1).size() == 3);
    CHECK(three.rows_in(2).size() == 3);
    CHECK(kfold_split(10, 3, 1).fold == three.fold);
    CHECK(kfold_split(10, 3, 2).fold != three.fold);
    CHECK(kind_of([] { kfold_split(3, 4, 0); }) == ErrorKind::Config);
    CHECK(kind_of([] { kfold_split(10, 1, 0); }) == ErrorKind::Config);

    std::mt19937_64 gen(3);
    for (int t = 0; t < 200; ++t) {
      const std::size_t n = 2 + gen() % 60;
      const int k = 2 + static_cast<int>(gen() % (n - 1));
      const auto folds = kfold_split(n, k, gen());
      std::vector<std::size_t> sizes;
      std::set<std::size_t> seen;
      for (int f = 0; f < k; ++f) {
        const auto in = folds.rows_in(f);
        const auto out = folds.rows_not_in(f);
        CHECK(in.size() + out.size() == n);
        sizes.push_back(in.size());
        for (auto r : in) CHECK(seen.insert(r).second);
      }
      CHECK(seen.size() == n);
      CHECK(*std::max_element(sizes.begin(), sizes.end()) -
                *std::min_element(sizes.begin(), sizes.end()) <=
            1);
    }
  }

  TEST_CASE("cv score is exactly the mean of the fold errors") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto d = noisy_regression(seed);
      Hyperparams hp;
      hp.n_estimators = 8;
      hp.seed = seed;
      const auto report = cross_validate(d.X, d.y, hp, 5, seed);
      REQUIRE(report.per_fold_rmse.size() == 5);
      double sum = 0.0;
      for (double r : report.per_fold_rmse) sum += r;
      CHECK(report.cv_score == sum / 5.0);
      CHECK(report.hp == hp);
    }
  }

  TEST_CASE("constant target cross-validates to zero") {
    const auto d = noisy_regression(1, 12);
    const auto report = cross_validate(d.X, Targets::regression(Eigen::VectorXd::Constant(12, 3.0)),
                                       memorizer(), 4, 0);
    CHECK(report.cv_score == 0.0);
  }

  TEST_CASE("leave-one-out CV on a linear dataset matches a nearest-neighbour oracle") {
    const std::vector<double> xs{0, 1, 3, 4, 8, 9};
    Eigen::MatrixXd X(6, 1);
    Eigen::VectorXd y(6);
    for (Eigen::Index i = 0; i < 6; ++i) {
      X(i, 0) = xs[static_cast<std::size_t>(i)];
      y(i) = 2.0 * X(i, 0) + 1.0;
    }
    const auto report = cross_validate(X, Targets::regression(y), memorizer(), 6, 42);
    const auto folds = kfold_split(6, 6, 42);
    for (int f = 0; f < 6; ++f) {
      const auto held = folds.rows_in(f);
      REQUIRE(held.size() == 1);
      const auto r = static_cast<Eigen::Index>(held[0]);
      // A fully grown tree on the other rows predicts the neighbour on the
      // held-out point's side of their midpoint (ties go left).
      std::optional<Eigen::Index> lo, hi;
      for (Eigen::Index i = 0; i < 6; ++i) {
        if (i == r) continue;
        if (X(i, 0) < X(r, 0) && (!lo || X(i, 0) > X(*lo, 0))) lo = i;
        if (X(i, 0) > X(r, 0) && (!hi || X(i, 0) < X(*hi, 0))) hi = i;
      }
      double predicted;
      if (!lo) predicted = y(*hi);
      else if (!hi) predicted = y(*lo);
      else predicted = X(r, 0) <= (X(*lo, 0) + X(*hi, 0)) / 2.0 ? y(*lo) : y(*hi);
      CHECK(report.per_fold_rmse[static_cast<std::size_t>(f)] == std::abs(predicted - y(r)));

      // Refit outside the harness as well.
      const auto train = folds.rows_not_in(f);
      Eigen::MatrixXd Xt(static_cast<Eigen::Index>(train.size()), 1);
      Eigen::VectorXd yt(Xt.rows());
      for (std::size_t i = 0; i < train.size(); ++i) {
        Xt(static_cast<Eigen::Index>(i), 0) = X(static_cast<Eigen::Index>(train[i]), 0);
        yt(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(train[i]));
      }
      const auto model = fit_forest(Xt, Targets::regression(yt), memorizer());
      CHECK(std::abs(predict_regression(model, X.row(r)) - y(r)) ==
            report.per_fold_rmse[static_cast<std::size_t>(f)]);
    }
  }

  TEST_CASE("classification CV reports accuracy") {
    const auto d = noisy_regression(4, 30);
    std::vector<int> classes;
    for (Eigen::Index i = 0; i < 30; ++i) classes.push_back(d.X(i, 0) > 2.0 ? 0 : 2);
    Hyperparams hp;
    hp.n_estimators = 10;
    const auto report = cross_validate(d.X, Targets::classification(classes, 3), hp, 3, 0);
    CHECK(report.mode == ForestMode::classification);
    CHECK(report.per_fold_accuracy.size() == 3);
    CHECK(report.per_fold_rmse.empty());
    CHECK(report.cv_accuracy == mean_score(report.per_fold_accuracy));
    CHECK(report.cv_accuracy > 0.8);
  }

  TEST_CASE("fold errors name the fold") {
    const auto d = noisy_regression(1, 10);
    Eigen::VectorXd y = d.y.values;
    y(3) = INFINITY;
    try {
      cross_validate(d.X, Targets::regression(y), memorizer(), 5, 0);
      FAIL("expected a data error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Data);
      CHECK(std::string(e.what()).rfind("fold ", 0) == 0);
    }
  }

  TEST_CASE("search space enumeration") {
    SearchSpace s;
    s.n_estimators = {5, 10};
    s.max_depth = {2, std::nullopt};
    s.bootstrap = {true, false};
    CHECK(s.size() == 8);
    CHECK(s.at(0, 7).n_estimators == 5);
    CHECK(s.at(0, 7).bootstrap);
    CHECK_FALSE(s.at(1, 7).bootstrap);
    CHECK(s.at(2, 7).max_depth == std::nullopt);
    CHECK(s.at(4, 7).n_estimators == 10);
    CHECK(s.at(5, 7).seed == derive_seed(7, 5));
    CHECK(kind_of([&] { s.at(8, 0); }) == ErrorKind::Config);
    const auto back = SearchSpace::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(back.at(i, 3) == s.at(i, 3));
    CHECK(kind_of([] { SearchSpace::from_json({{"n_estimators", nlohmann::json::array()}}); }) ==
          ErrorKind::Config);
    CHECK(kind_of([] { SearchSpace::from_json({{"min_samples_split", {1}}}); }) == ErrorKind::Config);
    const auto single = SearchSpace::single(memorizer());
    CHECK(single.size() == 1);
  }

  TEST_CASE("single-point and memorizing searches") {
    const auto d = noisy_regression(2, 20);
    Hyperparams hp;
    hp.n_estimators = 4;
    const auto one = grid_search(d.X, d.y, SearchSpace::single(hp), 4, 9);
    CHECK(one.best_index == 0);
    CHECK(one.best.n_estimators == 4);

    const Targets constant = Targets::regression(Eigen::VectorXd::Constant(20, 1.0));
    SearchSpace s;
    s.n_estimators = {1};
    s.max_features = {MaxFeatures::parse("all")};
    s.max_depth = {1, std::nullopt};
    s.bootstrap = {false};
    auto staircase = d.y;
    for (Eigen::Index i = 0; i < 20; ++i) staircase.values(i) = std::floor(d.X(i, 0));
    const auto best = grid_search(d.X, staircase, s, 4, 0);
    CHECK(best.best.max_depth == std::nullopt);
    const auto tie = grid_search(d.X, constant, s, 4, 0);
    CHECK(tie.best_index == 0);
  }

  TEST_CASE("grid search equals the brute-force minimum over a 2x2 space") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto d = noisy_regression(seed + 10, 36);
      SearchSpace s;
      s.n_estimators = {3, 12};
      s.max_depth = {2, std::nullopt};
      const auto result = grid_search(d.X, d.y, s, 3, seed);
      std::size_t oracle_index = 0;
      double oracle_score = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto report = cross_validate(d.X, d.y, s.at(i, seed), 3, seed);
        CHECK(report.per_fold_rmse == result.evaluated[i].per_fold_rmse);
        if (i == 0 || report.cv_score < oracle_score) {
          oracle_score = report.cv_score;
          oracle_index = i;
        }
      }
      CHECK(result.best_index == oracle_index);
      CHECK(result.report.cv_score == oracle_score);
      CHECK(result.best == s.at(oracle_index, seed));
      CHECK(result.evaluated_points == std::vector<std::size_t>{0, 1, 2, 3});
    }
  }

  TEST_CASE("classification search maximizes accuracy") {
    const auto d = noisy_regression(5, 30);
    std::vector<int> classes;
    for (Eigen::Index i = 0; i < 30; ++i) classes.push_back(d.X(i, 0) > 2.0 ? 0 : (d.X(i, 1) > 2 ? 1 : 2));
    const auto y = Targets::classification(classes, 3);
    SearchSpace s;
    s.n_estimators = {5};
    s.max_depth = {1, 4};
    const auto result = grid_search(d.X, y, s, 3, 1);
    double best = -1.0;
    for (const auto& r : result.evaluated) best = std::max(best, r.cv_accuracy);
    CHECK(result.report.cv_accuracy == best);
  }

  TEST_CASE("random search draws and its relation to the grid") {
    CHECK(random_search_draws(10, 5, 3) == random_search_draws(10, 5, 3));
    CHECK(random_search_draws(10, 1, 3).size() == 1);
    CHECK(kind_of([] { random_search_draws(10, 0, 3); }) == ErrorKind::Config);
    CHECK(kind_of([] { random_search_draws(0, 2, 3); }) == ErrorKind::Config);

    const auto d = noisy_regression(6, 30);
    SearchSpace s;
    s.n_estimators = {2, 6};
    s.max_depth = {1, 3, std::nullopt};
    int covered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      // Both searches use the folds and per-point seeds of `seed`, so a drawn
      // point scores exactly as it does in the grid.
      const auto grid = grid_search(d.X, d.y, s, 3, seed);
      const auto rnd = random_search(d.X, d.y, s, 12, 3, seed);
      CHECK(rnd.evaluated_points == random_search_draws(s.size(), 12, seed));
      for (std::size_t i = 0; i < rnd.evaluated_points.size(); ++i) {
        CHECK(rnd.evaluated[i].per_fold_rmse == grid.evaluated[rnd.evaluated_points[i]].per_fold_rmse);
      }
      CHECK(rnd.report.cv_score >= grid.report.cv_score);
      const std::set<std::size_t> distinct(rnd.evaluated_points.begin(), rnd.evaluated_points.end());
      if (distinct.size() == s.size()) {
        ++covered;
        CHECK(rnd.report.cv_score == grid.report.cv_score);
      }
    }
    CHECK(covered > 0);
  }

  TEST_CASE("leave-one-app-out trains only on other apps") {
    testutil::SynthFixture fx;
    const auto labeled = labeled_records(fx.records);
    const std::vector<std::string> features{"host_flop_per_byte", "host_gflops_per_s", "threads"};
    const auto result = leave_one_app_out(fx.records, "gemv", features, quick_stage_hp(), 0);
    CHECK(result.app == "gemv");
    std::size_t gemv_rows = 0;
    for (const auto& r : labeled) gemv_rows += r.spec.app == "gemv";
    CHECK(result.rows.size() == gemv_rows);
    CHECK(result.training_apps.size() == labeled.size() - gemv_rows);
    for (const auto& app : result.training_apps) CHECK(app != "gemv");
    for (const auto& key : result.rows) CHECK(key.app == "gemv");

    // Every bootstrap draw indexes a training row of another app.
    const auto n_train = result.training_apps.size();
    for (const auto* forest : {&result.model.ipc_regressor, &result.model.classifier}) {
      for (std::size_t t = 0; t < forest->trees.size(); ++t) {
        for (auto row : bootstrap_rows(n_train, forest->tree_seeds[t])) {
          REQUIRE(row < n_train);
          CHECK(result.training_apps[row] != "gemv");
        }
        CHECK(forest->trees[t].nodes[0].samples == static_cast<int>(n_train));
      }
    }
    CHECK(result.accuracy == accuracy(result.predicted, result.actual));
    CHECK(result.confusion.total() == static_cast<int>(gemv_rows));
    for (const auto& p : result.probabilities) CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) <= 1e-12);
  }

  TEST_CASE("leave-one-app-out with two apps") {
    testutil::SynthFixture fx;
    std::vector<RunRecord> two;
    for (const auto& r : fx.records) {
      if (r.spec.app == "atax" || r.spec.app == "chol") two.push_back(r);
    }
    const std::vector<std::string> features{"host_flop_per_byte", "threads"};
    const auto result = leave_one_app_out(two, "atax", features, quick_stage_hp(), 1);
    for (const auto& app : result.training_apps) CHECK(app == "chol");

    CHECK(kind_of([&] { leave_one_app_out(two, "nope", features, quick_stage_hp()); }) == ErrorKind::Name);
    std::vector<RunRecord> one;
    for (const auto& r : two) {
      if (r.spec.app == "atax") one.push_back(r);
    }
    CHECK(kind_of([&] { leave_one_app_out(one, "atax", features, quick_stage_hp()); }) == ErrorKind::Corpus);
  }

  TEST_CASE("loo summary aggregates per app and per row") {
    LooResult a, b;
    a.actual = {OffloadLabel::yes, OffloadLabel::yes};
    a.predicted = {OffloadLabel::yes, OffloadLabel::no};
    a.accuracy = 0.5;
    a.confusion = confusion(a.predicted, a.actual);
    b.actual = {OffloadLabel::no, OffloadLabel::no, OffloadLabel::no, OffloadLabel::no};
    b.predicted = b.actual;
    b.accuracy = 1.0;
    b.confusion = confusion(b.predicted, b.actual);
    const auto s = summarize({a, b});
    CHECK(s.mean_app_accuracy == 0.75);
    CHECK(s.row_accuracy == 5.0 / 6.0);
    CHECK(s.confusion.total() == 6);
  }
}
