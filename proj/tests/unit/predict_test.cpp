#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "ensplan/error.hpp"
#include "ensplan/predict.hpp"

using namespace ensplan;
using namespace ensplan::predict;

namespace {

CostSample sample(std::string id, double a, double d, std::vector<double> s) { return {std::move(id), a, d, std::move(s)}; }

// Actual cost = member mean + noise whose sign follows the member spread.
std::vector<CostSample> step_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0, 1);
  std::uniform_real_distribution<double> base(50000, 60000), spread(5, 80);
  std::vector<CostSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = base(rng), s = spread(rng);
    std::vector<double> m(10);
    for (auto& x : m) x = b + s * N(rng);
    const double mu = std::accumulate(m.begin(), m.end(), 0.0) / m.size();
    double ss = 0;
    for (double x : m) ss += (x - mu) * (x - mu);
    const double sd = std::sqrt(ss / (m.size() - 1));
    const double actual = mu + (sd > 40 ? 60.0 : -60.0) + 3 * N(rng);
    out.push_back(sample("F" + std::to_string(i), actual, b + 20 * N(rng), m));
  }
  return out;
}

}  // namespace

TEST_CASE("ensemble baseline and its errors") {
  const std::vector<double> m{100, 102, 104};
  CHECK(baseline_ensemble_cost(m) == 102.0);
  const std::vector<double> one{7.5};
  CHECK(baseline_ensemble_cost(one) == 7.5);
  CHECK_THROWS_AS(baseline_ensemble_cost(std::vector<double>{}), EmptyVector);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(4e4, 6e4);
  std::vector<double> r(20);
  for (auto& x : r) x = U(rng);
  long double s = 0;
  for (double x : r) s += x;
  CHECK(std::abs(baseline_ensemble_cost(r) - static_cast<double>(s / 20)) < 1e-9);

  const auto e = baseline_errors(sample("x", 105, 100, {104, 106}));
  CHECK(e.eps_d == 5.0);
  CHECK(e.eps_s == 0.0);
}

TEST_CASE("mean baseline predicts the untrained estimate") {
  const std::vector<CostSample> data{sample("a", 10, 9, {8, 12}), sample("b", 20, 21, {19, 20}), sample("c", 5, 5, {5, 6})};
  const auto d = train({InputSet::D, Family::MeanBaseline, {}, 0}, data);
  const auto s = train({InputSet::S, Family::MeanBaseline, {}, 0}, data);
  for (const auto& x : data) {
    CHECK(d.predict(x) == x.c_det);
    CHECK(s.predict(x) == baseline_ensemble_cost(x.c_members));
  }
  CHECK_THROWS_AS(train({InputSet::D, Family::LinearRidge, {}, 0}, std::vector<CostSample>{data[0]}), TooFewSamples);
  auto ragged = data;
  ragged[1].c_members.push_back(1);
  CHECK_THROWS_AS(train({InputSet::S, Family::LinearRidge, {}, 0}, ragged), DimensionMismatch);
}

TEST_CASE("ridge without regularisation recovers an exact linear law") {
  std::vector<CostSample> data;
  for (int i = 0; i < 30; ++i) {
    const double x = 1000 + 37.0 * i;
    data.push_back(sample("f" + std::to_string(i), 2 * x, x, {x, x}));
  }
  const auto r = train({InputSet::D, Family::LinearRidge, {{"lambda", 0.0}}, 0}, data);
  const double slope = (r.predict(sample("p", 0, 5000, {0, 0})) - r.predict(sample("q", 0, 4000, {0, 0}))) / 1000.0;
  CHECK(std::abs(slope - 2.0) < 1e-6);
  CHECK(std::abs(r.predict(sample("z", 0, 777, {0, 0})) - 1554.0) < 1e-6);
}

TEST_CASE("leave-one-out on 12 samples matches hand least squares") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(100, 200), noise(-5, 5);
  std::vector<CostSample> data;
  for (int i = 0; i < 12; ++i) {
    const double x = U(rng);
    data.push_back(sample("f" + std::to_string(i), 1.3 * x + 4 + noise(rng), x, {x}));
  }
  const RegressorSpec spec{InputSet::D, Family::LinearRidge, {{"lambda", 0.0}}, 0};
  const auto rep = cross_validate(data, std::span(&spec, 1), 12, 3);
  REQUIRE(rep.results.size() == 1);
  for (std::size_t k = 0; k < 12; ++k) {
    // Simple regression of C_A - C_D on C_D without sample k.
    double sx = 0, sy = 0, n = 11;
    for (std::size_t i = 0; i < 12; ++i)
      if (i != k) {
        sx += data[i].c_det;
        sy += data[i].c_actual - data[i].c_det;
      }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < 12; ++i)
      if (i != k) {
        sxx += (data[i].c_det - mx) * (data[i].c_det - mx);
        sxy += (data[i].c_det - mx) * (data[i].c_actual - data[i].c_det - my);
      }
    const double b = sxy / sxx;
    const double pred = data[k].c_det + my + b * (data[k].c_det - mx);
    CHECK(rep.results[0].predictions[k] == doctest::Approx(pred).epsilon(1e-9));
  }
}

TEST_CASE("tree ensemble finds a spread-driven step the baseline misses") {
  const auto data = step_dataset(200, 4);
  const std::vector<RegressorSpec> specs{
      {InputSet::S, Family::MeanBaseline, {}, 0},
      {InputSet::S, Family::TreeEnsemble, {{"n_trees", 200}, {"learning_rate", 0.05}, {"max_depth", 3}, {"min_leaf", 5}, {"subsample", 0.8}}, 0}};
  const auto rep = cross_validate(data, specs, 10, 1);
  double tree = 0, base = 0;
  for (const auto& r : rep.results) (r.spec.family == Family::TreeEnsemble ? tree : base) = r.mae;
  CHECK(tree < base);
}

TEST_CASE("cross-validation properties") {
  const auto data = step_dataset(53, 9);
  SUBCASE("folds partition the dataset") {
    for (std::size_t k : {2, 5, 10, 53}) {
      const auto parts = fold_partition(data.size(), k, 17);
      std::set<std::size_t> seen;
      std::size_t total = 0;
      for (const auto& f : parts) {
        total += f.size();
        seen.insert(f.begin(), f.end());
      }
      CHECK(total == data.size());
      CHECK(seen.size() == data.size());
      CHECK(*seen.rbegin() == data.size() - 1);
    }
    CHECK_THROWS_AS(fold_partition(5, 10, 1), TooFewSamples);
    CHECK(fold_partition(53, 10, 4) == fold_partition(53, 10, 4));
  }
  SUBCASE("mean baseline on S scores the mean absolute eps_S") {
    const RegressorSpec spec{InputSet::S, Family::MeanBaseline, {}, 0};
    const auto rep = cross_validate(data, std::span(&spec, 1), 10, 2);
    double s = 0;
    for (const auto& x : data) s += std::abs(baseline_errors(x).eps_s);
    CHECK(rep.results[0].mae == doctest::Approx(s / data.size()).epsilon(1e-12));
  }
  SUBCASE("perfect deterministic forecast scores zero") {
    auto perfect = data;
    for (auto& x : perfect) x.c_actual = x.c_det;
    const RegressorSpec spec{InputSet::D, Family::MeanBaseline, {}, 0};
    CHECK(cross_validate(perfect, std::span(&spec, 1), 10, 2).results[0].mae == 0.0);
  }
  SUBCASE("duplicate specs give identical metrics") {
    const auto specs = default_regressor_specs(5);
    std::vector<RegressorSpec> twice{specs[5], specs[5]};
    const auto rep = cross_validate(data, twice, 10, 2);
    CHECK(rep.results[0].mae == rep.results[1].mae);
    CHECK(rep.results[0].predictions == rep.results[1].predictions);
    CHECK(rep.results[0].fold_mae == rep.results[1].fold_mae);
  }
  SUBCASE("results come sorted by MAE") {
    const auto specs = default_regressor_specs(1);
    const auto rep = cross_validate(data, specs, 5, 2);
    for (std::size_t i = 1; i < rep.results.size(); ++i) CHECK(rep.results[i - 1].mae <= rep.results[i].mae);
  }
}

TEST_CASE("dataset CSV round trip") {
  const auto data = step_dataset(7, 2);
  const auto p = std::filesystem::temp_directory_path() / "ensplan_test_dataset.csv";
  write_dataset_csv(data, p);
  const auto back = read_dataset_csv(p);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].flight_id == data[i].flight_id);
    CHECK(back[i].c_actual == data[i].c_actual);
    CHECK(back[i].c_det == data[i].c_det);
    CHECK(back[i].c_members == data[i].c_members);
  }
  CHECK(dataset_csv(back) == dataset_csv(data));
  std::filesystem::remove(p);
}
