#include "ensplan/predict.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <variant>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ensplan/error.hpp"
#include "ensplan/random.hpp"
#include "ensplan/stats.hpp"

namespace ensplan::predict {

namespace {

// Fisher-Yates on raw engine output, so the permutation does not depend on
// the standard library's distribution implementation.
void seeded_shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

double hyper(const RegressorSpec& spec, const char* key, double fallback) {
  auto it = spec.hyper.find(key);
  return it == spec.hyper.end() ? fallback : it->second;
}

std::size_t check_dataset(std::span<const CostSample> samples) {
  if (samples.size() < 2) throw TooFewSamples("training needs at least 2 samples, got " + std::to_string(samples.size()));
  std::size_t n = samples.front().c_members.size();
  if (n == 0) throw EmptyVector("sample '" + samples.front().flight_id + "' has no member costs");
  for (const auto& s : samples) {
    if (s.c_members.size() != n)
      throw DimensionMismatch("sample '" + s.flight_id + "' has " + std::to_string(s.c_members.size()) +
                              " member costs, expected " + std::to_string(n));
  }
  return n;
}

// --- ridge -----------------------------------------------------------------

struct LinearModel {
  std::vector<double> center, scale, beta;
  double intercept = 0.0;

  double eval(const std::vector<double>& x) const {
    double y = intercept;
    for (std::size_t k = 0; k < beta.size(); ++k) y += beta[k] * (x[k] - center[k]) / scale[k];
    return y;
  }
};

LinearModel fit_ridge(const std::vector<std::vector<double>>& X, const std::vector<double>& r, double lambda) {
  const std::size_t n = X.size(), p = X.front().size();
  LinearModel m;
  m.center.assign(p, 0.0);
  m.scale.assign(p, 1.0);
  for (std::size_t k = 0; k < p; ++k) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = X[i][k];
    m.center[k] = stats::mean(col);
    double ss = 0.0;
    for (double v : col) ss += (v - m.center[k]) * (v - m.center[k]);
    double sd = std::sqrt(ss / static_cast<double>(n));
    m.scale[k] = sd > 0.0 ? sd : 1.0;
  }
  m.intercept = stats::mean(r);

  Eigen::MatrixXd Z(n, p);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) Z(i, k) = (X[i][k] - m.center[k]) / m.scale[k];
    y(i) = r[i] - m.intercept;
  }
  Eigen::MatrixXd A = Z.transpose() * Z;
  A.diagonal().array() += lambda;
  Eigen::VectorXd b = Z.transpose() * y;
  Eigen::VectorXd beta = A.completeOrthogonalDecomposition().solve(b);
  m.beta.assign(beta.data(), beta.data() + p);
  return m;
}

// --- gradient-boosted trees ------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 = leaf
  double threshold = 0.0;
  double value = 0.0;
  int left = -1, right = -1;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double eval(const std::vector<double>& x) const {
    int i = 0;
    while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].value;
  }
};

struct TreeModel {
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<Tree> trees;
  double eval(const std::vector<double>& x) const {
    double y = base;
    for (const auto& t : trees) y += learning_rate * t.eval(x);
    return y;
  }
};

struct TreeBuilder {
  const std::vector<std::vector<double>>& X;
  const std::vector<double>& g;
  std::size_t max_depth;
  std::size_t min_leaf;
  Tree tree;

  int grow(std::vector<std::size_t> idx, std::size_t depth) {
    double sum = 0.0;
    for (auto i : idx) sum += g[i];
    const double n = static_cast<double>(idx.size());
    int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[id].value = sum / n;
    if (depth >= max_depth || idx.size() < 2 * min_leaf) return id;

    const std::size_t p = X.front().size();
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order = idx;
    for (std::size_t k = 0; k < p; ++k) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return X[a][k] < X[b][k] || (X[a][k] == X[b][k] && a < b);
      });
      double left = 0.0;
      for (std::size_t s = 0; s + 1 < order.size(); ++s) {
        left += g[order[s]];
        std::size_t nl = s + 1, nr = order.size() - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        double xl = X[order[s]][k], xr = X[order[s + 1]][k];
        if (!(xl < xr)) continue;
        double right = sum - left;
        double gain = left * left / nl + right * right / nr - sum * sum / n;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(k);
          best_threshold = 0.5 * (xl + xr);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> li, ri;
    for (auto i : idx) (X[i][best_feature] <= best_threshold ? li : ri).push_back(i);
    int l = grow(std::move(li), depth + 1);
    int r = grow(std::move(ri), depth + 1);
    tree.nodes[id].feature = best_feature;
    tree.nodes[id].threshold = best_threshold;
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }
};

TreeModel fit_trees(const std::vector<std::vector<double>>& X, const std::vector<double>& r, const RegressorSpec& spec) {
  const auto n_trees = static_cast<std::size_t>(hyper(spec, "n_trees", 200));
  const auto max_depth = static_cast<std::size_t>(hyper(spec, "max_depth", 3));
  const auto min_leaf = std::max<std::size_t>(1, static_cast<std::size_t>(hyper(spec, "min_leaf", 5)));
  const double subsample = hyper(spec, "subsample", 0.8);
  if (!(subsample > 0.0 && subsample <= 1.0)) throw InvalidSpec("subsample must be in (0, 1]");

  TreeModel m;
  m.learning_rate = hyper(spec, "learning_rate", 0.05);
  m.base = stats::mean(r);
  const std::size_t n = X.size();
  std::vector<double> fitted(n, m.base), g(n);
  std::mt19937_64 rng(derive_seed(spec.seed, {0x7ee5}));
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(subsample * n)));

  for (std::size_t t = 0; t < n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) g[i] = r[i] - fitted[i];
    std::vector<std::size_t> idx = all;
    if (take < n) {
      seeded_shuffle(idx, rng);
      idx.resize(take);
      std::sort(idx.begin(), idx.end());
    }
    TreeBuilder b{X, g, max_depth, min_leaf, {}};
    b.grow(std::move(idx), 0);
    for (std::size_t i = 0; i < n; ++i) fitted[i] += m.learning_rate * b.tree.eval(X[i]);
    m.trees.push_back(std::move(b.tree));
  }
  return m;
}

}  // namespace

struct Regressor::Model {
  RegressorSpec spec;
  std::variant<std::monostate, LinearModel, TreeModel> fit;
};

Regressor::Regressor() = default;
Regressor::~Regressor() = default;
Regressor::Regressor(Regressor&&) noexcept = default;
Regressor& Regressor::operator=(Regressor&&) noexcept = default;

const RegressorSpec& Regressor::spec() const {
  if (!model_) throw InvalidSpec("regressor has not been trained");
  return model_->spec;
}

double Regressor::predict(const CostSample& s) const {
  const auto& spec = this->spec();
  double ref = reference_estimate(s, spec.inputs);
  if (std::holds_alternative<std::monostate>(model_->fit)) return ref;
  auto x = features(s, spec.inputs);
  if (const auto* lin = std::get_if<LinearModel>(&model_->fit)) {
    if (x.size() != lin->beta.size())
      throw DimensionMismatch("sample '" + s.flight_id + "' yields " + std::to_string(x.size()) +
                              " features, model expects " + std::to_string(lin->beta.size()));
    return ref + lin->eval(x);
  }
  const auto& tree = std::get<TreeModel>(model_->fit);
  return ref + tree.eval(x);
}

std::string to_string(InputSet s) {
  switch (s) {
    case InputSet::D: return "D";
    case InputSet::S: return "S";
    case InputSet::DS: return "D+S";
  }
  return "?";
}

std::string to_string(Family f) {
  switch (f) {
    case Family::MeanBaseline: return "mean_baseline";
    case Family::LinearRidge: return "linear_ridge";
    case Family::TreeEnsemble: return "tree_ensemble";
  }
  return "?";
}

InputSet parse_input_set(const std::string& s) {
  if (s == "D") return InputSet::D;
  if (s == "S") return InputSet::S;
  if (s == "D+S" || s == "DS") return InputSet::DS;
  throw ConfigError("unknown input set '" + s + "' (expected D, S or D+S)");
}

Family parse_family(const std::string& s) {
  if (s == "mean_baseline") return Family::MeanBaseline;
  if (s == "linear_ridge") return Family::LinearRidge;
  if (s == "tree_ensemble") return Family::TreeEnsemble;
  throw ConfigError("unknown regressor family '" + s + "'");
}

std::string RegressorSpec::label() const { return to_string(family) + "(" + to_string(inputs) + ")"; }

double baseline_ensemble_cost(std::span<const double> c_members) {
  if (c_members.empty()) throw EmptyVector("no member costs to average");
  return stats::mean(c_members);
}

BaselineErrors baseline_errors(const CostSample& s) {
  return {s.c_actual - s.c_det, s.c_actual - baseline_ensemble_cost(s.c_members)};
}

double reference_estimate(const CostSample& s, InputSet inputs) {
  switch (inputs) {
    case InputSet::D: return s.c_det;
    case InputSet::S: return baseline_ensemble_cost(s.c_members);
    case InputSet::DS: {
      std::vector<double> all(s.c_members);
      all.push_back(s.c_det);
      return stats::mean(all);
    }
  }
  return s.c_det;
}

std::vector<double> features(const CostSample& s, InputSet inputs) {
  std::vector<double> x;
  if (inputs == InputSet::D) return {s.c_det};
  if (s.c_members.empty()) throw EmptyVector("sample '" + s.flight_id + "' has no member costs");
  if (inputs == InputSet::DS) x.push_back(s.c_det);
  std::vector<double> sorted(s.c_members);
  std::sort(sorted.begin(), sorted.end());
  x.insert(x.end(), sorted.begin(), sorted.end());
  double mu = stats::mean(sorted);
  x.push_back(mu);
  x.push_back(sorted.size() > 1 ? stats::stddev(sorted) : 0.0);
  if (inputs == InputSet::DS) x.push_back(s.c_det - mu);
  return x;
}

Regressor train(const RegressorSpec& spec, std::span<const CostSample> samples) {
  check_dataset(samples);
  Regressor out;
  out.model_ = std::make_unique<Regressor::Model>();
  out.model_->spec = spec;
  if (spec.family == Family::MeanBaseline) return out;

  std::vector<std::vector<double>> X;
  std::vector<double> r;
  X.reserve(samples.size());
  for (const auto& s : samples) {
    X.push_back(features(s, spec.inputs));
    r.push_back(s.c_actual - reference_estimate(s, spec.inputs));
  }
  if (spec.family == Family::LinearRidge) {
    double lambda = hyper(spec, "lambda", 1.0);
    if (!(lambda >= 0.0)) throw InvalidSpec("ridge lambda must be >= 0");
    out.model_->fit = fit_ridge(X, r, lambda);
  } else {
    out.model_->fit = fit_trees(X, r, spec);
  }
  return out;
}

double predict(const Regressor& r, const CostSample& s) { return r.predict(s); }

std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidSpec("need at least 2 folds");
  if (n < folds) throw TooFewSamples(std::to_string(n) + " samples cannot fill " + std::to_string(folds) + " folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0xf01d}));
  seeded_shuffle(idx, rng);
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t p = 0; p < n; ++p) out[p % folds].push_back(idx[p]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

CVReport cross_validate(std::span<const CostSample> dataset, std::span<const RegressorSpec> specs,
                        std::size_t folds, std::uint64_t seed) {
  check_dataset(dataset);
  auto parts = fold_partition(dataset.size(), folds, seed);
  CVReport rep;
  rep.folds = folds;
  rep.seed = seed;
  rep.n_samples = dataset.size();
  rep.fold_of.assign(dataset.size(), 0);
  for (std::size_t f = 0; f < folds; ++f)
    for (auto i : parts[f]) rep.fold_of[i] = f;

  for (const auto& spec : specs) {
    SpecResult res;
    res.spec = spec;
    res.predictions.assign(dataset.size(), 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<CostSample> train_set;
      for (std::size_t i = 0; i < dataset.size(); ++i)
        if (rep.fold_of[i] != f) train_set.push_back(dataset[i]);
      auto model = train(spec, train_set);
      std::vector<double> err;
      for (auto i : parts[f]) {
        res.predictions[i] = model.predict(dataset[i]);
        err.push_back(std::abs(dataset[i].c_actual - res.predictions[i]));
      }
      res.fold_mae.push_back(stats::mean(err));
    }
    std::vector<double> abs_err, sq_err;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      double e = dataset[i].c_actual - res.predictions[i];
      abs_err.push_back(std::abs(e));
      sq_err.push_back(e * e);
    }
    res.mae = stats::order_free_sum(abs_err) / static_cast<double>(abs_err.size());
    res.rmse = std::sqrt(stats::order_free_sum(sq_err) / static_cast<double>(sq_err.size()));
    rep.results.push_back(std::move(res));
  }
  std::stable_sort(rep.results.begin(), rep.results.end(),
                   [](const SpecResult& a, const SpecResult& b) { return a.mae < b.mae; });
  return rep;
}

std::vector<RegressorSpec> default_regressor_specs(std::uint64_t seed) {
  std::vector<RegressorSpec> out;
  for (auto in : {InputSet::D, InputSet::S, InputSet::DS}) {
    out.push_back({in, Family::MeanBaseline, {}, seed});
    out.push_back({in, Family::LinearRidge, {{"lambda", 1.0}}, seed});
    out.push_back({in, Family::TreeEnsemble,
                   {{"n_trees", 200}, {"learning_rate", 0.05}, {"max_depth", 3}, {"min_leaf", 5}, {"subsample", 0.8}},
                   seed});
  }
  return out;
}

std::string dataset_csv(std::span<const CostSample> data) {
  std::size_t n = data.empty() ? 0 : data.front().c_members.size();
  std::ostringstream os;
  os << "flight_id,C_A,C_D";
  for (std::size_t k = 1; k <= n; ++k) os << ",C_S" << k;
  os << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& s : data) {
    if (s.c_members.size() != n) throw DimensionMismatch("ragged member vectors in dataset");
    os << s.flight_id << ',' << num(s.c_actual) << ',' << num(s.c_det);
    for (double c : s.c_members) os << ',' << num(c);
    os << '\n';
  }
  return os.str();
}

void write_dataset_csv(std::span<const CostSample> data, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << dataset_csv(data);
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<CostSample> read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw FormatError(0, "empty dataset file " + path.string());
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  auto header = split(line);
  if (header.size() < 4 || header[0] != "flight_id" || header[1] != "C_A" || header[2] != "C_D")
    throw FormatError(0, "dataset header must be flight_id,C_A,C_D,C_S1..");
  std::vector<CostSample> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw FormatError(lineno, "line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                    " columns, header has " + std::to_string(header.size()));
    CostSample s;
    s.flight_id = cells[0];
    try {
      s.c_actual = std::stod(cells[1]);
      s.c_det = std::stod(cells[2]);
      for (std::size_t k = 3; k < cells.size(); ++k) s.c_members.push_back(std::stod(cells[k]));
    } catch (const std::exception&) {
      throw FormatError(lineno, "non-numeric cost on line " + std::to_string(lineno));
    }
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json to_json(const CVReport& r) {
  nlohmann::json res = nlohmann::json::array();
  for (const auto& s : r.results) {
    res.push_back({{"model", s.spec.label()},
                   {"family", to_string(s.spec.family)},
                   {"inputs", to_string(s.spec.inputs)},
                   {"hyper", s.spec.hyper},
                   {"seed", s.spec.seed},
                   {"mae", s.mae},
                   {"rmse", s.rmse},
                   {"fold_mae", s.fold_mae}});
  }
  return {{"folds", r.folds}, {"seed", r.seed}, {"n_samples", r.n_samples}, {"results", res}};
}

std::string format_cv_table(const CVReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu-fold cross-validation over %zu flights (seed %llu)\n", r.folds, r.n_samples,
                static_cast<unsigned long long>(r.seed));
  os << buf;
  std::snprintf(buf, sizeof buf, "%-4s %-22s %12s %12s\n", "rank", "model", "MAE", "RMSE");
  os << buf;
  for (std::size_t i = 0; i < r.results.size(); ++i) {
    const auto& s = r.results[i];
    std::snprintf(buf, sizeof buf, "%-4zu %-22s %12.2f %12.2f\n", i + 1, s.spec.label().c_str(), s.mae, s.rmse);
    os << buf;
  }
  return os.str();
}

}  // namespace ensplan::predict
