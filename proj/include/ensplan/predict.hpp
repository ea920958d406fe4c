#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ensplan::predict {

/// Cost of one flight seen through each weather source, kg-equivalent.
struct CostSample {
  std::string flight_id;
  double c_actual = 0.0;           // under the nowcast
  double c_det = 0.0;              // under the control member
  std::vector<double> c_members;   // under each perturbed member
};

enum class InputSet { D, S, DS };
enum class Family { MeanBaseline, LinearRidge, TreeEnsemble };

std::string to_string(InputSet s);
std::string to_string(Family f);
InputSet parse_input_set(const std::string& s);
Family parse_family(const std::string& s);

struct RegressorSpec {
  InputSet inputs = InputSet::D;
  Family family = Family::MeanBaseline;
  std::map<std::string, double> hyper;  // family-specific; see README
  std::uint64_t seed = 0;

  std::string label() const;  // e.g. "tree_ensemble(S)"
};

/// Arithmetic mean of the member costs. Throws EmptyVector.
double baseline_ensemble_cost(std::span<const double> c_members);

struct BaselineErrors {
  double eps_d = 0.0;  // C_A - C_D
  double eps_s = 0.0;  // C_A - mean(C_S)
};
BaselineErrors baseline_errors(const CostSample& s);

/// The estimate each input set gives without training: C_D for D, the member
/// mean for S, the mean over control and members for D+S.
double reference_estimate(const CostSample& s, InputSet inputs);

/// D: [C_D]. S: sorted member costs, their mean and std. D+S: C_D, the S
/// features, and C_D minus the member mean.
std::vector<double> features(const CostSample& s, InputSet inputs);

class Regressor {
 public:
  Regressor();
  ~Regressor();
  Regressor(Regressor&&) noexcept;
  Regressor& operator=(Regressor&&) noexcept;

  const RegressorSpec& spec() const;
  double predict(const CostSample& s) const;

  struct Model;

 private:
  friend Regressor train(const RegressorSpec&, std::span<const CostSample>);
  std::unique_ptr<Model> model_;
};

/// Trained models learn the correction to reference_estimate(). Throws
/// TooFewSamples (< 2) and DimensionMismatch (ragged member vectors).
Regressor train(const RegressorSpec& spec, std::span<const CostSample> samples);
double predict(const Regressor& r, const CostSample& s);

struct SpecResult {
  RegressorSpec spec;
  double mae = 0.0;
  double rmse = 0.0;
  std::vector<double> fold_mae;
  std::vector<double> predictions;  // out-of-fold, per sample
};

struct CVReport {
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  std::vector<std::size_t> fold_of;  // per sample
  std::vector<SpecResult> results;   // ascending MAE, ties keep input order
};

/// Seeded split into `folds` disjoint test sets covering every sample.
std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, std::size_t folds, std::uint64_t seed);

CVReport cross_validate(std::span<const CostSample> dataset, std::span<const RegressorSpec> specs,
                        std::size_t folds = 10, std::uint64_t seed = 0);

std::vector<RegressorSpec> default_regressor_specs(std::uint64_t seed = 0);

// CSV: flight_id,C_A,C_D,C_S1..C_SN
void write_dataset_csv(std::span<const CostSample> data, const std::filesystem::path& path);
std::vector<CostSample> read_dataset_csv(const std::filesystem::path& path);
std::string dataset_csv(std::span<const CostSample> data);

nlohmann::json to_json(const CVReport& r);
std::string format_cv_table(const CVReport& r);

}  // namespace ensplan::predict
