#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ensplan::stats {

double mean(std::span<const double> x);

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(std::span<const double> x);

/// Sum of the values taken in ascending order, so the result does not
/// depend on the order the values arrive in.
double order_free_sum(std::span<const double> x);

double normal_cdf(double x);

/// Inverse standard normal CDF. p in (0, 1).
double normal_quantile(double p);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// Linear-interpolation quantile (Hyndman–Fan type 7) of unsorted data.
double quantile(std::span<const double> x, double q);

struct BoxStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double whisker_low = 0.0;   // smallest value >= q1 - 1.5 IQR
  double whisker_high = 0.0;  // largest value <= q3 + 1.5 IQR
  std::vector<double> outliers;
};

BoxStats box_stats(std::span<const double> x);

struct PairedTTest {
  std::size_t n = 0;
  double mean_difference = 0.0;
  double sd_difference = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 0.0;
};

/// t = mean(d) / (sd(d) / sqrt(n)) on the differences d. Throws NoVariance
/// when sd(d) is zero and TooFewSamples below two values.
PairedTTest paired_t_test(std::span<const double> differences);

struct Histogram {
  std::vector<double> edges;      // n_bins + 1
  std::vector<double> densities;  // integrate to 1
  std::vector<std::size_t> counts;
};

/// Equal-width bins spanning [min, max]. When all values coincide a single
/// unit-width bin centred on the value is used.
Histogram histogram(std::span<const double> values, std::size_t n_bins);

}  // namespace ensplan::stats
