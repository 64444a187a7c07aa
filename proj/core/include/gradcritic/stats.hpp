#pragma once

#include <vector>

namespace gradcritic {

double mean(const std::vector<double>& x);
// Unbiased (n-1) sample variance; 0 for fewer than two values.
double sample_variance(const std::vector<double>& x);
double standard_error(const std::vector<double>& x);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Two-sided Student-t interval for the mean at the given confidence.
Interval t_interval(const std::vector<double>& x, double confidence = 0.95);

struct PairedTTest {
  double mean_diff = 0.0;
  double t = 0.0;
  double p_one_sided = 1.0;
  int dof = 0;
};

// H1: mean(a - b) > 0.
PairedTTest paired_t_test_greater(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace gradcritic
