#include "gradcritic/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>

#include "gradcritic/errors.hpp"

namespace gradcritic {

double mean(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_variance(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double standard_error(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  return std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
}

Interval t_interval(const std::vector<double>& x, double confidence) {
  const double m = mean(x);
  if (x.size() < 2) return {m, m};
  boost::math::students_t dist(static_cast<double>(x.size() - 1));
  const double q = boost::math::quantile(boost::math::complement(dist, (1.0 - confidence) / 2.0));
  const double half = q * standard_error(x);
  return {m - half, m + half};
}

PairedTTest paired_t_test_greater(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw ConfigError("paired t-test needs at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  PairedTTest out;
  out.mean_diff = mean(d);
  out.dof = static_cast<int>(d.size()) - 1;
  const double se = standard_error(d);
  if (se == 0.0) {
    out.t = out.mean_diff > 0.0 ? std::numeric_limits<double>::infinity()
                                : (out.mean_diff < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0);
    out.p_one_sided = out.mean_diff > 0.0 ? 0.0 : (out.mean_diff < 0.0 ? 1.0 : 0.5);
    return out;
  }
  out.t = out.mean_diff / se;
  boost::math::students_t dist(static_cast<double>(out.dof));
  out.p_one_sided = boost::math::cdf(boost::math::complement(dist, out.t));
  return out;
}

}  // namespace gradcritic
