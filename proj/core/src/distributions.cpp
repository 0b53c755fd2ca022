#include "fwe/distributions.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "fwe/error.hpp"

namespace fwe::dist {
namespace {

const boost::math::normal_distribution<double>& standard_normal() {
  static const boost::math::normal_distribution<double> n(0.0, 1.0);
  return n;
}

void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::invalid_argument, "probability outside [0, 1]");
}

}  // namespace

double normal_cdf(double z) {
  if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
  return boost::math::cdf(standard_normal(), z);
}

double normal_sf(double z) {
  if (std::isinf(z)) return z > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(standard_normal(), z));
}

double normal_isf(double p) {
  check_probability(p);
  if (p == 0.0) return std::numeric_limits<double>::infinity();
  if (p == 1.0) return -std::numeric_limits<double>::infinity();
  if (p == 0.5) return 0.0;
  return boost::math::quantile(boost::math::complement(standard_normal(), p));
}

double t_sf(double t, double df) {
  if (std::isinf(df)) return normal_sf(t);
  if (!(df > 0.0)) throw Error(Errc::invalid_argument, "degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  boost::math::students_t_distribution<double> d(df);
  return boost::math::cdf(boost::math::complement(d, t));
}

double t_isf(double p, double df) {
  if (std::isinf(df)) return normal_isf(p);
  if (!(df > 0.0)) throw Error(Errc::invalid_argument, "degrees of freedom must be positive");
  check_probability(p);
  if (p == 0.0) return std::numeric_limits<double>::infinity();
  if (p == 1.0) return -std::numeric_limits<double>::infinity();
  if (p == 0.5) return 0.0;
  boost::math::students_t_distribution<double> d(df);
  return boost::math::quantile(boost::math::complement(d, p));
}

double z_from_t(double t, double df) {
  if (std::isinf(df)) return t;
  const double p = t_sf(t, df);
  if (p > 0.0 && p < 1.0) return normal_isf(p);
  if (p >= 1.0) return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::infinity();
}

std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double level) {
  if (n == 0 || k > n) throw Error(Errc::invalid_argument, "binomial interval needs 0 <= k <= n, n >= 1");
  if (!(level > 0.0 && level < 1.0)) throw Error(Errc::invalid_argument, "confidence level must be in (0, 1)");
  const double alpha = 1.0 - level;
  const auto kd = static_cast<double>(k);
  const auto nd = static_cast<double>(n);
  double lo = 0.0;
  double hi = 1.0;
  if (k > 0) lo = boost::math::quantile(boost::math::beta_distribution<double>(kd, nd - kd + 1.0), alpha / 2.0);
  if (k < n) hi = boost::math::quantile(boost::math::beta_distribution<double>(kd + 1.0, nd - kd), 1.0 - alpha / 2.0);
  return {lo, hi};
}

double log_gamma(double x) { return boost::math::lgamma(x); }

}  // namespace fwe::dist
