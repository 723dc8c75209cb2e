#include "flag/random.hpp"

#include <cmath>
#include <numbers>

FLAG_NAMESPACE_BEGIN

double Rng::normal(double mean, double stddev) {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

FLAG_NAMESPACE_END
