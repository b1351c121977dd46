#pragma once

#include <cmath>
#include <vector>

namespace oracle {

// Scalar Adam written from the textbook update rule.
struct ScalarAdam {
  double lr;
  double b1 = 0.9;
  double b2 = 0.999;
  double eps = 1e-8;
  double m = 0.0;
  double v = 0.0;
  int t = 0;

  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return x - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// Positions visited by Adam minimising 0.5 * a * (x - c)^2 from x0.
inline std::vector<double> quadratic_trajectory(double x0, double a, double c, double lr,
                                                int steps) {
  ScalarAdam adam{lr};
  std::vector<double> xs;
  double x = x0;
  for (int k = 0; k < steps; ++k) {
    x = adam.step(x, a * (x - c));
    xs.push_back(x);
  }
  return xs;
}

}  // namespace oracle
