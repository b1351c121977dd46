#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace oracle {

struct Exhaustive {
  double mean_same;
  double mean_diff;
  double delta;
};

// Mean cosine distance over every unordered pair of distinct examples,
// split by whether the labels agree.
inline Exhaustive all_pairs_delta(const std::vector<std::vector<double>>& embeddings,
                                  const std::vector<std::string>& labels) {
  auto cosdist = [](const std::vector<double>& u, const std::vector<double>& v) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      uv += u[i] * v[i];
      uu += u[i] * u[i];
      vv += v[i] * v[i];
    }
    return 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
  };
  double same = 0, diff = 0;
  int ns = 0, nd = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
      const double d = cosdist(embeddings[i], embeddings[j]);
      if (labels[i] == labels[j]) {
        same += d;
        ++ns;
      } else {
        diff += d;
        ++nd;
      }
    }
  same /= ns;
  diff /= nd;
  return {same, diff, diff - same};
}

}  // namespace oracle
