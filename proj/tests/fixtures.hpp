#pragma once

#include "puma/dist.hpp"

namespace puma::testing {

inline TabularDistribution two_point_uniform() {
  return build_tabular(2, 2, {{{0, 0}, 1.0}, {{1, 1}, 1.0}});
}

inline TabularDistribution three_point_asymmetric() {
  return build_tabular(2, 2, {{{0, 0}, 0.5}, {{0, 1}, 0.3}, {{1, 0}, 0.2}});
}

// Two sequences that agree on the last position; revealing it first or last
// depending on a hidden token is what the leaking forward process exploits.
inline TabularDistribution leak_pair() {
  return build_tabular(3, 2, {{{0, 0, 0}, 1.0}, {{1, 1, 0}, 1.0}});
}

inline TabularDistribution uniform_cube(int length, int vocab) {
  std::vector<std::pair<Sequence, double>> rows;
  std::vector<Token> x(static_cast<std::size_t>(length), 0);
  for (;;) {
    rows.push_back({Sequence(x.begin(), x.end()), 1.0});
    int i = length - 1;
    while (i >= 0 && ++x[static_cast<std::size_t>(i)] == vocab) {
      x[static_cast<std::size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
  }
  return build_tabular(length, vocab, rows);
}

inline ZmSpec zm_spec(int m, int d, double eta, int theta) {
  ZmSpec spec;
  spec.m = m;
  spec.d = d;
  spec.eta = eta;
  spec.theta = theta;
  return spec;
}

}  // namespace puma::testing
