#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "puma/core.hpp"

namespace puma {

// Explicit finite distribution over length-L sequences. The support is stored
// sparsely (positive-probability sequences only) in lexicographic order, so
// exact oracles iterate the support and never the full V^L cube.
struct TabularDistribution {
  int length = 0;
  Vocab vocab{2};
  std::vector<Sequence> sequences;  // lexicographically sorted, distinct
  std::vector<double> probs;        // strictly positive, sums to 1

  std::size_t size() const { return sequences.size(); }

  // Probability of an exact sequence; 0 when outside the support.
  double prob_of(const Sequence& x) const;
  double log_prob(const Sequence& x) const;  // -inf outside the support
};

TabularDistribution build_tabular(
    int length, int vocab_size,
    const std::vector<std::pair<Sequence, double>>& support);

// Latents-and-observation family over Z_m: latents U_1..U_d i.i.d. uniform on
// {0, m/2}, noise E (0 with prob 1-eta, each nonzero value with prob
// eta/(m-1)), observation Y = theta + sum U_j + E (mod m). Slot k of
// (U_1,..,U_d,Y) lands at sequence index permutation[k]; the default is the
// identity with Y last.
struct ZmSpec {
  int m = 4;
  int d = 1;
  double eta = 0.1;
  int theta = 0;  // 0 or m/2
  std::vector<int> permutation;  // empty = identity

  bool operator==(const ZmSpec&) const = default;

  int length() const { return d + 1; }
  int delta() const { return m / 2; }
  int slot_position(int slot) const;  // sequence index of slot k
  int observation_position() const { return slot_position(d); }
  std::vector<int> latent_positions() const;
  void validate() const;
};

TabularDistribution build_zm(const ZmSpec& spec);

const Sequence& sample(const TabularDistribution& dist, Rng& rng);

// Full support as (sequence, probability) rows in canonical (lexicographic)
// order.
std::vector<std::pair<Sequence, double>> enumerate(
    const TabularDistribution& dist);

}  // namespace puma
