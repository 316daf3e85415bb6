#include "puma/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace puma {

namespace {

constexpr double kNormalizationTol = 1e-12;

TabularDistribution finish(int length, Vocab vocab,
                           std::map<Sequence, double> rows) {
  double total = 0.0;
  for (const auto& [seq, w] : rows) total += w;
  if (total <= 0.0)
    throw ContractViolation("distribution has no positive mass");

  TabularDistribution dist;
  dist.length = length;
  dist.vocab = vocab;
  dist.sequences.reserve(rows.size());
  dist.probs.reserve(rows.size());
  for (auto& [seq, w] : rows) {
    dist.sequences.push_back(seq);
    dist.probs.push_back(w / total);
  }
  return dist;
}

}  // namespace

double TabularDistribution::prob_of(const Sequence& x) const {
  auto it = std::lower_bound(sequences.begin(), sequences.end(), x);
  if (it == sequences.end() || *it != x) return 0.0;
  return probs[static_cast<std::size_t>(it - sequences.begin())];
}

double TabularDistribution::log_prob(const Sequence& x) const {
  const double p = prob_of(x);
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

TabularDistribution build_tabular(
    int length, int vocab_size,
    const std::vector<std::pair<Sequence, double>>& support) {
  if (length < 1) throw ContractViolation("build_tabular: length must be >= 1");
  Vocab vocab(vocab_size);
  if (!key_space_fits(vocab, length))
    throw ContractViolation("build_tabular: (|V|+1)^L exceeds 64-bit keys");
  if (support.empty())
    throw ContractViolation("build_tabular: empty support");

  std::map<Sequence, double> rows;
  for (const auto& [seq, w] : support) {
    if (static_cast<int>(seq.size()) != length)
      throw ContractViolation("build_tabular: support sequence length " +
                              std::to_string(seq.size()) + " != " +
                              std::to_string(length));
    validate_sequence(vocab, seq);
    if (!(w > 0.0))
      throw ContractViolation("build_tabular: weights must be positive");
    if (!rows.emplace(seq, w).second)
      throw ContractViolation("build_tabular: duplicate support sequence");
  }
  return finish(length, vocab, std::move(rows));
}

int ZmSpec::slot_position(int slot) const {
  if (permutation.empty()) return slot;
  return permutation[static_cast<std::size_t>(slot)];
}

std::vector<int> ZmSpec::latent_positions() const {
  std::vector<int> pos(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) pos[static_cast<std::size_t>(k)] = slot_position(k);
  return pos;
}

void ZmSpec::validate() const {
  if (m < 4 || m % 2 != 0)
    throw ContractViolation("ZmSpec: m must be even and >= 4");
  if (d < 1) throw ContractViolation("ZmSpec: d must be >= 1");
  if (!(eta > 0.0 && eta < 0.5))
    throw ContractViolation("ZmSpec: eta must lie in (0, 1/2)");
  if (theta != 0 && theta != delta())
    throw ContractViolation("ZmSpec: theta must be 0 or m/2");
  if (!permutation.empty()) {
    if (static_cast<int>(permutation.size()) != d + 1)
      throw ContractViolation("ZmSpec: permutation must have d+1 entries");
    std::vector<bool> seen(static_cast<std::size_t>(d + 1), false);
    for (int p : permutation) {
      if (p < 0 || p > d || seen[static_cast<std::size_t>(p)])
        throw ContractViolation("ZmSpec: permutation is not a bijection");
      seen[static_cast<std::size_t>(p)] = true;
    }
  }
}

TabularDistribution build_zm(const ZmSpec& spec) {
  spec.validate();
  const int d = spec.d;
  const int m = spec.m;
  const double noise_other = spec.eta / (m - 1);
  const double latent_mass = std::pow(0.5, d);

  std::map<Sequence, double> rows;
  // Latent combos are pairs {0, delta} per slot; iterate them as bit masks.
  for (std::uint64_t bits = 0; bits < (1ull << d); ++bits) {
    int latent_sum = 0;
    Sequence seq(static_cast<std::size_t>(d + 1), 0);
    for (int k = 0; k < d; ++k) {
      const int u = (bits >> k) & 1 ? spec.delta() : 0;
      latent_sum += u;
      seq[static_cast<std::size_t>(spec.slot_position(k))] = u;
    }
    for (int e = 0; e < m; ++e) {
      const int y = ((spec.theta + latent_sum + e) % m + m) % m;
      seq[static_cast<std::size_t>(spec.observation_position())] = y;
      const double p = latent_mass * (e == 0 ? 1.0 - spec.eta : noise_other);
      rows[seq] += p;
    }
  }
  return finish(d + 1, Vocab(m), std::move(rows));
}

const Sequence& sample(const TabularDistribution& dist, Rng& rng) {
  const std::size_t i = rng.categorical(dist.probs);
  return dist.sequences[i];
}

std::vector<std::pair<Sequence, double>> enumerate(
    const TabularDistribution& dist) {
  std::vector<std::pair<Sequence, double>> rows;
  rows.reserve(dist.size());
  double total = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    rows.emplace_back(dist.sequences[i], dist.probs[i]);
    total += dist.probs[i];
  }
  if (std::abs(total - 1.0) > kNormalizationTol)
    throw ContractViolation("enumerate: probabilities drifted from 1");
  return rows;
}

}  // namespace puma
