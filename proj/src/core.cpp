#include "puma/core.hpp"

#include <cmath>

namespace puma {

bool key_space_fits(const Vocab& vocab, int length) {
  const std::uint64_t base = static_cast<std::uint64_t>(vocab.size) + 1;
  std::uint64_t cap = 1;
  for (int i = 0; i < length; ++i) {
    if (cap > UINT64_MAX / base) return false;
    cap *= base;
  }
  return true;
}

std::uint64_t context_key(const Vocab& vocab, const MaskedSequence& z) {
  const std::uint64_t base = static_cast<std::uint64_t>(vocab.size) + 1;
  std::uint64_t key = 0;
  for (Token v : z) {
    if (!vocab.is_token(v) && !vocab.is_mask(v))
      throw ContractViolation("context_key: entry outside vocab+mask range");
    key = key * base + static_cast<std::uint64_t>(v);
  }
  return key;
}

MaskedSequence key_to_state(const Vocab& vocab, int length,
                            std::uint64_t key) {
  const std::uint64_t base = static_cast<std::uint64_t>(vocab.size) + 1;
  MaskedSequence z(length);
  for (int i = length - 1; i >= 0; --i) {
    z[i] = static_cast<Token>(key % base);
    key /= base;
  }
  return z;
}

void validate_sequence(const Vocab& vocab, const Sequence& x) {
  for (Token v : x) {
    if (!vocab.is_token(v))
      throw ContractViolation("sequence entry " + std::to_string(v) +
                              " outside vocab of size " +
                              std::to_string(vocab.size));
  }
}

void validate_masked(const Vocab& vocab, const MaskedSequence& z) {
  for (Token v : z) {
    if (!vocab.is_token(v) && !vocab.is_mask(v))
      throw ContractViolation("masked entry " + std::to_string(v) +
                              " outside vocab+mask range");
  }
}

Partition partition_indices(const Vocab& vocab, const MaskedSequence& z) {
  Partition p;
  for (int i = 0; i < static_cast<int>(z.size()); ++i) {
    if (vocab.is_mask(z[i]))
      p.masked.push_back(i);
    else
      p.unmasked.push_back(i);
  }
  return p;
}

IndexSet masked_indices(const Vocab& vocab, const MaskedSequence& z) {
  IndexSet msk;
  for (int i = 0; i < static_cast<int>(z.size()); ++i)
    if (vocab.is_mask(z[i])) msk.push_back(i);
  return msk;
}

int count_unmasked(const Vocab& vocab, const MaskedSequence& z) {
  int n = 0;
  for (Token v : z)
    if (!vocab.is_mask(v)) ++n;
  return n;
}

bool fully_masked(const Vocab& vocab, const MaskedSequence& z) {
  for (Token v : z)
    if (!vocab.is_mask(v)) return false;
  return true;
}

bool fully_unmasked(const Vocab& vocab, const MaskedSequence& z) {
  for (Token v : z)
    if (vocab.is_mask(v)) return false;
  return true;
}

MaskedSequence apply_reveal(const Vocab& vocab, const MaskedSequence& z, int i,
                            Token v) {
  if (i < 0 || i >= static_cast<int>(z.size()))
    throw ContractViolation("apply_reveal: index out of range");
  if (!vocab.is_mask(z[i]))
    throw ContractViolation("apply_reveal: position " + std::to_string(i) +
                            " is already unmasked");
  if (!vocab.is_token(v))
    throw ContractViolation("apply_reveal: token " + std::to_string(v) +
                            " outside vocab");
  MaskedSequence out = z;
  out[i] = v;
  return out;
}

MaskedSequence iid_mask(const Vocab& vocab, const Sequence& x0, double t,
                        Rng& rng) {
  if (!(t >= 0.0 && t <= 1.0))
    throw ContractViolation("iid_mask: t must lie in [0,1]");
  MaskedSequence z(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i)
    z[i] = rng.bernoulli(t) ? vocab.mask() : x0[i];
  return z;
}

double pattern_probability(const Vocab& vocab, const MaskedSequence& z,
                           const Sequence& x0, double t) {
  if (z.size() != x0.size())
    throw ContractViolation("pattern_probability: length mismatch");
  int unmasked = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (vocab.is_mask(z[i])) continue;
    if (z[i] != x0[i]) return 0.0;
    ++unmasked;
  }
  const int masked = static_cast<int>(z.size()) - unmasked;
  return std::pow(1.0 - t, unmasked) * std::pow(t, masked);
}

}  // namespace puma
