#include <doctest.h>

#include <cmath>

#include "puma/core.hpp"

using namespace puma;

namespace {
const Vocab kV2(2);
const Vocab kV4(4);
}  // namespace

TEST_CASE("partition_indices splits um/msk") {
  const Token m = kV2.mask();
  auto p = partition_indices(kV2, {m, m});
  CHECK(p.unmasked.empty());
  CHECK(p.masked == IndexSet{0, 1});

  p = partition_indices(kV2, {0, m, 1});
  CHECK(p.unmasked == IndexSet{0, 2});
  CHECK(p.masked == IndexSet{1});

  p = partition_indices(kV2, {1, 0});
  CHECK(p.masked.empty());
  CHECK(p.unmasked == IndexSet{0, 1});
}

TEST_CASE("apply_reveal") {
  const Token m = kV2.mask();
  CHECK(apply_reveal(kV2, {m, m}, 0, 0) == MaskedSequence{0, m});
  CHECK(apply_reveal(kV2, {0, m}, 1, 1) == MaskedSequence{0, 1});
  CHECK_THROWS_AS(apply_reveal(kV2, {0, m}, 0, 1), ContractViolation);
  CHECK_THROWS_AS(apply_reveal(kV2, {m, m}, 0, 7), ContractViolation);
  CHECK_THROWS_AS(apply_reveal(kV2, {m, m}, 2, 0), ContractViolation);
}

TEST_CASE("apply_reveal shrinks msk by one") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int length = 2 + static_cast<int>(rng.below(6));
    MaskedSequence z(static_cast<std::size_t>(length));
    for (auto& v : z)
      v = rng.bernoulli(0.6) ? kV4.mask()
                             : static_cast<Token>(rng.below(4));
    const IndexSet msk = masked_indices(kV4, z);
    if (msk.empty()) continue;
    const int i = msk[rng.below(msk.size())];
    const MaskedSequence z2 =
        apply_reveal(kV4, z, i, static_cast<Token>(rng.below(4)));
    CHECK(masked_indices(kV4, z2).size() == msk.size() - 1);
  }
}

TEST_CASE("iid_mask endpoints") {
  Rng rng(5);
  const Sequence x0{0, 1, 1, 0};
  CHECK(iid_mask(kV2, x0, 0.0, rng) == MaskedSequence(x0.begin(), x0.end()));
  const MaskedSequence full = iid_mask(kV2, x0, 1.0, rng);
  CHECK(fully_masked(kV2, full));
  CHECK_THROWS_AS(iid_mask(kV2, x0, 1.5, rng), ContractViolation);
  CHECK_THROWS_AS(iid_mask(kV2, x0, -0.1, rng), ContractViolation);
}

TEST_CASE("iid_mask pattern law at t=1/2") {
  Rng rng = Rng::stream(2024, "core/iid-half", 0);
  const Sequence x0{0, 1};
  const int n = 40000;
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const MaskedSequence z = iid_mask(kV2, x0, 0.5, rng);
    const int pattern = (kV2.is_mask(z[0]) ? 1 : 0) | (kV2.is_mask(z[1]) ? 2 : 0);
    ++counts[pattern];
  }
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  for (int pattern = 0; pattern < 4; ++pattern) {
    const double freq = static_cast<double>(counts[pattern]) / n;
    CHECK(std::abs(freq - 0.25) < 3.0 * sigma + 1e-12);
  }
}

TEST_CASE("iid_mask mask count is Binomial(L,t)") {
  // chi-square over counts 0..6, df = 6, critical value at p = 0.01
  const double kChi2Crit99Df6 = 16.811893829770927;
  Rng rng = Rng::stream(2024, "core/iid-binomial", 0);
  const double t = 0.35;
  const Sequence x0{0, 1, 0, 1, 0, 1};
  const int length = 6;
  const int n = 100000;
  std::vector<long> counts(static_cast<std::size_t>(length) + 1, 0);
  for (int i = 0; i < n; ++i) {
    const MaskedSequence z = iid_mask(kV2, x0, t, rng);
    ++counts[static_cast<std::size_t>(length - count_unmasked(kV2, z))];
  }
  double chi2 = 0.0;
  for (int k = 0; k <= length; ++k) {
    double binom = 1.0;
    for (int i = 0; i < k; ++i)
      binom *= static_cast<double>(length - i) / static_cast<double>(i + 1);
    const double expected =
        n * binom * std::pow(t, k) * std::pow(1.0 - t, length - k);
    const double diff = static_cast<double>(counts[static_cast<std::size_t>(k)]) - expected;
    chi2 += diff * diff / expected;
  }
  CHECK(chi2 < kChi2Crit99Df6);
}

TEST_CASE("pattern_probability") {
  const Token m = kV2.mask();
  const Vocab v3(3);
  const Token m3 = v3.mask();
  // one mask agreeing with x0 at t = 1/3: (2/3)^2 * (1/3)
  CHECK(pattern_probability(v3, {0, m3, 2}, {0, 1, 2}, 1.0 / 3.0) ==
        doctest::Approx(4.0 / 27.0).epsilon(1e-12));
  CHECK(pattern_probability(kV2, {1, m}, {0, 1}, 0.4) == 0.0);
  CHECK(pattern_probability(kV2, {m, m}, {0, 1}, 0.3) ==
        doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("pattern probabilities sum to one over all patterns") {
  const int length = 10;
  const Vocab v2(2);
  const Sequence x0(static_cast<std::size_t>(length), 1);
  const double t = 0.37;
  double total = 0.0;
  for (std::uint64_t pattern = 0; pattern < (1ull << length); ++pattern) {
    MaskedSequence z(x0.begin(), x0.end());
    for (int i = 0; i < length; ++i)
      if ((pattern >> i) & 1) z[static_cast<std::size_t>(i)] = v2.mask();
    total += pattern_probability(v2, z, x0, t);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("context keys round-trip") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int length = 1 + static_cast<int>(rng.below(9));
    MaskedSequence z(static_cast<std::size_t>(length));
    for (auto& v : z) v = static_cast<Token>(rng.below(5));  // vocab 4 + mask
    CHECK(key_to_state(kV4, length, context_key(kV4, z)) == z);
  }
  CHECK(key_space_fits(kV4, 16));
  CHECK_FALSE(key_space_fits(Vocab(1000000), 8));
}

TEST_CASE("time grid") {
  const TimeGrid grid(4);
  CHECK(grid.time(0) == 1.0);
  CHECK(grid.time(4) == 0.0);
  for (int j = 0; j < 4; ++j) CHECK(grid.time(j) > grid.time(j + 1));
  CHECK_THROWS_AS(TimeGrid(0), ContractViolation);
}

TEST_CASE("vocab basics") {
  CHECK_THROWS_AS(Vocab(1), ContractViolation);
  CHECK(kV4.mask() == 4);
  CHECK(kV4.is_token(3));
  CHECK_FALSE(kV4.is_token(4));
  CHECK(kV4.is_mask(4));
}
