#include <doctest.h>

#include <cmath>
#include <map>

#include "fixtures.hpp"
#include "puma/dist.hpp"

using namespace puma;
using namespace puma::testing;

TEST_CASE("build_tabular normalizes and validates") {
  const TabularDistribution dist = two_point_uniform();
  CHECK(dist.size() == 2);
  CHECK(dist.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dist.prob_of({1, 1}) == doctest::Approx(0.5));
  CHECK(dist.prob_of({0, 1}) == 0.0);

  const TabularDistribution point = build_tabular(2, 2, {{{0, 1}, 2.5}});
  CHECK(point.size() == 1);
  CHECK(point.probs[0] == 1.0);

  CHECK_THROWS_AS(build_tabular(2, 2, {{{0, 0}, 1.0}, {{0, 0}, 1.0}}),
                  ContractViolation);
  CHECK_THROWS_AS(build_tabular(2, 2, {{{0, 0}, 0.0}}), ContractViolation);
  CHECK_THROWS_AS(build_tabular(2, 2, {{{0, 0, 1}, 1.0}}), ContractViolation);
  CHECK_THROWS_AS(build_tabular(2, 2, {{{0, 5}, 1.0}}), ContractViolation);
  CHECK_THROWS_AS(build_tabular(2, 2, {}), ContractViolation);
}

TEST_CASE("build_zm matches the generative law") {
  const TabularDistribution dist = build_zm(zm_spec(4, 1, 0.1, 0));
  CHECK(dist.length == 2);
  CHECK(dist.vocab.size == 4);
  // P(U=0, Y=0) = P(U=0) P(E=0) = 0.5 * 0.9
  CHECK(dist.prob_of({0, 0}) == doctest::Approx(0.45).epsilon(1e-12));
  // P(U=0, Y=1) = 0.5 * eta/3
  CHECK(dist.prob_of({0, 1}) == doctest::Approx(0.5 * 0.1 / 3).epsilon(1e-12));

  double total = 0.0;
  for (double p : dist.probs) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  // shifting theta by delta shifts Y by delta
  const TabularDistribution shifted = build_zm(zm_spec(4, 1, 0.1, 2));
  CHECK(shifted.prob_of({0, 2}) == doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("build_zm support size and latent marginals") {
  const TabularDistribution dist = build_zm(zm_spec(4, 2, 0.1, 0));
  CHECK(dist.size() <= 16);
  // each latent is exactly Uniform{0, 2}
  for (int latent : {0, 1}) {
    std::map<Token, double> marginal;
    for (std::size_t i = 0; i < dist.size(); ++i)
      marginal[dist.sequences[i][static_cast<std::size_t>(latent)]] +=
          dist.probs[i];
    CHECK(marginal.size() == 2);
    CHECK(marginal[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(marginal[2] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("build_zm honors the permutation") {
  ZmSpec spec = zm_spec(4, 2, 0.1, 0);
  spec.permutation = {2, 0, 1};  // U1 at index 2, U2 at index 0, Y at index 1
  CHECK(spec.observation_position() == 1);
  const TabularDistribution dist = build_zm(spec);
  // Y mod 2 == 0 because latents and theta are multiples of delta only when
  // E is even; latent positions only ever hold 0 or delta.
  for (const Sequence& x : dist.sequences) {
    CHECK((x[2] == 0 || x[2] == 2));
    CHECK((x[0] == 0 || x[0] == 2));
  }

  ZmSpec bad = spec;
  bad.permutation = {0, 0, 1};
  CHECK_THROWS_AS(build_zm(bad), ContractViolation);
  bad = spec;
  bad.m = 5;
  CHECK_THROWS_AS(build_zm(bad), ContractViolation);
  bad = spec;
  bad.eta = 0.6;
  CHECK_THROWS_AS(build_zm(bad), ContractViolation);
  bad = spec;
  bad.theta = 1;
  CHECK_THROWS_AS(build_zm(bad), ContractViolation);
}

TEST_CASE("sample respects support probabilities") {
  Rng rng = Rng::stream(7, "dist/sample", 0);
  const TabularDistribution point = build_tabular(2, 2, {{{1, 0}, 1.0}});
  for (int i = 0; i < 20; ++i) CHECK(sample(point, rng) == Sequence{1, 0});

  const TabularDistribution dist = two_point_uniform();
  const int n = 100000;
  int first = 0;
  for (int i = 0; i < n; ++i)
    if (sample(dist, rng) == dist.sequences[0]) ++first;
  const double sigma = std::sqrt(0.25 / n);
  CHECK(std::abs(static_cast<double>(first) / n - 0.5) < 3.0 * sigma);
}

TEST_CASE("sample reproduces the Z_m noise rate") {
  Rng rng = Rng::stream(7, "dist/zm-noise", 0);
  const TabularDistribution dist = build_zm(zm_spec(4, 1, 0.1, 0));
  const int n = 100000;
  int noisy = 0;
  for (int i = 0; i < n; ++i) {
    const Sequence& x = sample(dist, rng);
    if (((x[1] - x[0]) % 4 + 4) % 4 != 0) ++noisy;  // Y != U_1 means E != 0
  }
  const double sigma = std::sqrt(0.1 * 0.9 / n);
  CHECK(std::abs(static_cast<double>(noisy) / n - 0.1) < 3.0 * sigma);
}

TEST_CASE("enumerate is canonical and consistent with sampling") {
  const TabularDistribution dist = three_point_asymmetric();
  const auto rows = enumerate(dist);
  CHECK(rows.size() == 3);
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i - 1].first < rows[i].first);
  double total = 0.0;
  for (const auto& [seq, p] : rows) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng = Rng::stream(7, "dist/enumerate", 0);
  const int n = 60000;
  std::map<Sequence, int> counts;
  for (int i = 0; i < n; ++i) ++counts[sample(dist, rng)];
  for (const auto& [seq, p] : rows) {
    const double freq = static_cast<double>(counts[seq]) / n;
    const double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(freq - p) < 4.0 * sigma);
  }
}
