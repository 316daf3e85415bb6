#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "puma/oracle.hpp"

using namespace puma;
using namespace puma::testing;

TEST_CASE("exact_posterior on the two-point fixture") {
  const TabularDistribution dist = two_point_uniform();
  const Token m = dist.vocab.mask();

  const Categorical c = exact_posterior(dist, {0, m}, 1);
  CHECK(c.probs[0] == 1.0);
  CHECK(c.probs[1] == 0.0);

  const Categorical u = exact_posterior(dist, {m, m}, 0);
  CHECK(u.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(u.probs[1] == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(exact_posterior(dist, {0, 1}, 0), ContractViolation);
  // (0,1) is outside the support, so conditioning on it is impossible
  CHECK_THROWS_AS(exact_posterior(dist, {m, 1}, 0), ImpossibleContext);
}

TEST_CASE("posterior_table basics") {
  const TabularDistribution dist = three_point_asymmetric();
  const Token m = dist.vocab.mask();

  CHECK(posterior_table(dist, {0, 1}).empty());

  // fully masked rows are the data marginals
  const PosteriorTable table = posterior_table(dist, {m, m});
  CHECK(table.indices == IndexSet{0, 1});
  CHECK(table.rows[0].probs[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(table.rows[0].probs[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(table.rows[1].probs[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(table.rows[1].probs[1] == doctest::Approx(0.3).epsilon(1e-12));

  // rows agree with exact_posterior
  for (int i : {0, 1}) {
    const Categorical c = exact_posterior(dist, {m, m}, i);
    for (std::size_t v = 0; v < c.probs.size(); ++v)
      CHECK(table.row_for(i).probs[v] == doctest::Approx(c.probs[v]));
  }
}

TEST_CASE("Z_m fully masked latent rows are uniform over {0, delta}") {
  const TabularDistribution dist = build_zm(zm_spec(4, 2, 0.1, 0));
  const MaskedSequence z(3, dist.vocab.mask());
  const PosteriorTable table = posterior_table(dist, z);
  for (int latent : {0, 1}) {
    const auto& row = table.row_for(latent).probs;
    CHECK(row[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(row[1] == 0.0);
    CHECK(row[2] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(row[3] == 0.0);
  }
}

TEST_CASE("confidence values") {
  CHECK(confidence({{0.25, 0.25, 0.25, 0.25}}) == 0.25);

  const double eta = 0.1;
  const TabularDistribution dist = build_zm(zm_spec(4, 2, eta, 0));
  const Token m = dist.vocab.mask();

  // all latents revealed: conf(Y) = 1 - eta
  const Categorical after = exact_posterior(dist, {0, 2, m}, 2);
  CHECK(std::abs(confidence(after) - (1.0 - eta)) < 1e-12);

  // at least one latent hidden: conf(Y) = (1-eta)/2 + eta/(2(m-1))
  const double pre = 0.5 * (1.0 - eta) + 0.5 * eta / 3.0;
  const Categorical hidden = exact_posterior(dist, {0, m, m}, 2);
  CHECK(std::abs(confidence(hidden) - pre) < 1e-9);
  const Categorical all_hidden = exact_posterior(dist, {m, m, m}, 2);
  CHECK(std::abs(confidence(all_hidden) - pre) < 1e-9);
  CHECK(pre < 0.5);
}

TEST_CASE("ground-truth confidence order on Z_m") {
  const TabularDistribution dist = build_zm(zm_spec(4, 2, 0.1, 0));
  const Token m = dist.vocab.mask();
  // every state with Y masked: latent confidences pin to 1/2 exactly
  const std::vector<MaskedSequence> states = {
      {m, m, m}, {0, m, m}, {2, m, m}, {m, 0, m}, {m, 2, m}};
  for (const MaskedSequence& z : states) {
    const PosteriorTable table = posterior_table(dist, z);
    for (std::size_t r = 0; r < table.size(); ++r) {
      if (table.indices[r] == 2) {
        CHECK(confidence(table.rows[r]) < 0.5);
      } else {
        CHECK(std::abs(confidence(table.rows[r]) - 0.5) < 1e-12);
      }
    }
  }
}

TEST_CASE("Z_m posterior collapse: strict latent subsets reveal nothing") {
  const TabularDistribution d0 = build_zm(zm_spec(4, 2, 0.1, 0));
  const TabularDistribution d1 = build_zm(zm_spec(4, 2, 0.1, 2));
  const Token m = d0.vocab.mask();
  // contexts revealing the empty set or one latent (both values)
  const std::vector<MaskedSequence> contexts = {
      {m, m, m}, {0, m, m}, {2, m, m}, {m, 0, m}, {m, 2, m}};
  for (const MaskedSequence& z : contexts) {
    const Categorical p0 = exact_posterior(d0, z, 2);
    const Categorical p1 = exact_posterior(d1, z, 2);
    for (std::size_t v = 0; v < p0.probs.size(); ++v)
      CHECK(std::abs(p0.probs[v] - p1.probs[v]) < 1e-12);
  }
  // with all latents revealed, the posteriors differ (identifiability)
  const Categorical q0 = exact_posterior(d0, {0, 0, m}, 2);
  const Categorical q1 = exact_posterior(d1, {0, 0, m}, 2);
  double tv = 0.0;
  for (std::size_t v = 0; v < q0.probs.size(); ++v)
    tv += std::abs(q0.probs[v] - q1.probs[v]);
  CHECK(tv > 0.5);
}

TEST_CASE("posterior is time-agnostic: conditional frequencies match at any t") {
  const TabularDistribution dist = three_point_asymmetric();
  const Token m = dist.vocab.mask();
  const MaskedSequence target{0, m};
  const Categorical oracle = exact_posterior(dist, target, 1);

  for (double t : {0.3, 0.7}) {
    Rng rng = Rng::stream(99, "oracle/time-agnostic", t == 0.3 ? 0 : 1);
    int hits = 0, zeros = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const Sequence& x0 = sample(dist, rng);
      const MaskedSequence z = iid_mask(dist.vocab, x0, t, rng);
      if (z != target) continue;
      ++hits;
      if (x0[1] == 0) ++zeros;
    }
    REQUIRE(hits > 1000);
    const double freq = static_cast<double>(zeros) / hits;
    const double sigma =
        std::sqrt(oracle.probs[0] * (1 - oracle.probs[0]) / hits);
    CHECK(std::abs(freq - oracle.probs[0]) < 4.0 * sigma);
  }
}

TEST_CASE("sampling the posterior never creates impossible contexts") {
  const TabularDistribution dist = build_zm(zm_spec(4, 2, 0.2, 0));
  Rng rng = Rng::stream(99, "oracle/consistency", 0);
  for (int run = 0; run < 1000; ++run) {
    MaskedSequence z(3, dist.vocab.mask());
    while (!masked_indices(dist.vocab, z).empty()) {
      const IndexSet msk = masked_indices(dist.vocab, z);
      const int i = msk[rng.below(msk.size())];
      const Categorical c = exact_posterior(dist, z, i);
      const Token v = static_cast<Token>(rng.categorical(c.probs));
      z = apply_reveal(dist.vocab, z, i, v);
    }
    CHECK(dist.prob_of(Sequence(z.begin(), z.end())) > 0.0);
  }
}

TEST_CASE("oracle cache returns the same tables") {
  const TabularDistribution dist = three_point_asymmetric();
  OracleCache cache(dist);
  const Token m = dist.vocab.mask();
  for (const MaskedSequence z :
       {MaskedSequence{m, m}, MaskedSequence{0, m}, MaskedSequence{m, m}}) {
    const PosteriorTable& cached = cache.table(z);
    const PosteriorTable fresh = posterior_table(dist, z);
    REQUIRE(cached.indices == fresh.indices);
    for (std::size_t r = 0; r < fresh.size(); ++r)
      for (std::size_t v = 0; v < fresh.rows[r].probs.size(); ++v)
        CHECK(cached.rows[r].probs[v] == fresh.rows[r].probs[v]);
  }
}
