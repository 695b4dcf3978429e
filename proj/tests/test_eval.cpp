#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "advface/architectures.hpp"
#include "advface/errors.hpp"
#include "advface/metrics.hpp"
#include "advface/rng.hpp"
#include "test_util.hpp"

using namespace advface;
using namespace advface::testing;

namespace {

EmbeddingModel one_pixel_model() {
  Tensor w({2, 1});
  w[0] = 1.0;
  Tensor b({2});
  b[1] = 1.0;
  return EmbeddingModel({1, 1, 1}, {Flatten{}, Dense{w, b}, L2Normalize{}});
}

EmbeddingModel small_model(std::uint64_t seed) {
  ToyArchitecture a;
  a.conv_channels = {3};
  a.kernel = 3;
  a.stride = 2;
  a.embedding_dim = 6;
  return build_toy_model({10, 10, 1}, a, seed);
}

MinPerturbationResult feasible_at(double eps) {
  MinPerturbationResult r;
  r.feasible = true;
  r.epsilon_star = eps;
  return r;
}

// Genuine pairs are small perturbations of a base image; impostors are
// unrelated images.
std::vector<FacePair> toy_pairs(std::size_t n, Rng& rng, double jitter = 12.0) {
  std::vector<FacePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor a = random_image({10, 10, 1}, rng);
    const bool same = i % 2 == 0;
    Tensor b = same ? a : random_image({10, 10, 1}, rng);
    if (same)
      for (auto& v : b.values()) v = std::clamp(v + rng.uniform(-jitter, jitter), 0.0, 255.0);
    pairs.push_back({a, b, same, {}});
  }
  return pairs;
}

}  // namespace

TEST_CASE("asr counts flips") {
  CHECK(asr(std::vector<bool>{true, true, false}) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(asr(std::vector<bool>{}), ConfigError);
}

TEST_CASE("asr of the identity attack on a separable set is zero and order-invariant") {
  const EmbeddingModel m = small_model(1);
  Rng rng(2);
  std::vector<FacePair> pairs = toy_pairs(12, rng, 0.0);
  const Calibration c = calibrate_threshold(m, pairs);
  REQUIRE(c.accuracy == 1.0);
  std::vector<Tensor> same;
  for (const auto& p : pairs) same.push_back(p.image);
  CHECK(asr(m, c.delta, pairs, same) == 0.0);

  std::vector<Tensor> adv;
  for (std::size_t i = 0; i < pairs.size(); ++i) adv.push_back(random_image({10, 10, 1}, rng));
  const double a = asr(m, c.delta, pairs, adv);
  std::reverse(pairs.begin(), pairs.end());
  std::reverse(adv.begin(), adv.end());
  CHECK(asr(m, c.delta, pairs, adv) == a);
  CHECK_THROWS_AS(asr(m, c.delta, pairs, std::span<const Tensor>(adv).first(3)), ConfigError);
}

TEST_CASE("normalized l2") {
  for (std::size_t d : {1u, 4u, 100u}) CHECK(normalized_l2(std::vector<double>(d, 1.0)) == doctest::Approx(1.0));
  CHECK(normalized_l2(std::vector<double>(5, 0.0)) == 0.0);
  CHECK(normalized_l2(std::vector<double>{3.0, 4.0}) == doctest::Approx(5.0 / std::sqrt(2.0)));
  CHECK_THROWS_AS(normalized_l2(std::vector<double>{}), ConfigError);
  CHECK(raw_epsilon(Norm::L2, 2.0, 16) == 8.0);
  CHECK(raw_epsilon(Norm::Linf, 2.0, 16) == 2.0);
}

TEST_CASE("curves") {
  const std::vector<MinPerturbationResult> twos(4, feasible_at(2.0));
  const RobustnessCurve flat = make_curve(twos, Goal::Dodging);
  REQUIRE(flat.points.size() == 1);
  CHECK(flat.asr_at(1.999) == 0.0);
  CHECK(flat.asr_at(2.0) == 1.0);

  const std::vector<MinPerturbationResult> three{feasible_at(3.0), feasible_at(1.0), feasible_at(2.0)};
  const RobustnessCurve c = make_curve(three, Goal::Dodging);
  REQUIRE(c.points.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(c.points[i].epsilon == i + 1.0);
    CHECK(c.points[i].asr == doctest::Approx((i + 1) / 3.0));
  }

  std::vector<MinPerturbationResult> mixed{feasible_at(1.0), feasible_at(5.0), MinPerturbationResult{}};
  const RobustnessCurve e = make_curve(mixed, Goal::Dodging, 255.0);
  CHECK(e.points.back().epsilon == 255.0);
  CHECK(e.points.back().asr == doctest::Approx(feasible_fraction(mixed)));
  CHECK_NOTHROW(check_curve(e, feasible_fraction(mixed)));
  CHECK_THROWS_AS(check_curve(e, 1.0), Error);
  CHECK_THROWS_AS(make_curve(std::vector<MinPerturbationResult>{}, Goal::Dodging), ConfigError);
}

TEST_CASE("curves are monotone and bounded for random multisets") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MinPerturbationResult> rs;
    const std::size_t n = 1 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i)
      rs.push_back(rng.bernoulli(0.8) ? feasible_at(std::round(rng.uniform(0.0, 10.0))) : MinPerturbationResult{});
    const RobustnessCurve c = make_curve(rs, Goal::Impersonation, kNormCeiling);
    CHECK_NOTHROW(check_curve(c, feasible_fraction(rs)));
    for (std::size_t i = 1; i < c.points.size(); ++i) CHECK(c.points[i].asr >= c.points[i - 1].asr);
  }
}

TEST_CASE("median") {
  CHECK(median({1.0, 2.0, 3.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK_THROWS_AS(median({}), ConfigError);
  std::vector<MinPerturbationResult> rs{feasible_at(1.0), MinPerturbationResult{}, MinPerturbationResult{}};
  CHECK(median_min_perturbation(rs) == kNormCeiling);
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + rng.below(20));
    for (auto& x : v) x = rng.uniform(-5.0, 5.0);
    const double m = median(v);
    CHECK(m >= *std::min_element(v.begin(), v.end()));
    CHECK(m <= *std::max_element(v.begin(), v.end()));
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    CHECK(median(v) == m);
  }
}

TEST_CASE("search grid doubles from a quarter unit up to the ceiling") {
  const std::vector<double> g = SearchGrid{}.points(Norm::Linf);
  REQUIRE(g.size() >= 4);
  CHECK(g[0] == 0.25);
  CHECK(g[1] == 0.5);
  CHECK(g[2] == 1.0);
  CHECK(g[3] == 2.0);
  CHECK(g.back() == kNormCeiling);
  CHECK(SearchGrid{}.points(Norm::L2)[0] == 0.0625);
}

TEST_CASE("an already misverified pair needs no perturbation") {
  const EmbeddingModel m = small_model(5);
  Rng rng(5);
  const Tensor a = random_image({10, 10, 1}, rng), b = random_image({10, 10, 1}, rng);
  const double d = feature_distance(m, a, b);
  const AttackContext ctx{m, d * 0.5, a, b};
  const MinPerturbationResult r = min_perturbation(ctx, AttackConfig{.method = Method::Bim}, Goal::Dodging, Norm::Linf);
  CHECK(r.feasible);
  CHECK(r.epsilon_star == 0.0);
}

TEST_CASE("min perturbation of the one-pixel model matches the closed form") {
  // D(x') = 2 - 2 / sqrt(1 + (x'/255)^2) against a black reference, so the
  // pixel must reach 255 * sqrt(1 / (1 - delta/2)^2 - 1).
  const EmbeddingModel m = one_pixel_model();
  const Tensor x({1, 1, 1}, 100.0), ref({1, 1, 1}, 0.0);
  for (double target : {113.7, 101.3, 187.2}) {
    const double t = target / 255.0;
    const double delta = 2.0 - 2.0 / std::sqrt(1.0 + t * t);
    const double eps0 = target - 100.0;
    const AttackContext ctx{m, delta, x, ref};
    for (Method method : {Method::Fgsm, Method::Bim}) {
      AttackConfig c;
      c.method = method;
      const MinPerturbationResult r = min_perturbation(ctx, c, Goal::Dodging, Norm::Linf);
      REQUIRE(r.feasible);
      const double width = r.upper - r.lower;
      CHECK(width <= *r.grid_hit / 1024.0 + 1e-12);
      CHECK(r.lower <= eps0 + 1e-9);
      CHECK(r.upper >= eps0 - 1e-9);
      CHECK(std::abs(r.epsilon_star - eps0) <= width);
    }
  }
}

TEST_CASE("min perturbation results certify their bracket") {
  const EmbeddingModel m = small_model(6);
  Rng rng(6);
  const std::vector<FacePair> pairs = toy_pairs(10, rng);
  const double threshold = calibrate_threshold(m, pairs).delta;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Goal goal = pairs[i].same_identity ? Goal::Dodging : Goal::Impersonation;
    for (Norm norm : {Norm::Linf, Norm::L2}) {
      AttackConfig c;
      c.method = Method::Mim;
      c.steps = 5;
      c.seed = derive_seed(7, i);
      const AttackContext ctx{m, threshold, pairs[i].image, pairs[i].reference};
      const MinPerturbationResult r = min_perturbation(ctx, c, goal, norm);
      if (!r.feasible) {
        CHECK(r.epsilon_star == kNormCeiling);
        continue;
      }
      const std::size_t dims = pairs[i].image.size();
      CHECK(run_attack(ctx, ThreatModel{goal, norm, raw_epsilon(norm, r.epsilon_star, dims)}, c).success);
      if (r.epsilon_star > 0.0) {
        CHECK_FALSE(run_attack(ctx, ThreatModel{goal, norm, raw_epsilon(norm, r.lower, dims)}, c).success);
        CHECK(r.trace.size() >= 11);
      }
    }
  }
}

TEST_CASE("min perturbation agrees with a dense linear scan") {
  const EmbeddingModel m = small_model(8);
  Rng rng(8);
  const std::vector<FacePair> pairs = toy_pairs(50, rng);
  const double threshold = calibrate_threshold(m, pairs).delta;
  std::size_t agree = 0, total = 0;
  for (const auto& p : pairs) {
    const Goal goal = p.same_identity ? Goal::Dodging : Goal::Impersonation;
    const AttackContext ctx{m, threshold, p.image, p.reference};
    AttackConfig c;
    c.method = Method::Fgsm;
    const MinPerturbationResult r = min_perturbation(ctx, c, goal, Norm::Linf);
    if (!r.feasible) {
      // Infeasible: the oracle must not find a successful budget either.
      bool any = false;
      for (double e = 0.0; e <= kNormCeiling && !any; e += 1.0)
        any = run_attack(ctx, ThreatModel{goal, Norm::Linf, e}, c).success;
      ++total;
      agree += !any;
      continue;
    }
    if (r.epsilon_star == 0.0) {
      ++total;
      agree += run_attack(ctx, ThreatModel{goal, Norm::Linf, 0.0}, c).success;
      continue;
    }
    const double w = r.upper - r.lower;
    double scan = kNormCeiling;
    for (double e = 0.0; e <= r.upper + w; e += w)
      if (run_attack(ctx, ThreatModel{goal, Norm::Linf, e}, c).success) {
        scan = e;
        break;
      }
    ++total;
    agree += std::abs(scan - r.epsilon_star) <= w + 1e-9;
  }
  MESSAGE("linear-scan agreement " << agree << "/" << total);
  CHECK(static_cast<double>(agree) >= 0.95 * static_cast<double>(total));
}

TEST_CASE("C&W min perturbation reports the normalised norm of its output") {
  const EmbeddingModel m = small_model(9);
  Rng rng(9);
  const std::vector<FacePair> pairs = toy_pairs(4, rng);
  const double threshold = calibrate_threshold(m, pairs).delta;
  AttackConfig c;
  c.cw_iters = 30;
  c.cw_search_steps = 3;
  const AttackContext ctx{m, threshold, pairs[0].image, pairs[0].reference};
  const MinPerturbationResult r = cw_min_perturbation(ctx, c, Goal::Dodging);
  const AttackOutcome o = cw(ctx, ThreatModel{Goal::Dodging, Norm::L2, 0.0}, c);
  CHECK(r.feasible == o.success);
  CHECK(r.epsilon_star == (o.success ? o.l2_normalized : kNormCeiling));
  c.method = Method::Cw;
  CHECK_THROWS_AS(min_perturbation(ctx, c, Goal::Dodging, Norm::L2), ConfigError);
}

TEST_CASE("transfer matrices") {
  const EmbeddingModel a = small_model(10), b = small_model(11);
  Rng rng(10);
  const std::vector<FacePair> pairs = toy_pairs(12, rng);
  const double ta = calibrate_threshold(a, pairs).delta, tb = calibrate_threshold(b, pairs).delta;
  const std::vector<NamedModel> models{{"a", &a, ta}, {"b", &b, tb}};
  const ThreatModel threat{Goal::Dodging, Norm::Linf, 6.0};
  AttackConfig c;
  c.method = Method::Mim;
  c.steps = 5;

  const TransferMatrix one = transfer_matrix(std::span(models).first(1), pairs, threat, c, 3, 1);
  REQUIRE(one.asr.size() == 1);
  const std::vector<Tensor> crafted = craft_all(models[0], pairs, threat, c, 3, 1);
  CHECK(one.asr[0][0] == asr(a, ta, pairs, crafted));

  // Independent white-box Asr with the same per-pair seeds.
  std::size_t flips = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    AttackConfig ci = c;
    ci.seed = derive_seed(3, i);
    const AttackOutcome o = run_attack(AttackContext{a, ta, pairs[i].image, pairs[i].reference}, threat, ci);
    const bool same = feature_distance(a, o.adversarial, pairs[i].reference) < ta;
    flips += same != pairs[i].same_identity;
  }
  CHECK(one.asr[0][0] == static_cast<double>(flips) / static_cast<double>(pairs.size()));

  const TransferMatrix two = transfer_matrix(models, pairs, threat, c, 3, 1);
  CHECK(two.names == std::vector<std::string>{"a", "b"});
  CHECK(two.asr[0][0] == one.asr[0][0]);
  CHECK(two.asr == transfer_matrix(models, pairs, threat, c, 3, 4).asr);
  for (const auto& row : two.asr)
    for (double v : row) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }

  // A zero budget is the identity attack: every entry is the target's natural error.
  const TransferMatrix id = transfer_matrix(models, pairs, ThreatModel{Goal::Dodging, Norm::Linf, 0.0}, c, 3, 1);
  std::vector<Tensor> clean;
  for (const auto& p : pairs) clean.push_back(p.image);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(id.asr[i][0] == asr(a, ta, pairs, clean));
    CHECK(id.asr[i][1] == asr(b, tb, pairs, clean));
  }

  const std::vector<NamedModel> missing{{"a", &a, ta}, {"x", &b, std::nullopt}};
  CHECK_THROWS_AS(transfer_matrix(missing, pairs, threat, c, 3, 1), ConfigError);
}

TEST_CASE("parallel_for covers every index once and propagates errors") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 5) throw ConfigError("boom");
                               }),
                  ConfigError);
}
