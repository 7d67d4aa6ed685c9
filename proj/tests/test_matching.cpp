#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "dmtf/errors.hpp"
#include "dmtf/matching.hpp"
#include "dmtf/rng.hpp"

using namespace dmtf;
using namespace dmtf::match;
using nd::Tensor;

namespace {

// exhaustive oracle: enumerate all permutations in lexicographic order
MatchResult brute_force(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  MatchResult best;
  best.total_cost = 1e300;
  do {
    double total = 0;
    for (int i = 0; i < n; ++i) total += cost[i][perm[i]];
    if (total < best.total_cost) {
      best.total_cost = total;
      best.perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Tensor random_tensor(nd::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(static_cast<size_t>(nd::shape_size(shape)));
  for (double& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(d));
}

std::vector<GroundTruthItem> random_gt(Rng& rng, int n) {
  std::vector<env::Action> actions;
  const int real = 1 + rng.index(std::min(4, n));
  for (int i = 0; i < real; ++i) actions.push_back(static_cast<env::Action>(i));
  return build_gt_set(actions, rng.index(12), 12.0, n);
}

}  // namespace

TEST_CASE("build_gt_set: padding, heuristic endpoints, truncation") {
  {
    auto gt = build_gt_set({env::Action::MoveForward}, 6, 12.0, 4);
    REQUIRE(gt.size() == 4);
    CHECK(gt[0].action_class == 0);
    CHECK(gt[0].attn[0] == 0.5);
    CHECK(gt[0].attn[1] == 0.5);
    for (int i = 1; i < 4; ++i) CHECK(gt[i].empty());
  }
  {
    auto gt = build_gt_set({env::Action::Stop}, 0, 12.0, 2);
    CHECK(gt[0].action_class == static_cast<int>(env::Action::Stop));
    CHECK(gt[0].attn[0] == 0.0);  // adjacent: vision-driven
    CHECK(gt[0].attn[1] == 1.0);
  }
  {
    auto gt = build_gt_set({env::Action::MoveForward}, 12, 12.0, 2);
    CHECK(gt[0].attn[0] == 1.0);  // at d_max: audio-driven
    CHECK(gt[0].attn[1] == 0.0);
  }
  {
    bool truncated = false;
    auto gt = build_gt_set({env::Action::TurnLeft, env::Action::TurnRight}, 3, 12.0, 1,
                           &truncated);
    CHECK(truncated);
    REQUIRE(gt.size() == 1);
    CHECK(gt[0].action_class == static_cast<int>(env::Action::TurnLeft));
  }
}

TEST_CASE("pair_cost: endpoints and hand-evaluated case") {
  GroundTruthItem gt{0, {0.3, 0.7}};
  {
    double probs[5] = {1, 0, 0, 0, 0};
    double attn[2] = {0.3, 0.7};
    CHECK(pair_cost(gt, probs, 5, attn) == -1.0);
  }
  {
    GroundTruthItem none;
    double probs[5] = {0.2, 0.2, 0.2, 0.2, 0.2};
    double attn[2] = {0.9, 0.1};
    CHECK(pair_cost(none, probs, 5, attn) == 0.0);
  }
  {
    double probs[5] = {0.5, 0.2, 0.1, 0.1, 0.1};
    double attn[2] = {0.5, 0.9};  // componentwise |a - attn| = 0.2
    CHECK(pair_cost(gt, probs, 5, attn) == doctest::Approx(-0.3).epsilon(1e-12));
  }
  {
    double probs[5] = {0.9, 0.9, 0.0, 0.0, 0.0};  // not normalized
    double attn[2] = {0.5, 0.5};
    CHECK_THROWS_AS(pair_cost(gt, probs, 5, attn), NumericError);
  }
}

TEST_CASE("hungarian: trivial and hand cases") {
  {
    MatchResult r = hungarian({{3.5}});
    CHECK(r.perm == std::vector<int>{0});
    CHECK(r.total_cost == 3.5);
  }
  {
    MatchResult r = hungarian({{1, 2}, {2, 1}});
    CHECK(r.perm == std::vector<int>{0, 1});
    CHECK(r.total_cost == 2.0);
  }
  {
    // fully tied costs resolve to the lexicographically smallest permutation
    MatchResult r = hungarian({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
    CHECK(r.perm == std::vector<int>{0, 1, 2});
  }
  CHECK_THROWS_AS(hungarian({{1.0, 2.0}}), ShapeError);
  CHECK_THROWS_AS(hungarian({{1.0, std::nan("")}, {1.0, 2.0}}), NumericError);
}

TEST_CASE("hungarian: matches brute force on random matrices") {
  Rng rng(404);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + rng.index(4);  // up to 5x5
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost)
      for (double& v : row) v = rng.uniform(-1.0, 1.0);
    MatchResult got = hungarian(cost);
    MatchResult expect = brute_force(cost);
    CHECK(got.total_cost == expect.total_cost);
    CHECK(got.perm == expect.perm);
  }
}

TEST_CASE("hungarian: lexicographic tie-break matches brute force on integer ties") {
  Rng rng(405);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + rng.index(3);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost)
      for (double& v : row) v = static_cast<double>(rng.index(3));  // many ties
    MatchResult got = hungarian(cost);
    MatchResult expect = brute_force(cost);
    CHECK(got.total_cost == expect.total_cost);
    CHECK(got.perm == expect.perm);  // next_permutation scans lexicographically
  }
}

TEST_CASE("matching_loss: all-empty ground truth gives zero loss and zero gradient") {
  Rng rng(500);
  Tensor logits = random_tensor({3, 5}, rng);
  Tensor attn_raw = random_tensor({3, 2}, rng);
  logits.set_requires_grad(true);
  {
    nd::GradTape tape;
    Tensor attn = nd::sigmoid(random_tensor({3, 2}, rng));
    std::vector<GroundTruthItem> gt(3);
    MatchingLoss ml = matching_loss(gt, logits, attn);
    CHECK(ml.loss.value() == 0.0);
    CHECK(ml.empty_fraction == 1.0);
    Tensor total = nd::add(ml.loss, nd::sum_all(nd::mul(logits, nd::Tensor::zeros({3, 5}))));
    tape.backward(total);
  }
  for (double g : logits.grad()) CHECK(g == 0.0);
}

TEST_CASE("matching_loss: near-perfect slots approach -(non-empty count)") {
  std::vector<GroundTruthItem> gt;
  gt.push_back({0, {0.25, 0.75}});
  gt.push_back({3, {0.25, 0.75}});
  gt.push_back(GroundTruthItem{});
  std::vector<double> logits(3 * 5, 0.0);
  logits[0 * 5 + 0] = 60.0;  // slot 0 predicts class 0
  logits[1 * 5 + 3] = 60.0;  // slot 1 predicts class 3
  logits[2 * 5 + 4] = 60.0;  // slot 2 predicts the no-item class
  // slot attn exactly at the target via logit(0.25) / logit(0.75)
  const double l025 = std::log(0.25 / 0.75);
  const double l075 = std::log(0.75 / 0.25);
  std::vector<double> attn_logits(3 * 2);
  for (int i = 0; i < 3; ++i) {
    attn_logits[i * 2 + 0] = l025;
    attn_logits[i * 2 + 1] = l075;
  }
  MatchingLoss ml = matching_loss(gt, Tensor::from_data({3, 5}, logits),
                                  nd::sigmoid(Tensor::from_data({3, 2}, attn_logits)));
  CHECK(ml.loss.value() == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(ml.match.perm[0] == 0);
  CHECK(ml.match.perm[1] == 1);
}

TEST_CASE("matching_loss: bitwise invariant under slot permutation and gt reorder") {
  Rng rng(600);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + rng.index(5);
    std::vector<GroundTruthItem> gt = random_gt(rng, n);
    Tensor logits = random_tensor({n, 5}, rng, -2.0, 2.0);
    Tensor attn = nd::sigmoid(random_tensor({n, 2}, rng, -2.0, 2.0));
    const double base = matching_loss(gt, logits, attn).loss.value();

    // permute prediction slots
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    std::vector<double> pl(static_cast<size_t>(n) * 5), pa(static_cast<size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
      std::memcpy(pl.data() + static_cast<size_t>(i) * 5,
                  logits.data().data() + static_cast<size_t>(perm[i]) * 5, 5 * sizeof(double));
      std::memcpy(pa.data() + static_cast<size_t>(i) * 2,
                  attn.data().data() + static_cast<size_t>(perm[i]) * 2, 2 * sizeof(double));
    }
    const double permuted =
        matching_loss(gt, Tensor::from_data({n, 5}, pl), Tensor::from_data({n, 2}, pa))
            .loss.value();
    CHECK(std::memcmp(&base, &permuted, sizeof(double)) == 0);

    // reorder ground-truth items
    std::vector<GroundTruthItem> gt2 = gt;
    for (int i = n - 1; i > 0; --i) std::swap(gt2[i], gt2[rng.index(i + 1)]);
    const double reordered = matching_loss(gt2, logits, attn).loss.value();
    CHECK(std::memcmp(&base, &reordered, sizeof(double)) == 0);
  }
}

TEST_CASE("matching_loss: gradient matches finite differences with the assignment pinned") {
  Rng rng(700);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3;
    std::vector<GroundTruthItem> gt = random_gt(rng, n);
    Tensor logits = random_tensor({n, 5}, rng, -1.0, 1.0).set_requires_grad(true);
    Tensor attn_logits = random_tensor({n, 2}, rng, -1.0, 1.0).set_requires_grad(true);
    std::vector<int> perm;
    {
      nd::GradTape tape;
      MatchingLoss ml = matching_loss(gt, logits, nd::sigmoid(attn_logits));
      perm = ml.match.perm;
      tape.backward(ml.loss);
    }
    const double h = 1e-6;
    auto eval = [&]() {
      return matching_loss_fixed(gt, logits, nd::sigmoid(attn_logits), perm).value();
    };
    for (Tensor* t : {&logits, &attn_logits}) {
      for (size_t i = 0; i < t->data().size(); ++i) {
        const double saved = t->data()[i];
        t->data()[i] = saved + h;
        const double fp = eval();
        t->data()[i] = saved - h;
        const double fm = eval();
        t->data()[i] = saved;
        const double numeric = (fp - fm) / (2 * h);
        const double analytic = t->grad()[i];
        const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
        if (std::fabs(numeric) < 1e-9 && std::fabs(analytic) < 1e-9) continue;
        REQUIRE(std::fabs(analytic - numeric) / denom < 1e-4);
      }
    }
  }
}

TEST_CASE("matching_loss: raising a matched class probability never increases the loss") {
  Rng rng(800);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 4;
    std::vector<GroundTruthItem> gt = random_gt(rng, n);
    Tensor logits = random_tensor({n, 5}, rng, -1.0, 1.0);
    Tensor attn = nd::sigmoid(random_tensor({n, 2}, rng));
    MatchingLoss before = matching_loss(gt, logits, attn);
    int target = -1;
    for (int i = 0; i < n; ++i)
      if (!gt[i].empty()) target = i;
    if (target < 0) continue;
    const int slot = before.match.perm[target];
    Tensor bumped = Tensor::from_data(logits.shape(), logits.data());
    bumped.data()[static_cast<size_t>(slot) * 5 + gt[target].action_class] += 0.5;
    MatchingLoss after = matching_loss(gt, bumped, attn);
    CHECK(after.loss.value() <= before.loss.value() + 1e-12);
  }
}
