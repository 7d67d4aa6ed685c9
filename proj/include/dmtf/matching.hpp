#pragma once

#include <array>
#include <vector>

#include "dmtf/gridworld.hpp"
#include "dmtf/tensor.hpp"

namespace dmtf::match {

struct GroundTruthItem {
  int action_class = -1;                 // -1 = no-item padding
  std::array<double, 2> attn{0.0, 0.0};  // modality target (audio, visual)

  bool empty() const { return action_class < 0; }
};

// One item per optimal first-action class; the modality target interpolates
// between audio-driven (far) and vision-driven (near): w_aud = min(1, d/d_max).
// Padded with no-item entries to num_slots; sets *truncated when the oracle
// offers more classes than slots.
std::vector<GroundTruthItem> build_gt_set(const std::vector<env::Action>& optimal_actions,
                                          int geodesic, double d_max, int num_slots,
                                          bool* truncated = nullptr);

// -1{c != no-item} * p(c) + 1{c != no-item} * mean-L1(attn targets); no-item
// entries cost 0 against any slot. class_probs must be a normalized
// distribution over num_classes entries (the last class is no-item).
double pair_cost(const GroundTruthItem& gt, const double* class_probs, int num_classes,
                 const double* slot_attn);

struct MatchResult {
  std::vector<int> perm;  // ground-truth index -> slot index (a bijection)
  double total_cost = 0.0;
};

// Globally optimal assignment on a square cost matrix (Kuhn-Munkres via
// shortest augmenting paths, O(N^3)); ties resolve to the lexicographically
// smallest permutation.
MatchResult hungarian(const std::vector<std::vector<double>>& cost);

struct MatchingLoss {
  nd::Tensor loss;  // differentiable scalar
  MatchResult match;
  double empty_fraction = 0.0;
};

// Assignment computed on detached costs; the loss is re-evaluated
// differentiably on the chosen pairs. Contributions are accumulated in
// value-sorted order so the result is bitwise invariant under slot
// permutations and ground-truth reordering.
MatchingLoss matching_loss(const std::vector<GroundTruthItem>& gt, const nd::Tensor& class_logits,
                           const nd::Tensor& slot_attn);

// Same loss with a pinned assignment; used by finite-difference harnesses.
nd::Tensor matching_loss_fixed(const std::vector<GroundTruthItem>& gt,
                               const nd::Tensor& class_logits, const nd::Tensor& slot_attn,
                               const std::vector<int>& perm);

}  // namespace dmtf::match
