#include "dmtf/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmtf/errors.hpp"

namespace dmtf::match {

using nd::Tensor;

std::vector<GroundTruthItem> build_gt_set(const std::vector<env::Action>& optimal_actions,
                                          int geodesic, double d_max, int num_slots,
                                          bool* truncated) {
  if (num_slots < 1) throw ShapeError("build_gt_set: num_slots must be >= 1");
  if (d_max <= 0.0) throw ShapeError("build_gt_set: d_max must be positive");
  const double w_aud = std::min(1.0, static_cast<double>(geodesic) / d_max);
  const std::array<double, 2> target{w_aud, 1.0 - w_aud};
  if (truncated != nullptr) {
    *truncated = static_cast<int>(optimal_actions.size()) > num_slots;
  }
  std::vector<GroundTruthItem> out;
  for (env::Action a : optimal_actions) {
    if (static_cast<int>(out.size()) == num_slots) break;
    out.push_back({static_cast<int>(a), target});
  }
  while (static_cast<int>(out.size()) < num_slots) out.push_back(GroundTruthItem{});
  return out;
}

double pair_cost(const GroundTruthItem& gt, const double* class_probs, int num_classes,
                 const double* slot_attn) {
  if (gt.empty()) return 0.0;
  if (gt.action_class >= num_classes - 1) {
    throw ShapeError("pair_cost: ground-truth class outside the action range");
  }
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) sum += class_probs[c];
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw NumericError("pair_cost: class probabilities are not normalized");
  }
  const double l_attn =
      (std::fabs(gt.attn[0] - slot_attn[0]) + std::fabs(gt.attn[1] - slot_attn[1])) / 2.0;
  return -class_probs[gt.action_class] + l_attn;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// shortest-augmenting-path assignment (minimization); returns the optimal
// total and fills row -> column
double solve_assignment(const std::vector<std::vector<double>>& a, std::vector<int>* row_to_col) {
  const int n = static_cast<int>(a.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  row_to_col->assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) (*row_to_col)[p[j] - 1] = j - 1;
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += a[i][(*row_to_col)[i]];
  return total;
}

}  // namespace

MatchResult hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) throw ShapeError("hungarian: empty cost matrix");
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != n) throw ShapeError("hungarian: cost matrix must be square");
    for (double c : row) {
      if (!std::isfinite(c)) throw NumericError("hungarian: non-finite cost entry");
    }
  }
  std::vector<int> sigma;
  const double best = solve_assignment(cost, &sigma);
  const double tol = 1e-9 * (1.0 + std::fabs(best));

  // fix rows greedily to the smallest column that still allows an optimal
  // completion; yields the lexicographically smallest optimal permutation
  MatchResult result;
  result.perm.assign(n, -1);
  std::vector<char> col_used(n, 0);
  double fixed_cost = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (col_used[j]) continue;
      double completion = 0.0;
      if (i + 1 < n) {
        std::vector<std::vector<double>> sub;
        std::vector<int> scratch;
        for (int r = i + 1; r < n; ++r) {
          std::vector<double> row;
          for (int c = 0; c < n; ++c) {
            if (!col_used[c] && c != j) row.push_back(cost[r][c]);
          }
          sub.push_back(std::move(row));
        }
        completion = solve_assignment(sub, &scratch);
      }
      if (fixed_cost + cost[i][j] + completion <= best + tol) {
        result.perm[i] = j;
        col_used[j] = 1;
        fixed_cost += cost[i][j];
        break;
      }
    }
    if (result.perm[i] < 0) {
      // numerically impossible; fall back to the base solution
      result.perm = sigma;
      break;
    }
  }
  result.total_cost = 0.0;
  for (int i = 0; i < n; ++i) result.total_cost += cost[i][result.perm[i]];
  return result;
}

namespace {

// differentiable per-pair terms under a given assignment, paired with their
// detached values for canonical ordering
std::vector<std::pair<double, Tensor>> pair_terms(const std::vector<GroundTruthItem>& gt,
                                                  const Tensor& probs, const Tensor& slot_attn,
                                                  const std::vector<int>& perm) {
  std::vector<std::pair<double, Tensor>> terms;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].empty()) continue;
    const int slot = perm[i];
    Tensor class_term = nd::neg(nd::select_element(probs, slot, gt[i].action_class));
    Tensor attn_term = nd::scale(
        nd::add(nd::abs_t(nd::add_scalar(nd::select_element(slot_attn, slot, 0), -gt[i].attn[0])),
                nd::abs_t(nd::add_scalar(nd::select_element(slot_attn, slot, 1), -gt[i].attn[1]))),
        0.5);
    Tensor term = nd::add(class_term, attn_term);
    terms.emplace_back(term.value(), term);
  }
  return terms;
}

Tensor sum_terms(std::vector<std::pair<double, Tensor>>& terms) {
  if (terms.empty()) return Tensor::scalar(0.0);
  std::stable_sort(terms.begin(), terms.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  Tensor total = terms[0].second;
  for (size_t i = 1; i < terms.size(); ++i) total = nd::add(total, terms[i].second);
  return total;
}

}  // namespace

MatchingLoss matching_loss(const std::vector<GroundTruthItem>& gt, const Tensor& class_logits,
                           const Tensor& slot_attn) {
  const int n = class_logits.rows();
  if (static_cast<int>(gt.size()) != n) {
    throw ShapeError("matching_loss: ground-truth set size must equal the slot count");
  }
  if (slot_attn.rows() != n || slot_attn.cols() != 2) {
    throw ShapeError("matching_loss: slot_attn must be [N x 2]");
  }
  const int num_classes = class_logits.cols();
  Tensor probs = nd::softmax_lastdim(class_logits);

  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      cost[i][j] = pair_cost(gt[i], probs.data().data() + static_cast<size_t>(j) * num_classes,
                             num_classes, slot_attn.data().data() + static_cast<size_t>(j) * 2);
    }
  }

  MatchingLoss out;
  out.match = hungarian(cost);
  int empties = 0;
  for (const GroundTruthItem& item : gt) empties += item.empty() ? 1 : 0;
  out.empty_fraction = static_cast<double>(empties) / n;

  auto terms = pair_terms(gt, probs, slot_attn, out.match.perm);
  out.loss = sum_terms(terms);
  return out;
}

Tensor matching_loss_fixed(const std::vector<GroundTruthItem>& gt, const Tensor& class_logits,
                           const Tensor& slot_attn, const std::vector<int>& perm) {
  if (perm.size() != gt.size()) throw ShapeError("matching_loss_fixed: permutation size mismatch");
  Tensor probs = nd::softmax_lastdim(class_logits);
  auto terms = pair_terms(gt, probs, slot_attn, perm);
  return sum_terms(terms);
}

}  // namespace dmtf::match
